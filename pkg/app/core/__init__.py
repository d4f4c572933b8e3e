"""Core application module."""

from app.core.config import Settings, load_settings, settings
from app.core.exceptions import AppError, ConfigError

__all__ = ["AppError", "ConfigError", "Settings", "load_settings", "settings"]
