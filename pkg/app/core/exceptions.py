"""Base exception for every domain error."""


class AppError(Exception):
    """Error carrying a human-readable detail and a process exit code."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(AppError):
    """Exception raised when the effective configuration is unusable."""

    exit_code = 2
