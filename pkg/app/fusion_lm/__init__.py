"""Causal decoder with a visual knowledge fusion layer."""

from app.fusion_lm.models import ModelState, init_model, param_shapes
from app.fusion_lm.schemas import LayerActivations, ModelConfig, ProjMode, RetrievedImageSet
from app.fusion_lm.service import forward, loss_and_grads, next_token_logprobs, token_logprobs
from app.fusion_lm.storage import load_checkpoint, save_checkpoint

__all__ = [
    "LayerActivations",
    "ModelConfig",
    "ModelState",
    "ProjMode",
    "RetrievedImageSet",
    "forward",
    "init_model",
    "load_checkpoint",
    "loss_and_grads",
    "next_token_logprobs",
    "param_shapes",
    "save_checkpoint",
    "token_logprobs",
]
