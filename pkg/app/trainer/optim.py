"""Adam with warmup and inverse square-root decay."""

import math

import numpy as np

from app.trainer.schemas import TrainConfig


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """
    Learning rate of 1-based ``step``.

    Rises linearly to ``cfg.lr`` over the warmup, then decays as
    ``lr * sqrt(warmup / step)``.
    """
    if cfg.warmup_steps == 0:
        return cfg.lr / math.sqrt(step)
    if step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    return cfg.lr * math.sqrt(cfg.warmup_steps / step)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; returns the norm before clipping."""
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Bias-corrected Adam over a dict of named parameters, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.eps = cfg.eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
