"""Numpy building blocks with explicit backward passes."""

import math

import numpy as np

GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float) -> tuple[np.ndarray, tuple]:
    """Normalize over the last axis; returns output and backward cache."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layer_norm_backward(dy: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients with respect to input, scale and shift."""
    xhat, rstd, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def gelu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tanh-approximated GELU; also returns the tanh term for the backward pass."""
    t = np.tanh(GELU_C * (x + GELU_A * x**3))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(dy: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return dy * local


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))


def dropout_mask(rng: np.random.Generator | None, shape: tuple[int, ...], rate: float, dtype) -> np.ndarray | None:
    """Inverted-dropout multiplier, or ``None`` when dropout is off."""
    if rng is None or rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def matmul_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Weight gradient of ``y = x @ w`` with any number of leading axes."""
    return x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """``(B, T, E)`` to ``(B, H, T, d)``."""
    b, t, e = x.shape
    return x.reshape(b, t, n_heads, e // n_heads).transpose(0, 2, 1, 3)


def merge_heads(x: np.ndarray) -> np.ndarray:
    """``(B, H, T, d)`` to ``(B, T, E)``."""
    b, h, t, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * d)


def split_image_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """``(B, T, K, E)`` to ``(B, H, T, K, d)``."""
    b, t, k, e = x.shape
    return x.reshape(b, t, k, n_heads, e // n_heads).transpose(0, 3, 1, 2, 4)


def merge_image_heads(x: np.ndarray) -> np.ndarray:
    """``(B, H, T, K, d)`` to ``(B, T, K, E)``."""
    b, h, t, k, d = x.shape
    return x.transpose(0, 2, 3, 1, 4).reshape(b, t, k, h * d)
