"""Forward and backward passes of the fusion decoder."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.fusion_lm import constants
from app.fusion_lm.exceptions import NonFiniteInput, ShapeMismatch
from app.fusion_lm.layers import (
    dropout_mask,
    gelu,
    gelu_backward,
    layer_norm,
    layer_norm_backward,
    log_softmax,
    matmul_grad,
    merge_heads,
    merge_image_heads,
    split_heads,
    split_image_heads,
)
from app.fusion_lm.models import ModelState
from app.fusion_lm.schemas import LayerActivations, ProjMode, RetrievedImageSet, stack_images

logger = logging.getLogger(__name__)

Images = RetrievedImageSet | Sequence[RetrievedImageSet | None] | None


@dataclass
class _Batch:
    tokens: np.ndarray  # (B, T)
    images: tuple[np.ndarray, np.ndarray] | None  # (B, T, K, E) vectors, (B, T, K) mask


def _prepare(model: ModelState, tokens, images: Images, min_len: int = 1) -> _Batch:
    cfg = model.config
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    if tokens.ndim != 2 or not np.issubdtype(tokens.dtype, np.integer):
        raise ShapeMismatch(f"tokens must be a 1-D or 2-D integer array, got shape {tokens.shape}")
    n_batch, n_pos = tokens.shape
    if not min_len <= n_pos <= cfg.max_seq:
        raise ShapeMismatch(f"sequence length {n_pos} outside [{min_len}, {cfg.max_seq}]")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
        raise ShapeMismatch(f"token ids must lie in [0, {cfg.vocab_size})")

    if images is None or isinstance(images, RetrievedImageSet):
        sets = [images] * n_batch
    else:
        sets = list(images)
    if len(sets) != n_batch:
        raise ShapeMismatch(f"{len(sets)} image sets for a batch of {n_batch}")
    for image_set in sets:
        if image_set is None:
            continue
        if image_set.n_positions != n_pos:
            raise ShapeMismatch(f"image set covers {image_set.n_positions} positions, sequence has {n_pos}")
        if image_set.k > cfg.num_images:
            raise ShapeMismatch(f"{image_set.k} image slots, model takes at most {cfg.num_images}")
        if image_set.k and image_set.dim != cfg.d_model:
            raise ShapeMismatch(f"image dimension {image_set.dim} differs from d_model {cfg.d_model}")
        if not np.isfinite(image_set.vectors).all():
            raise NonFiniteInput("retrieved image vectors")
    if not all(np.isfinite(p).all() for p in model.params.values()):
        raise NonFiniteInput("model parameters")

    stacked = stack_images(sets, n_pos, cfg.d_model)
    if stacked is not None:
        stacked = (stacked[0].astype(cfg.np_dtype), stacked[1])
    return _Batch(tokens=tokens.astype(np.int64), images=stacked)


def _image_projections(model: ModelState, prefix: str) -> tuple[np.ndarray, ...]:
    """Key/value weights and biases seen by the image slots."""
    p, mode = model.params, model.config.proj_mode
    if mode == ProjMode.IMAGE_SPECIFIC_WEIGHTS_AND_BIAS:
        wk, wv = p["fusion.wk_img"], p["fusion.wv_img"]
    else:
        wk, wv = p[prefix + "attn.wk"], p[prefix + "attn.wv"]
    if mode == ProjMode.SHARED_ALL:
        bk, bv = p[prefix + "attn.bk"], p[prefix + "attn.bv"]
    else:
        bk, bv = p["fusion.bk_img"], p["fusion.bv_img"]
    return wk, wv, bk, bv


def _attention(model: ModelState, prefix: str, h: np.ndarray, images, rng) -> tuple[np.ndarray, dict]:
    """
    Causal self-attention; with ``images`` the softmax of every query also
    spans that position's own image slots.
    """
    cfg, p = model.config, model.params
    n_pos = h.shape[1]
    scale = 1.0 / math.sqrt(cfg.head_dim)
    q = split_heads(h @ p[prefix + "attn.wq"] + p[prefix + "attn.bq"], cfg.n_heads)
    k = split_heads(h @ p[prefix + "attn.wk"] + p[prefix + "attn.bk"], cfg.n_heads)
    v = split_heads(h @ p[prefix + "attn.wv"] + p[prefix + "attn.bv"], cfg.n_heads)

    causal = np.tril(np.ones((n_pos, n_pos), dtype=bool))
    s = np.where(causal, (q @ k.swapaxes(-1, -2)) * scale, -np.inf)
    cache = {"h": h, "q": q, "k": k, "v": v, "scale": scale}

    if images is None:
        m = s.max(axis=-1, keepdims=True)
        e_text = np.exp(s - m)
        p_text = e_text / e_text.sum(axis=-1, keepdims=True)
        p_img = None
    else:
        z, slot_mask = images
        wk_img, wv_img, bk_img, bv_img = _image_projections(model, prefix)
        zn, ln_cache = layer_norm(z, p["fusion.ln_img.g"], p["fusion.ln_img.b"], cfg.ln_img_eps)
        k_img = split_image_heads(zn @ wk_img + bk_img, cfg.n_heads)
        v_img = split_image_heads(zn @ wv_img + bv_img, cfg.n_heads)
        s_img = np.einsum("bhtd,bhtkd->bhtk", q, k_img) * scale
        s_img = np.where(slot_mask[:, None], s_img, -np.inf)
        m = np.maximum(s.max(axis=-1), s_img.max(axis=-1))[..., None]
        e_text = np.exp(s - m)
        e_img = np.exp(s_img - m)
        denom = e_text.sum(axis=-1, keepdims=True) + e_img.sum(axis=-1, keepdims=True)
        p_text = e_text / denom
        p_img = e_img / denom
        cache |= {"zn": zn, "ln_img": ln_cache, "k_img": k_img, "v_img": v_img}

    drop_text = dropout_mask(rng, p_text.shape, cfg.dropout, p_text.dtype)
    pd_text = p_text if drop_text is None else p_text * drop_text
    o = pd_text @ v
    cache |= {"p_text": p_text, "pd_text": pd_text, "drop_text": drop_text, "p_img": p_img}
    if p_img is not None:
        drop_img = dropout_mask(rng, p_img.shape, cfg.dropout, p_img.dtype)
        pd_img = p_img if drop_img is None else p_img * drop_img
        o = o + np.einsum("bhtk,bhtkd->bhtd", pd_img, cache["v_img"])
        cache |= {"pd_img": pd_img, "drop_img": drop_img}

    merged = merge_heads(o)
    cache["merged"] = merged
    return merged @ p[prefix + "attn.wo"] + p[prefix + "attn.bo"], cache


def _attention_backward(
    model: ModelState, prefix: str, dout: np.ndarray, cache: dict, grads: dict[str, np.ndarray]
) -> np.ndarray:
    cfg, p = model.config, model.params
    scale = cache["scale"]
    q, k, v = cache["q"], cache["k"], cache["v"]
    grads[prefix + "attn.wo"] += matmul_grad(cache["merged"], dout)
    grads[prefix + "attn.bo"] += dout.sum(axis=(0, 1))
    do = split_heads(dout @ p[prefix + "attn.wo"].T, cfg.n_heads)

    p_text, p_img = cache["p_text"], cache["p_img"]
    dp_text = do @ v.swapaxes(-1, -2)
    dv = cache["pd_text"].swapaxes(-1, -2) @ do
    if cache["drop_text"] is not None:
        dp_text = dp_text * cache["drop_text"]
    c = (p_text * dp_text).sum(axis=-1, keepdims=True)
    if p_img is not None:
        dp_img = np.einsum("bhtd,bhtkd->bhtk", do, cache["v_img"])
        dv_img = cache["pd_img"][..., None] * do[:, :, :, None, :]
        if cache["drop_img"] is not None:
            dp_img = dp_img * cache["drop_img"]
        c = c + (p_img * dp_img).sum(axis=-1, keepdims=True)
        ds_img = p_img * (dp_img - c)
    ds_text = p_text * (dp_text - c)

    dq = (ds_text @ k) * scale
    dk = (ds_text.swapaxes(-1, -2) @ q) * scale
    if p_img is not None:
        dq = dq + np.einsum("bhtk,bhtkd->bhtd", ds_img, cache["k_img"]) * scale
        dk_img = ds_img[..., None] * q[:, :, :, None, :] * scale

    h = cache["h"]
    dh = np.zeros_like(h)
    for name, grad in (("q", dq), ("k", dk), ("v", dv)):
        grad = merge_heads(grad)
        grads[f"{prefix}attn.w{name}"] += matmul_grad(h, grad)
        grads[f"{prefix}attn.b{name}"] += grad.sum(axis=(0, 1))
        dh += grad @ p[f"{prefix}attn.w{name}"].T

    if p_img is not None:
        dk_img = merge_image_heads(dk_img)
        dv_img = merge_image_heads(dv_img)
        wk_img, wv_img, _, _ = _image_projections(model, prefix)
        zn = cache["zn"]
        mode = cfg.proj_mode
        w_names = (
            ("fusion.wk_img", "fusion.wv_img")
            if mode == ProjMode.IMAGE_SPECIFIC_WEIGHTS_AND_BIAS
            else (prefix + "attn.wk", prefix + "attn.wv")
        )
        b_names = (
            (prefix + "attn.bk", prefix + "attn.bv")
            if mode == ProjMode.SHARED_ALL
            else ("fusion.bk_img", "fusion.bv_img")
        )
        grads[w_names[0]] += matmul_grad(zn, dk_img)
        grads[w_names[1]] += matmul_grad(zn, dv_img)
        grads[b_names[0]] += dk_img.sum(axis=(0, 1, 2))
        grads[b_names[1]] += dv_img.sum(axis=(0, 1, 2))
        dzn = dk_img @ wk_img.T + dv_img @ wv_img.T
        _, dg, db = layer_norm_backward(dzn, cache["ln_img"])
        grads["fusion.ln_img.g"] += dg
        grads["fusion.ln_img.b"] += db
    return dh


def _run(model: ModelState, batch: _Batch, rng: np.random.Generator | None) -> tuple[np.ndarray, list, list]:
    """Batched forward pass; returns logits, per-layer caches and hidden states."""
    cfg, p = model.config, model.params
    tokens = batch.tokens
    n_pos = tokens.shape[1]
    x = p["tok_emb"][tokens] + p["pos_emb"][:n_pos]
    hidden = [x]
    caches = []
    for layer in range(cfg.n_layers):
        prefix = f"layers.{layer}."
        images = batch.images if layer == cfg.fusion_layer_index else None
        h, ln1 = layer_norm(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"], constants.LN_EPS)
        a, attn = _attention(model, prefix, h, images, rng)
        drop_a = dropout_mask(rng, a.shape, cfg.dropout, a.dtype)
        x = x + (a if drop_a is None else a * drop_a)

        h2, ln2 = layer_norm(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"], constants.LN_EPS)
        f1 = h2 @ p[prefix + "mlp.w1"] + p[prefix + "mlp.b1"]
        g, t = gelu(f1)
        f = g @ p[prefix + "mlp.w2"] + p[prefix + "mlp.b2"]
        drop_f = dropout_mask(rng, f.shape, cfg.dropout, f.dtype)
        x = x + (f if drop_f is None else f * drop_f)
        hidden.append(x)
        caches.append(
            {"ln1": ln1, "attn": attn, "drop_a": drop_a, "ln2": ln2, "h2": h2, "f1": f1, "g": g, "t": t, "drop_f": drop_f}
        )

    xf, ln_f = layer_norm(x, p["ln_f.g"], p["ln_f.b"], constants.LN_EPS)
    logits = xf @ p["head.w"] + p["head.b"]
    caches.append({"ln_f": ln_f, "xf": xf})
    return logits, caches, hidden


def _backward(model: ModelState, batch: _Batch, caches: list, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    cfg, p = model.config, model.params
    grads = {name: np.zeros_like(value) for name, value in p.items()}
    top = caches[-1]
    grads["head.w"] += matmul_grad(top["xf"], dlogits)
    grads["head.b"] += dlogits.sum(axis=(0, 1))
    dx, dg, db = layer_norm_backward(dlogits @ p["head.w"].T, top["ln_f"])
    grads["ln_f.g"] += dg
    grads["ln_f.b"] += db

    for layer in reversed(range(cfg.n_layers)):
        prefix = f"layers.{layer}."
        cache = caches[layer]
        df = dx if cache["drop_f"] is None else dx * cache["drop_f"]
        grads[prefix + "mlp.w2"] += matmul_grad(cache["g"], df)
        grads[prefix + "mlp.b2"] += df.sum(axis=(0, 1))
        df1 = gelu_backward(df @ p[prefix + "mlp.w2"].T, cache["f1"], cache["t"])
        grads[prefix + "mlp.w1"] += matmul_grad(cache["h2"], df1)
        grads[prefix + "mlp.b1"] += df1.sum(axis=(0, 1))
        dh2, dg, db = layer_norm_backward(df1 @ p[prefix + "mlp.w1"].T, cache["ln2"])
        grads[prefix + "ln2.g"] += dg
        grads[prefix + "ln2.b"] += db
        dx = dx + dh2

        da = dx if cache["drop_a"] is None else dx * cache["drop_a"]
        dh = _attention_backward(model, prefix, da, cache["attn"], grads)
        dh1, dg, db = layer_norm_backward(dh, cache["ln1"])
        grads[prefix + "ln1.g"] += dg
        grads[prefix + "ln1.b"] += db
        dx = dx + dh1

    np.add.at(grads["tok_emb"], batch.tokens, dx)
    grads["pos_emb"][: batch.tokens.shape[1]] += dx.sum(axis=0)
    return grads


def forward(model: ModelState, tokens: np.ndarray, images: RetrievedImageSet | None = None) -> tuple[np.ndarray, LayerActivations]:
    """
    Logits of one sequence and its activation trace.

    Args:
        model: Parameters and config
        tokens: ``(T,)`` token ids
        images: Retrieved image keys per position, or ``None`` for a plain decoder pass

    Returns:
        Tuple of (logits ``(T, V)``, trace)
    """
    batch = _prepare(model, tokens, images)
    logits, caches, hidden = _run(model, batch, rng=None)
    fusion = model.config.fusion_layer_index
    trace = LayerActivations(
        hidden=[state[0] for state in hidden],
        text_weights=[cache["attn"]["p_text"][0] for cache in caches[:-1]],
        image_weights=None if caches[fusion]["attn"]["p_img"] is None else caches[fusion]["attn"]["p_img"][0],
        fusion_layer_index=fusion,
    )
    return logits[0], trace


def token_logprobs(model: ModelState, tokens: np.ndarray, images: Images = None) -> np.ndarray:
    """Log-probability of every token after the first, shape ``(B, T - 1)`` or ``(T - 1,)``."""
    single = np.ndim(tokens) == 1
    batch = _prepare(model, tokens, images, min_len=2)
    logits, _, _ = _run(model, batch, rng=None)
    logp = log_softmax(logits[:, :-1])
    picked = np.take_along_axis(logp, batch.tokens[:, 1:, None], axis=-1)[..., 0]
    return picked[0] if single else picked


def loss_and_grads(
    model: ModelState,
    tokens: np.ndarray,
    images: Images = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """
    Mean next-token negative log-likelihood and its exact gradients.

    ``tokens`` may be one sequence ``(T,)`` or a batch ``(B, T)``; the mean
    runs over all ``B * (T - 1)`` predictions. Dropout is applied only when
    ``rng`` is given.
    """
    batch = _prepare(model, tokens, images, min_len=2)
    logits, caches, _ = _run(model, batch, rng)
    n_batch, n_pos = batch.tokens.shape
    count = n_batch * (n_pos - 1)
    logp = log_softmax(logits[:, :-1])
    targets = batch.tokens[:, 1:]
    nll = -np.take_along_axis(logp, targets[..., None], axis=-1).sum() / count

    dz = np.exp(logp)
    np.put_along_axis(dz, targets[..., None], np.take_along_axis(dz, targets[..., None], axis=-1) - 1.0, axis=-1)
    dlogits = np.zeros_like(logits)
    dlogits[:, :-1] = dz / count
    return float(nll), _backward(model, batch, caches, dlogits)


def next_token_logprobs(model: ModelState, prefix: np.ndarray, images: RetrievedImageSet | None = None) -> np.ndarray:
    """Log-softmax of the logits at the last prefix position."""
    if len(prefix) == 0:
        raise ShapeMismatch("prefix must not be empty")
    logits, _ = forward(model, prefix, images)
    return log_softmax(logits[-1])
