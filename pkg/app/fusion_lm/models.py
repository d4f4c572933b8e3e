"""Model parameters."""

from dataclasses import dataclass

import numpy as np

from app.fusion_lm import constants
from app.fusion_lm.schemas import ModelConfig, ProjMode


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """
    Name and shape of every parameter, in checkpoint order.

    Linear weights are stored ``(in, out)`` so that a projection is ``x @ w``.
    """
    e, v, hidden = config.d_model, config.vocab_size, constants.MLP_RATIO * config.d_model
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (v, e),
        "pos_emb": (config.max_seq, e),
    }
    for layer in range(config.n_layers):
        p = f"layers.{layer}."
        shapes |= {
            p + "ln1.g": (e,),
            p + "ln1.b": (e,),
            p + "attn.wq": (e, e),
            p + "attn.wk": (e, e),
            p + "attn.wv": (e, e),
            p + "attn.bq": (e,),
            p + "attn.bk": (e,),
            p + "attn.bv": (e,),
            p + "attn.wo": (e, e),
            p + "attn.bo": (e,),
            p + "ln2.g": (e,),
            p + "ln2.b": (e,),
            p + "mlp.w1": (e, hidden),
            p + "mlp.b1": (hidden,),
            p + "mlp.w2": (hidden, e),
            p + "mlp.b2": (e,),
        }
        if layer == config.fusion_layer_index:
            shapes |= {"fusion.ln_img.g": (e,), "fusion.ln_img.b": (e,)}
            if config.proj_mode != ProjMode.SHARED_ALL:
                shapes |= {"fusion.bk_img": (e,), "fusion.bv_img": (e,)}
            if config.proj_mode == ProjMode.IMAGE_SPECIFIC_WEIGHTS_AND_BIAS:
                shapes |= {"fusion.wk_img": (e, e), "fusion.wv_img": (e, e)}
    shapes |= {"ln_f.g": (e,), "ln_f.b": (e,), "head.w": (e, v), "head.b": (v,)}
    return shapes


@dataclass(eq=False)
class ModelState:
    """Configuration plus named parameter tensors."""

    config: ModelConfig
    params: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ModelState":
        return ModelState(config=self.config, params={k: v.copy() for k, v in self.params.items()})

    def equals(self, other: "ModelState") -> bool:
        """Same config and bit-identical parameters."""
        return (
            self.config == other.config
            and self.params.keys() == other.params.keys()
            and all(np.array_equal(v, other.params[k]) for k, v in self.params.items())
        )


def init_model(config: ModelConfig, seed: int = 0, std: float = constants.DEFAULT_INIT_STD) -> ModelState:
    """
    Fresh parameters: normal(0, std) weights and embeddings, unit layer-norm
    scales, zero biases. Image biases start at zero.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            value = np.ones(shape)
        elif leaf.startswith("b"):
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, std, size=shape)
        params[name] = value.astype(config.np_dtype)
    return ModelState(config=config, params=params)
