from .checkpoint import CheckpointError, fingerprint
from .layers import (
    INPUT,
    LayerSpec,
    Network,
    ShapeError,
    StaleCacheError,
    dropout,
    gelu,
    layernorm,
    linear,
    net_backward,
    net_forward,
    residual_add,
)
from .linalg import svd
from .optim import (
    NonFiniteGradient,
    OptimizerState,
    adam_step,
    muon_step,
    newton_schulz,
    optimizer_step,
)

__all__ = [
    "INPUT",
    "CheckpointError",
    "LayerSpec",
    "Network",
    "NonFiniteGradient",
    "OptimizerState",
    "ShapeError",
    "StaleCacheError",
    "adam_step",
    "dropout",
    "fingerprint",
    "gelu",
    "layernorm",
    "linear",
    "muon_step",
    "net_backward",
    "net_forward",
    "newton_schulz",
    "optimizer_step",
    "residual_add",
    "svd",
]
