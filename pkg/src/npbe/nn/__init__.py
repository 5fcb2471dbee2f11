from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .optim import RMSProp, RMSPropConfig, clip_grad_norm, global_norm, glorot_uniform
from .tensor import ShapeError, Tensor, backward, parameter

__all__ = [
    "CheckpointError",
    "RMSProp",
    "RMSPropConfig",
    "ShapeError",
    "Tensor",
    "backward",
    "clip_grad_norm",
    "global_norm",
    "glorot_uniform",
    "load_checkpoint",
    "parameter",
    "save_checkpoint",
]
