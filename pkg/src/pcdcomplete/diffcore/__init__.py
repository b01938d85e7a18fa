from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNorm1d, Linear, Mlp
from .optim import AdamState, adam_step
from .tensor import Graph, Tensor, active_graph, constant, parameter

__all__ = [
    "ops",
    "Graph",
    "Tensor",
    "active_graph",
    "constant",
    "parameter",
    "Linear",
    "BatchNorm1d",
    "Mlp",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]
