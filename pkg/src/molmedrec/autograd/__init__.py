"""Tensor arithmetic with reverse-mode differentiation, Adam, checkpoints."""

from .tensor import (
    Tensor,
    ShapeError,
    concat,
    layer_norm,
    matmul,
    no_grad,
    scatter_add,
    set_debug,
    softmax,
)
from .nn import Embedding, GRUCell, Linear, LayerNorm, MLP, gru_cell
from .optim import Adam
from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint

__all__ = [
    "Tensor", "ShapeError", "concat", "layer_norm", "matmul", "no_grad",
    "scatter_add", "set_debug", "softmax",
    "Embedding", "GRUCell", "Linear", "LayerNorm", "MLP", "gru_cell",
    "Adam",
    "CheckpointError", "load_checkpoint", "load_into", "save_checkpoint",
]
