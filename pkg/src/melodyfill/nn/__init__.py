"""Minimal differentiable numeric core (tensors, layers, Adam, seeded RNG)."""

from . import tensor
from .layers import GRU, Embedding, Linear, ParameterStore, gru_cell, uniform_init
from .optim import Adam
from .rng import RngStream
from .tensor import (
    IndexOutOfRange,
    ShapeMismatch,
    Tensor,
    no_grad,
    relu,
    selu,
    set_debug,
    set_dtype,
    sigmoid,
    softmax_cross_entropy,
    tanh,
)

__all__ = [
    "Adam",
    "Embedding",
    "GRU",
    "IndexOutOfRange",
    "Linear",
    "ParameterStore",
    "RngStream",
    "ShapeMismatch",
    "Tensor",
    "gru_cell",
    "no_grad",
    "relu",
    "selu",
    "set_debug",
    "set_dtype",
    "sigmoid",
    "softmax_cross_entropy",
    "tanh",
    "tensor",
    "uniform_init",
]
