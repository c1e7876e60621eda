"""Minimal reverse-mode differentiation over numpy arrays."""

from . import ops
from .gradcheck import GradCheckError, grad_check
from .lstm import BACKEND, lstm_sequence
from .params import CheckpointError, ParameterStore
from .tensor import BackwardError, ShapeError, Tensor, backward, no_grad, precision

__all__ = [
    "BACKEND", "BackwardError", "CheckpointError", "GradCheckError", "ParameterStore",
    "ShapeError", "Tensor", "backward", "grad_check", "lstm_sequence", "no_grad", "ops",
    "precision",
]
