"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from drivetrainer.autodiff.tape import Tape, active_tape, backward
from drivetrainer.autodiff.tensor import Tensor

__all__ = ["Tape", "Tensor", "active_tape", "backward"]
