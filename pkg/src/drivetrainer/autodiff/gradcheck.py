"""
Finite-difference oracle for tape gradients.

Runs on 64-bit copies of the inputs: central differences with step `h`
compared to the tape result by norm-relative error.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from drivetrainer.autodiff.tape import Tape, backward
from drivetrainer.autodiff.tensor import Tensor

ScalarFn = Callable[..., Tensor]


@dataclass(frozen=True)
class GradCheckResult:
    analytic: list[np.ndarray]
    numeric: list[np.ndarray]
    errors: list[float]

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def numerical_gradient(fn: ScalarFn, arrays: Sequence[np.ndarray], h: float = 1e-3) -> list[np.ndarray]:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for k, arr in enumerate(base):
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(*(Tensor(a) for a in base)).item()
            flat[i] = orig - h
            down = fn(*(Tensor(a) for a in base)).item()
            flat[i] = orig
            grad.reshape(-1)[i] = (up - down) / (2.0 * h)
        grads.append(grad)
    return grads


def analytic_gradient(fn: ScalarFn, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape():
        loss = fn(*leaves)
    backward(loss)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]


def gradient_check(fn: ScalarFn, arrays: Sequence[np.ndarray], h: float = 1e-3) -> GradCheckResult:
    """Compare tape gradients of scalar `fn(*tensors)` with central differences."""
    analytic = analytic_gradient(fn, arrays)
    numeric = numerical_gradient(fn, arrays, h=h)
    errors = [relative_error(a, n) for a, n in zip(analytic, numeric, strict=True)]
    return GradCheckResult(analytic, numeric, errors)
