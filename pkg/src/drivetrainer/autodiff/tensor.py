"""
Tensor — Dense numpy array with optional gradient tracking.

A Tensor is tracked when it is a learnable leaf (`requires_grad=True`) or
the output of an op recorded on an active tape. Detached tensors never
accumulate gradient.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from drivetrainer.autodiff.tape import Tape

_FLOAT_TYPES = (np.float32, np.float64)


def _as_float_array(data: Any, dtype: Any = None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.type not in _FLOAT_TYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape", "node_id", "__weakref__")

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None) -> None:
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node_id: int | None = None

    # ── Introspection ────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __repr__(self) -> str:
        flag = ", tracked" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # ── Gradient plumbing ────────────────────────────────

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        g = np.asarray(g, dtype=self.data.dtype).reshape(self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # ── Operator sugar ───────────────────────────────────

    def __add__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.mul(other, self)

    def __neg__(self) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        from drivetrainer.autodiff import ops

        return ops.getitem(self, index)
