"""
Gradient Tape — Ordered record of differentiable operations.

• Recording: ops append a TapeNode only while a tape is active on the
  current thread (`with Tape(): ...`).
• Replay: `backward` walks the nodes in reverse once and accumulates
  gradients into tracked leaves.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from drivetrainer.errors import DimensionError

if TYPE_CHECKING:
    from drivetrainer.autodiff.tensor import Tensor

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_local = threading.local()


@dataclass(slots=True)
class TapeNode:
    node_id: int
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Thread-local recorder. Tapes nest; the innermost one records."""

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> Tape:
        stack = _stack()
        stack.append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        node_id = len(self.nodes)
        output.tape = self
        output.node_id = node_id
        self.nodes.append(TapeNode(node_id, inputs, output, backward))


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into `.grad` of every tracked leaf."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise DimensionError("backward", loss.shape, detail="loss must be a scalar")
    if not loss.requires_grad:
        return

    seed = np.ones_like(loss.data)
    if loss.tape is None:
        loss.accumulate_grad(seed)
        return

    grads: dict[int, np.ndarray] = {id(loss): seed}
    leaves: dict[int, Tensor] = {}
    for node in reversed(loss.tape.nodes[: loss.node_id + 1]):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for tensor, g_in in zip(node.inputs, node.backward(g), strict=True):
            if g_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
            if tensor.node_id is None:
                leaves[key] = tensor

    for key, leaf in leaves.items():
        leaf.accumulate_grad(grads[key])
