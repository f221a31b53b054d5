"""
Module base — named parameter discovery and value snapshots.

Parameters are tracked leaf Tensors stored as attributes; child modules and
lists of child modules are walked recursively in attribute order.
"""

from __future__ import annotations

import copy
from collections.abc import Iterator

import numpy as np

from drivetrainer.autodiff import Tensor
from drivetrainer.errors import CheckpointError, DimensionError

StateDict = dict[str, np.ndarray]


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def state_dict(self) -> StateDict:
        """Plain value copies, safe to hand to another thread."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: StateDict) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in params.items():
            value = state[name]
            if value.shape != p.shape:
                raise DimensionError(f"load_state_dict[{name}]", p.shape, value.shape)
            np.copyto(p.data, value)

    def replace_parameters(self, tensors: dict[str, Tensor]) -> None:
        """Swap parameter Tensor objects by name (used by gradient checks)."""
        for name, tensor in tensors.items():
            *path, leaf = name.split(".")
            owner: object = self
            for part in path:
                owner = owner[int(part)] if isinstance(owner, list) else getattr(owner, part)
            setattr(owner, leaf, tensor)

    def clone(self) -> Module:
        return copy.deepcopy(self)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())
