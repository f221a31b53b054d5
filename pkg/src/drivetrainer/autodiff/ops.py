"""
Differentiable Ops — The operation set the Q-network is built from.

Each op computes its forward value with numpy and, when a tape is active
and any input is tracked, records a backward rule mapping the output
gradient to one gradient per input.

Broadcasting is limited to scalar-vs-tensor. Anything else goes through
an explicit `broadcast_to`.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from drivetrainer.autodiff.tape import BackwardFn, active_tape
from drivetrainer.autodiff.tensor import Tensor
from drivetrainer.errors import DimensionError, DomainError, InvalidMaskError

Operand = Tensor | np.ndarray | float | int


def _wrap(x: Operand, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(tuple(inputs), out, backward)
    return out


# ── Elementwise ──────────────────────────────────────────────────

def _pair(op: str, a: Operand, b: Operand) -> tuple[Tensor, Tensor, np.ndarray, np.ndarray]:
    ta = _wrap(a, b if isinstance(b, Tensor) else None)
    tb = _wrap(b, ta)
    if ta.shape == tb.shape:
        return ta, tb, ta.data, tb.data
    if ta.size == 1:
        return ta, tb, ta.data.reshape(()), tb.data
    if tb.size == 1:
        return ta, tb, ta.data, tb.data.reshape(())
    raise DimensionError(op, ta.shape, tb.shape, detail="only scalar broadcasting is supported")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb, ad, bd = _pair("add", a, b)
    return _emit(ad + bd, (ta, tb), lambda g: (_reduce_to(g, ta.shape), _reduce_to(g, tb.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb, ad, bd = _pair("sub", a, b)
    return _emit(ad - bd, (ta, tb), lambda g: (_reduce_to(g, ta.shape), _reduce_to(-g, tb.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb, ad, bd = _pair("mul", a, b)
    return _emit(
        ad * bd,
        (ta, tb),
        lambda g: (_reduce_to(g * bd, ta.shape), _reduce_to(g * ad, tb.shape)),
    )


def neg(x: Operand) -> Tensor:
    t = _wrap(x)
    return _emit(-t.data, (t,), lambda g: (-g,))


def scale(x: Operand, factor: float) -> Tensor:
    t = _wrap(x)
    c = t.data.dtype.type(factor)
    return _emit(t.data * c, (t,), lambda g: (g * c,))


def relu(x: Operand) -> Tensor:
    t = _wrap(x)
    active = t.data > 0
    return _emit(np.where(active, t.data, 0).astype(t.dtype), (t,), lambda g: (g * active,))


def leaky_relu(x: Operand, slope: float = 0.2) -> Tensor:
    t = _wrap(x)
    active = t.data > 0
    c = t.data.dtype.type(slope)
    return _emit(np.where(active, t.data, t.data * c), (t,), lambda g: (np.where(active, g, g * c),))


def exp(x: Operand) -> Tensor:
    t = _wrap(x)
    y = np.exp(t.data)
    return _emit(y, (t,), lambda g: (g * y,))


def log(x: Operand) -> Tensor:
    t = _wrap(x)
    if np.any(t.data <= 0):
        raise DomainError(f"log: {int(np.sum(t.data <= 0))} non-positive entries")
    return _emit(np.log(t.data), (t,), lambda g: (g / t.data,))


_ELEMENTWISE: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "scale": scale,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "exp": exp,
    "log": log,
}


def elementwise(op: str, *args: Any, **kwargs: Any) -> Tensor:
    """Dispatch a pointwise op by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*args, **kwargs)


# ── Reductions & shape plumbing ──────────────────────────────────

def sum(x: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    t = _wrap(x)
    shape = t.shape

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _emit(np.asarray(t.data.sum(axis=axis, keepdims=keepdims)), (t,), _backward)


def mean(x: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    t = _wrap(x)
    total = sum(t, axis=axis, keepdims=keepdims)
    count = t.size // max(total.size, 1)
    return scale(total, 1.0 / count)


def broadcast_to(x: Operand, shape: tuple[int, ...]) -> Tensor:
    """Explicit expansion; the backward rule sums over the expanded axes."""
    t = _wrap(x)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(t.data, shape)
    except ValueError:
        raise DimensionError("broadcast_to", t.shape, shape) from None
    lead = len(shape) - t.ndim
    expanded = tuple(
        lead + i for i, n in enumerate(t.shape) if n == 1 and shape[lead + i] != 1
    )

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        if lead:
            g = g.sum(axis=tuple(range(lead)))
        if expanded:
            g = g.sum(axis=tuple(a - lead for a in expanded), keepdims=True)
        return (g,)

    return _emit(np.ascontiguousarray(data), (t,), _backward)


def reshape(x: Operand, shape: tuple[int, ...]) -> Tensor:
    t = _wrap(x)
    try:
        data = t.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", t.shape, tuple(shape)) from None
    return _emit(data, (t,), lambda g: (g.reshape(t.shape),))


def transpose(x: Operand, axes: tuple[int, ...] | None = None) -> Tensor:
    t = _wrap(x)
    order = tuple(range(t.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(order))
    return _emit(t.data.transpose(order), (t,), lambda g: (g.transpose(inverse),))


def getitem(x: Operand, index: Any) -> Tensor:
    t = _wrap(x)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(t.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit(np.array(t.data[index]), (t,), _backward)


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    ts = [_wrap(x) for x in tensors]
    if not ts:
        raise DimensionError("concat", detail="no inputs")
    ndim = ts[0].ndim
    ax = axis % ndim if ndim else 0
    for t in ts:
        if t.ndim != ndim or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise DimensionError("concat", *(u.shape for u in ts), detail=f"axis={axis}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, bounds, axis=ax)

    return _emit(np.concatenate([t.data for t in ts], axis=ax), ts, _backward)


def stack(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    ts = [_wrap(x) for x in tensors]
    if not ts or any(t.shape != ts[0].shape for t in ts):
        raise DimensionError("stack", *(t.shape for t in ts))
    data = np.stack([t.data for t in ts], axis=axis)
    ax = axis % data.ndim

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=ax) for i in range(len(ts))]

    return _emit(data, ts, _backward)


# ── Linear algebra ───────────────────────────────────────────────

def matmul(a: Operand, b: Operand) -> Tensor:
    """`[..., m, k] @ [k, n]` with a shared right operand, or equal batch dims."""
    ta, tb = _wrap(a), _wrap(b)
    if ta.ndim < 2 or tb.ndim < 2 or ta.shape[-1] != tb.shape[-2]:
        raise DimensionError("matmul", ta.shape, tb.shape)
    if tb.ndim > 2 and ta.shape[:-2] != tb.shape[:-2]:
        raise DimensionError("matmul", ta.shape, tb.shape, detail="batch dims differ")
    shared = tb.ndim == 2

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(tb.data, -1, -2)
        if shared:
            k, n = tb.shape
            gb = ta.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.swapaxes(ta.data, -1, -2) @ g
        return ga, gb

    return _emit(ta.data @ tb.data, (ta, tb), _backward)


def softmax_rows(x: Operand, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; masked entries come out exactly zero."""
    t = _wrap(x)
    if mask is None:
        keep = np.ones(t.shape, dtype=bool)
    else:
        try:
            keep = np.broadcast_to(np.asarray(mask, dtype=bool), t.shape)
        except ValueError:
            raise DimensionError("softmax_rows", t.shape, np.shape(mask)) from None
    if not keep.any(axis=-1).all():
        raise InvalidMaskError(f"softmax_rows: {int((~keep.any(axis=-1)).sum())} fully masked rows")

    z = np.where(keep, t.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(z), 0).astype(t.dtype)
    y = e / e.sum(axis=-1, keepdims=True)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (t,), _backward)


def conv2d(
    x: Operand,
    kernels: Operand,
    bias: Operand | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of `[B?, C, H, W]` with `[O, C, kh, kw]` kernels (im2col)."""
    tx = _wrap(x)
    tw = _wrap(kernels, tx)
    tb = _wrap(bias, tx) if bias is not None else None
    if tx.ndim not in (3, 4) or tw.ndim != 4 or tx.shape[-3] != tw.shape[1]:
        raise DimensionError("conv2d", tx.shape, tw.shape)
    if stride < 1 or padding < 0:
        raise DimensionError("conv2d", tx.shape, tw.shape, detail=f"stride={stride} padding={padding}")
    if tb is not None and tb.shape != (tw.shape[0],):
        raise DimensionError("conv2d", tw.shape, tb.shape, detail="bias must match output channels")

    batched = tx.ndim == 4
    xd = tx.data if batched else tx.data[None]
    kh, kw = tw.shape[2:]
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    hp, wp = xp.shape[2:]
    if kh > hp or kw > wp:
        raise DimensionError("conv2d", xp.shape, tw.shape, detail="kernel larger than padded input")

    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2:4]
    out = np.tensordot(windows, tw.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if tb is not None:
        out = out + tb.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        g4 = g if batched else g[None]
        gw = np.tensordot(g4, windows, axes=([0, 2, 3], [0, 2, 3]))
        cols = np.tensordot(g4, tw.data, axes=([1], [0]))
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                    cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding : hp - padding, padding : wp - padding] if padding else gxp
        grads = [gx if batched else gx[0], gw]
        if tb is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    inputs = (tx, tw) if tb is None else (tx, tw, tb)
    return _emit(out if batched else out[0], inputs, _backward)
