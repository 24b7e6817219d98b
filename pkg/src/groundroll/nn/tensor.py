"""Tensor type and differentiable primitives.

Arrays are float64 with at most 4 axes. Every op checks its output for
NaN/Inf (disable via ``finite_checks``) and records a closure that routes
gradients to its parents; ``Tensor.backward`` runs the tape in reverse
topological order. Convolutions go through im2col so the heavy lifting is
a single matmul each way.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "NonFiniteError",
    "no_grad",
    "finite_checks",
    "concat",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "conv2d",
    "conv1d",
    "conv_transpose2d",
    "upsample2d_x2",
    "downsample2d_x2",
    "upsample1d_x2",
    "downsample1d_x2",
]

MAX_AXES = 4

_STATE = {"grad": True, "finite": True}


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


@contextmanager
def no_grad():
    """Run forward passes without recording the tape (inference mode)."""
    prev = _STATE["grad"]
    _STATE["grad"] = False
    try:
        yield
    finally:
        _STATE["grad"] = prev


@contextmanager
def finite_checks(enabled: bool):
    prev = _STATE["finite"]
    _STATE["finite"] = enabled
    try:
        yield
    finally:
        _STATE["finite"] = prev


def _validate(arr: np.ndarray, op: str) -> np.ndarray:
    if arr.ndim > MAX_AXES:
        raise ValueError(f"{op}: tensors support at most {MAX_AXES} axes, got {arr.ndim}")
    if _STATE["finite"] and not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = _validate(arr, "tensor")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None

    # -- graph plumbing ----------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn, op: str):
        t = cls.__new__(cls)
        t.data = _validate(np.asarray(data, dtype=np.float64), op)
        t.grad = None
        if _STATE["grad"] and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._backward_fn = backward_fn
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward_fn = None
        return t

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- helpers -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def item(self):
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other):
        a, b = self, Tensor._lift(other)

        def backward(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._from_op(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g)

        return Tensor._from_op(-a.data, (a,), backward, "neg")

    def __sub__(self, other):
        a, b = self, Tensor._lift(other)

        def backward(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        a, b = self, Tensor._lift(other)

        def backward(g):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, Tensor._lift(other)

        def backward(g):
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._from_op(a.data / b.data, (a, b), backward, "div")

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    # -- reductions / shape -------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        axes = _norm_axes(axis, a.data.ndim)

        def backward(g):
            gg = g
            if not keepdims and axes is not None:
                gg = np.expand_dims(gg, axes)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

        return Tensor._from_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        axes = _norm_axes(axis, self.data.ndim)
        if axes is None:
            count = self.data.size
        else:
            count = int(np.prod([self.data.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape

        def backward(g):
            a._accumulate(g.reshape(old))

        return Tensor._from_op(a.data.reshape(shape), (a,), backward, "reshape")

    def transpose2d(self):
        a = self
        if a.data.ndim != 2:
            raise ValueError("transpose2d requires a 2D tensor")

        def backward(g):
            a._accumulate(g.T)

        return Tensor._from_op(a.data.T.copy(), (a,), backward, "transpose2d")

    def matmul(self, other: "Tensor"):
        a, b = self, Tensor._lift(other)
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ValueError("matmul requires 2D tensors")

        def backward(g):
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.T @ g)

        return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")

    # -- pointwise nonlinearities --------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accumulate(g * out_data)

        return Tensor._from_op(out_data, (a,), backward, "exp")

    def log(self):
        a = self

        def backward(g):
            a._accumulate(g / a.data)

        return Tensor._from_op(np.log(a.data), (a,), backward, "log")

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def backward(g):
            a._accumulate(g * 0.5 / out_data)

        return Tensor._from_op(out_data, (a,), backward, "sqrt")

    def abs(self):
        a = self

        def backward(g):
            a._accumulate(g * np.sign(a.data))

        return Tensor._from_op(np.abs(a.data), (a,), backward, "abs")

    def clamp(self, lo: float, hi: float):
        a = self
        inside = (a.data > lo) & (a.data < hi)

        def backward(g):
            a._accumulate(g * inside)

        return Tensor._from_op(np.clip(a.data, lo, hi), (a,), backward, "clamp")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _norm_axes(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._from_op(out_data, (x,), backward, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign for numerical stability at large |z|.
    z = x.data
    out_data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def backward(g):
        x._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._from_op(out_data, (x,), backward, "sigmoid")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def backward(g):
        x._accumulate(g * pos)

    return Tensor._from_op(np.where(pos, x.data, 0.0), (x,), backward, "relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    pos = x.data > 0
    slope = np.where(pos, 1.0, alpha)

    def backward(g):
        x._accumulate(g * slope)

    return Tensor._from_op(x.data * slope, (x,), backward, "leaky_relu")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [Tensor._lift(t) for t in tensors]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    return Tensor._from_op(
        np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward, "concat"
    )


# -- convolutions ------------------------------------------------------------


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation. x: (B,C,H,W), w: (O,C,kh,kw), b: (O,)."""
    B, C, H, W = x.data.shape
    O, Cw, kh, kw = w.data.shape
    if C != Cw:
        raise ValueError(f"conv2d channel mismatch: input {C}, weight {Cw}")
    xp = _pad2d(x.data, padding)
    Hp, Wp = xp.shape[2], xp.shape[3]
    if Hp < kh or Wp < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, C * kh * kw)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data[None, :]
    out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Ho * Wo, O)
        w._accumulate((gm.T @ cols).reshape(w.data.shape))
        if b is not None:
            b._accumulate(gm.sum(axis=0))
        dcols = (gm @ wmat).reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((B, C, Hp, Wp))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[:, :, :, :, i, j]
        if padding:
            dxp = dxp[:, :, padding : padding + H, padding : padding + W]
        x._accumulate(dxp)

    return Tensor._from_op(out, parents, backward, "conv2d")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """1D cross-correlation. x: (B,C,L), w: (O,C,k), b: (O,)."""
    B, C, L = x.data.shape
    O, Cw, k = w.data.shape
    if C != Cw:
        raise ValueError(f"conv1d channel mismatch: input {C}, weight {Cw}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    Lp = xp.shape[2]
    if Lp < k:
        raise ValueError("conv1d: kernel larger than padded input")
    Lo = (Lp - k) // stride + 1
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B * Lo, C * k)
    wmat = w.data.reshape(O, C * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data[None, :]
    out = out.reshape(B, Lo, O).transpose(0, 2, 1)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lo, O)
        w._accumulate((gm.T @ cols).reshape(w.data.shape))
        if b is not None:
            b._accumulate(gm.sum(axis=0))
        dcols = (gm @ wmat).reshape(B, Lo, C, k).transpose(0, 2, 1, 3)
        dxp = np.zeros((B, C, Lp))
        for i in range(k):
            dxp[:, :, i : i + stride * Lo : stride] += dcols[:, :, :, i]
        if padding:
            dxp = dxp[:, :, padding : padding + L]
        x._accumulate(dxp)

    return Tensor._from_op(out, parents, backward, "conv1d")


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed 2D convolution (the adjoint of conv2d's forward map).

    x: (B,C,Hi,Wi), w: (C,O,kh,kw); output (B,O,(Hi-1)*s - 2p + kh, ...).
    """
    B, C, Hi, Wi = x.data.shape
    Cw, O, kh, kw = w.data.shape
    if C != Cw:
        raise ValueError(f"conv_transpose2d channel mismatch: input {C}, weight {Cw}")
    Hf = (Hi - 1) * stride + kh
    Wf = (Wi - 1) * stride + kw
    Ho, Wo = Hf - 2 * padding, Wf - 2 * padding
    if Ho <= 0 or Wo <= 0:
        raise ValueError("conv_transpose2d: padding removes the whole output")
    xmat = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(B * Hi * Wi, C)
    wmat = w.data.reshape(C, O * kh * kw)
    cols = (xmat @ wmat).reshape(B, Hi, Wi, O, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    out_full = np.zeros((B, O, Hf, Wf))
    for i in range(kh):
        for j in range(kw):
            out_full[:, :, i : i + stride * Hi : stride, j : j + stride * Wi : stride] += cols[:, :, :, :, i, j]
    out = out_full[:, :, padding : padding + Ho, padding : padding + Wo]
    if b is not None:
        out = out + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g_full = np.zeros((B, O, Hf, Wf))
        g_full[:, :, padding : padding + Ho, padding : padding + Wo] = g
        win = sliding_window_view(g_full, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        winmat = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Hi * Wi, O * kh * kw)
        x._accumulate((winmat @ wmat.T).reshape(B, Hi, Wi, C).transpose(0, 3, 1, 2))
        w._accumulate((xmat.T @ winmat).reshape(w.data.shape))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return Tensor._from_op(out, parents, backward, "conv_transpose2d")


# -- fixed resampling ---------------------------------------------------------


def upsample2d_x2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling on the two trailing axes."""
    B, C, H, W = x.data.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g):
        x._accumulate(g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)))

    return Tensor._from_op(out, (x,), backward, "upsample2d_x2")


def downsample2d_x2(x: Tensor) -> Tensor:
    """2x2 average pooling."""
    B, C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise ValueError(f"downsample2d_x2 requires even spatial dims, got {H}x{W}")
    out = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(g):
        x._accumulate(np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25)

    return Tensor._from_op(out, (x,), backward, "downsample2d_x2")


def upsample1d_x2(x: Tensor) -> Tensor:
    B, C, L = x.data.shape
    out = x.data.repeat(2, axis=2)

    def backward(g):
        x._accumulate(g.reshape(B, C, L, 2).sum(axis=3))

    return Tensor._from_op(out, (x,), backward, "upsample1d_x2")


def downsample1d_x2(x: Tensor) -> Tensor:
    B, C, L = x.data.shape
    if L % 2:
        raise ValueError(f"downsample1d_x2 requires an even length, got {L}")
    out = x.data.reshape(B, C, L // 2, 2).mean(axis=3)

    def backward(g):
        x._accumulate(np.repeat(g, 2, axis=2) * 0.5)

    return Tensor._from_op(out, (x,), backward, "downsample1d_x2")
