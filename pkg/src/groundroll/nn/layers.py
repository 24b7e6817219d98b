"""Parameterized layers on top of the tensor primitives.

Fan-in layers (convolutions, dense) initialize weights uniform on
[-k, k] with k = 1/sqrt(fan_in) from the rng handed in, so a fixed seed
reproduces parameters bit-for-bit. Normalization gains start at 1.
"""
from __future__ import annotations

import numpy as np

from . import tensor as F
from .tensor import Tensor

__all__ = [
    "Module",
    "Conv2d",
    "Conv1d",
    "ConvTranspose2d",
    "Linear",
    "InstanceNorm2d",
    "InstanceNorm1d",
]


class Module:
    """Tiny parameter container; submodules register in insertion order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def load_state(self, state: dict, prefix: str = "") -> None:
        """Copy arrays from a {name: ndarray} dict into the parameters."""
        for name, p in self.named_parameters():
            key = prefix + name
            if key not in state:
                raise KeyError(f"missing parameter {key!r} in state")
            arr = np.asarray(state[key], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {key!r} shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None, bias=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = c_in * kernel * kernel
        self.weight = Tensor(_uniform(rng, (c_out, c_in, kernel, kernel), fan_in), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_out,), fan_in), requires_grad=True) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None, bias=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = c_in * kernel
        self.weight = Tensor(_uniform(rng, (c_out, c_in, kernel), fan_in), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_out,), fan_in), requires_grad=True) if bias else None

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=2, padding=1, rng=None, bias=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = c_in * kernel * kernel
        self.weight = Tensor(_uniform(rng, (c_in, c_out, kernel, kernel), fan_in), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_out,), fan_in), requires_grad=True) if bias else None

    def forward(self, x):
        return F.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, bias=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = Tensor(_uniform(rng, (n_in, n_out), n_in), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (n_out,), n_in), requires_grad=True) if bias else None

    def forward(self, x):
        out = x.matmul(self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class _InstanceNorm(Module):
    """Normalize each (batch, channel) slice over its spatial axes."""

    def __init__(self, channels: int, spatial_axes: tuple, param_shape: tuple, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self._axes = spatial_axes
        self.gain = Tensor(np.ones(param_shape), requires_grad=True)
        self.shift = Tensor(np.zeros(param_shape), requires_grad=True)

    def forward(self, x):
        mu = x.mean(axis=self._axes, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=self._axes, keepdims=True)
        normed = centered / (var + self.eps).sqrt()
        return normed * self.gain + self.shift


class InstanceNorm2d(_InstanceNorm):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__(channels, (2, 3), (1, channels, 1, 1), eps)


class InstanceNorm1d(_InstanceNorm):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__(channels, (2,), (1, channels, 1), eps)
