"""Minimal reverse-mode autodiff in float64 numpy.

Everything the trainable stages need and nothing more: tensors up to 4
axes, strided/transposed convolutions in 1D/2D, the usual activations,
instance normalization, resampling, BCE/L1/adversarial losses, Adam, a
finite-difference gradient checker, and a versioned parameter blob format.
Training is deterministic given a seed: identical runs produce bit-identical
parameters.
"""
from .tensor import (
    NonFiniteError,
    Tensor,
    concat,
    conv1d,
    conv2d,
    conv_transpose2d,
    downsample1d_x2,
    downsample2d_x2,
    leaky_relu,
    no_grad,
    relu,
    sigmoid,
    tanh,
    upsample1d_x2,
    upsample2d_x2,
)
from .layers import (
    Conv1d,
    Conv2d,
    ConvTranspose2d,
    InstanceNorm1d,
    InstanceNorm2d,
    Linear,
    Module,
)
from .losses import bce, cgan_discriminator_loss, cgan_generator_loss, l1
from .optim import Adam
from .gradcheck import GradCheckReport, grad_check
from .serialize import BlobFormatError, load_params, save_params

__all__ = [
    "Adam",
    "BlobFormatError",
    "Conv1d",
    "Conv2d",
    "ConvTranspose2d",
    "GradCheckReport",
    "InstanceNorm1d",
    "InstanceNorm2d",
    "Linear",
    "Module",
    "NonFiniteError",
    "Tensor",
    "bce",
    "cgan_discriminator_loss",
    "cgan_generator_loss",
    "concat",
    "conv1d",
    "conv2d",
    "conv_transpose2d",
    "downsample1d_x2",
    "downsample2d_x2",
    "grad_check",
    "l1",
    "leaky_relu",
    "load_params",
    "no_grad",
    "relu",
    "save_params",
    "sigmoid",
    "tanh",
    "upsample1d_x2",
    "upsample2d_x2",
]
