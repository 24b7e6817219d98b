"""Training losses: BCE, L1, and the adversarial compositions.

The generator objective is ``gan_weight * BCE(D(x, G(x)), 1) +
l1_weight * L1(G(x), target)``; the discriminator objective averages BCE
against all-ones on real pairs and all-zeros on fakes. BCE inputs are
post-sigmoid probabilities; they are clamped away from {0, 1} so saturated
units yield a large finite loss instead of infinities.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["bce", "l1", "cgan_generator_loss", "cgan_discriminator_loss"]

_EPS = 1e-12


def bce(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy. pred in (0,1) (post-sigmoid), target in [0,1]."""
    t = target if isinstance(target, Tensor) else Tensor(np.broadcast_to(np.asarray(target, dtype=np.float64), pred.data.shape).copy())
    p = pred.clamp(_EPS, 1.0 - _EPS)
    loss = -(t * p.log() + (1.0 - t) * (1.0 - p).log())
    return loss.mean()


def l1(a: Tensor, b) -> Tensor:
    """Mean absolute difference."""
    bt = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=np.float64))
    return (a - bt).abs().mean()


def cgan_generator_loss(
    d_on_fake: Tensor,
    fake: Tensor,
    target,
    gan_weight: float = 1.0,
    l1_weight: float = 100.0,
) -> Tensor:
    """Adversarial + L1 objective for the generator."""
    return gan_weight * bce(d_on_fake, 1.0) + l1_weight * l1(fake, target)


def cgan_discriminator_loss(d_on_real: Tensor, d_on_fake: Tensor) -> Tensor:
    """Average of real-vs-ones and fake-vs-zeros BCE."""
    return 0.5 * (bce(d_on_real, 1.0) + bce(d_on_fake, 0.0))
