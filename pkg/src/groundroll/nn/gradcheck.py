"""Finite-difference verification of the autodiff tape.

Central differences with step h on a scalar loss, compared entrywise
against one reverse pass. Large parameters are spot-checked on a seeded
subset of entries; small ones are checked exhaustively.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["GradCheckReport", "grad_check"]

# Entries whose analytic and numeric gradients are both below this are
# counted as agreeing (the difference is finite-difference noise).
_ZERO_SCALE = 1e-6


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_entries_checked: int
    per_param: list = field(default_factory=list)  # (name, max_rel_err, n_checked)

    @property
    def ok(self) -> bool:
        return self.max_rel_err < 1e-4


def grad_check(
    loss_fn,
    params,
    h: float = 1e-5,
    max_entries_per_param: int = 64,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph on every call and return a scalar
    Tensor; ``params`` is a list of (name, Tensor) or Tensor whose ``.data``
    is perturbed in place.
    """
    named = [(f"param{i}", p) if isinstance(p, Tensor) else p for i, p in enumerate(params)]
    for _, p in named:
        if not p.requires_grad:
            raise ValueError("grad_check requires parameters with requires_grad=True")
        p.grad = None
    loss = loss_fn()
    if loss.data.size != 1:
        raise ValueError("loss_fn must return a scalar tensor")
    loss.backward()
    analytic = [(name, np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for name, p in named]

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_err=0.0, n_entries_checked=0)
    for (name, p), (_, a) in zip(named, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_entries_per_param:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=max_entries_per_param, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(loss_fn().data.reshape(()))
            flat[i] = orig - h
            f_minus = float(loss_fn().data.reshape(()))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a_i = float(a.reshape(-1)[i])
            scale = max(abs(a_i), abs(numeric))
            rel = 0.0 if scale < _ZERO_SCALE else abs(a_i - numeric) / scale
            worst = max(worst, rel)
        report.per_param.append((name, worst, int(idx.size)))
        report.n_entries_checked += int(idx.size)
        report.max_rel_err = max(report.max_rel_err, worst)
    return report
