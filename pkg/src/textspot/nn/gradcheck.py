"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


def grad_check(f, params, step: float = 1e-5) -> float:
    """Compare backprop gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    ``params``. Returns the maximum over all parameter entries of

        |analytic - central| / max(1, |central|)

    with the central difference taken at ``step``. Parameters should be double
    precision for meaningful results.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: objective is not finite")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True) for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError("grad_check: objective is not finite at perturbed point")
            central = (hi - lo) / (2.0 * step)
            err = abs(an_flat[i] - central) / max(1.0, abs(central))
            if err > worst:
                worst = err
    return worst


__all__ = ["grad_check", "Parameter"]
