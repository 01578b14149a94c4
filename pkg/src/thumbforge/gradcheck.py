"""Finite-difference gradient verification.

Central differences with a seeded random projection of the output, so a
single scalar check covers the full Jacobian of a tensor-valued function.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numerical_gradient(f: Callable[[], float], x: np.ndarray,
                       h: float = 1e-5,
                       coords: Optional[np.ndarray] = None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` w.r.t. entries of ``x``.

    ``x`` is perturbed in place and restored. When ``coords`` (flat indices)
    is given, only those entries are estimated; the rest stay zero.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   coords: Optional[np.ndarray] = None) -> float:
    """Norm-ratio error between analytic and numeric gradients."""
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    if coords is not None:
        a = a[coords]
        n = n[coords]
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_gradients(fn: Callable[[Sequence[Tensor]], Tensor],
                    inputs: Sequence[Tensor],
                    seed: int = 0,
                    h: float = 1e-5,
                    max_coords: Optional[int] = None) -> float:
    """Compare backward() gradients of ``loss = sum(R * fn(inputs))`` against
    central differences, where R is a fixed random projection.

    Returns the worst relative error over all requires_grad inputs. Clears
    any gradients it leaves behind but does not clear the active tape.
    """
    rng = np.random.default_rng(seed)
    out = fn(inputs)
    proj = rng.standard_normal(out.shape)

    def loss_value() -> float:
        with no_grad():
            return float(np.sum(fn(inputs).data * proj))

    loss = (out * Tensor(proj, dtype=out.dtype)).sum()
    for t in inputs:
        t.grad = None
    backward(loss)
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if max_coords is not None and t.size > max_coords:
            coords = rng.choice(t.size, size=max_coords, replace=False)
        else:
            coords = None
        numeric = numerical_gradient(loss_value, t.data, h=h, coords=coords)
        worst = max(worst, relative_error(analytic, numeric, coords))
        t.grad = None
    return worst
