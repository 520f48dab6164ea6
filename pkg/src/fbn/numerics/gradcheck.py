"""Central finite-difference gradient checks against reverse-mode gradients."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


# Below this magnitude a gradient entry is compared on an absolute scale. Central
# differences of an O(1) objective at h=1e-5 carry ~1e-11 of rounding noise, so
# entries much smaller than 1e-6 cannot be resolved to 1e-4 relative accuracy.
ABS_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> float:
    """max |a - n| / max(|a| + |n|, floor) over entries."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(floor, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def numerical_gradient(f: Callable[[], float], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """(f(θ+h·e) − f(θ−h·e)) / 2h for every coordinate of ``param`` (perturbed in place, then restored)."""
    if not h > 0:
        raise ValueError("step h must be positive")
    flat = param.data.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective at probe {i} of {param.name or 'param'}")
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(param.shape)


def gradient_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between backprop and central differences over all ``params``.

    ``f`` rebuilds the scalar objective from the current parameter values each
    time it is called. It must be deterministic (no batchnorm running-stat
    drift that feeds back into the output, no fresh randomness).
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    for p in params:
        p.zero_grad()
    f().backward()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        numeric = numerical_gradient(lambda: f().item(), p, h)
        worst = max(worst, relative_error(a, numeric))
    return worst
