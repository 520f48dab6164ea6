"""Regularized incomplete beta and Student-t tail probabilities."""

from __future__ import annotations

import math

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 20000


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float, x_complement: float | None = None) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1].

    ``x_complement`` may carry 1 - x computed without cancellation; it matters
    when x is within a few ulps of 1.
    """
    if a <= 0 or b <= 0:
        raise ValueError("incomplete beta needs a > 0 and b > 0")
    xc = 1.0 - x if x_complement is None else x_complement
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if xc == 0.0:
        return 1.0
    log_front = (
        a * math.log(x) + b * math.log(xc) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, xc) / b


def t_two_sided_p(t: float, dof: float) -> float:
    """Two-sided tail probability 2 * P(T > |t|) for Student's t with ``dof`` degrees of freedom."""
    if not dof > 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    if math.isnan(t):
        raise ValueError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 == 0.0:
        return 1.0
    # P(|T| > t) = I_{dof/(dof+t^2)}(dof/2, 1/2)
    denom = dof + t2
    p = betainc_regularized(0.5 * dof, 0.5, dof / denom, t2 / denom)
    return min(1.0, max(0.0, p))
