"""
Special functions for the Nakagami law of |dV|.

Regularized lower incomplete gamma P(a, x): power series for x < a + 1,
Lentz continued fraction for the complement otherwise.
"""

import math
import sys

import numpy as np

from pvsa.exceptions import InvalidShape, NonConvergence
from pvsa.models.distribution import NakagamiParams

ACCURACY = 1.0e-15
MAX_ITERATIONS = 10_000
_TINY = sys.float_info.min / sys.float_info.epsilon


def _series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(MAX_ITERATIONS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * ACCURACY:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NonConvergence(f"incomplete gamma series did not converge for a={a}, x={x}")


def _continued_fraction(a: float, x: float) -> float:
    """Upper regularized Q(a, x)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITERATIONS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < ACCURACY:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NonConvergence(f"incomplete gamma continued fraction did not converge for a={a}, x={x}")


def regularized_lower_incomplete_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a), clipped to [0, 1]."""
    if not a > 0:
        raise InvalidShape(f"shape a must be > 0, got {a}")
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        value = _series(a, x)
    else:
        value = 1.0 - _continued_fraction(a, x)
    return min(1.0, max(0.0, value))


def nakagami_pdf(params: NakagamiParams, x):
    """2 m^m / (Gamma(m) Omega^m) x^(2m-1) exp(-m x^2 / Omega); x may be an array."""
    m, omega = params.m, params.omega
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("Nakagami density is defined for x >= 0")
    log_norm = math.log(2.0) + m * math.log(m) - math.lgamma(m) - m * math.log(omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_density = log_norm + (2 * m - 1) * np.log(x) - m * x * x / omega
    density = np.exp(log_density)
    if 2 * m - 1 == 0:
        density = np.where(x == 0, math.exp(log_norm), density)
    return density if density.ndim else float(density)


def nakagami_cdf(params: NakagamiParams, x):
    """P(m, m x^2 / Omega); x may be an array."""
    x = np.asarray(x, dtype=float)
    flat = [regularized_lower_incomplete_gamma(params.m, params.m * v * v / params.omega) for v in x.ravel()]
    result = np.array(flat, dtype=float).reshape(x.shape)
    return result if result.ndim else float(result)
