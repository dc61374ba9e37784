"""Osgood moduli of continuity and the Bihari comparison bound.

A modulus h (continuous, strictly increasing, h(0) = 0, with divergent
integral of 1/h at 0+) generates

    G(r) = int_{r0}^{r} 1/h ,   M^h(alpha, beta) = G^{-1}(G(alpha) + beta),

the comparison function bounding any f with f_t <= K + int g h(f).  M^h does
not depend on the reference point r0 and satisfies M^h(0, beta) = 0.

G is computed by adaptive quadrature between strictly positive endpoints
(the integrand is singular at 0, which is exactly the Osgood divergence; we
never evaluate there) and inverted by bisection, which is unconditionally
safe since h > 0 makes G strictly increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .rough_core import ParameterError

__all__ = ["OsgoodModulus", "builtin_modulus", "bihari_bound", "osgood_ode_envelope"]

_PROBE = np.geomspace(1e-9, 1e3, 60)


class NumericError(RuntimeError):
    """Raised when quadrature or inversion fails to converge."""


@dataclass(frozen=True)
class OsgoodModulus:
    """Modulus of continuity with a sampled monotonicity certificate."""

    evaluator: Callable[[float], float]
    name: str = "custom"
    concave: bool = False

    def __post_init__(self):
        h0 = self.evaluator(0.0)
        if abs(h0) > 1e-300:
            raise ParameterError(f"modulus {self.name!r} must vanish at 0")
        vals = np.array([self.evaluator(r) for r in _PROBE])
        if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
            raise ParameterError(
                f"modulus {self.name!r} must be strictly increasing and positive"
            )
        if self.concave and np.any(np.diff(vals / _PROBE) > 1e-12 * vals[1:] / _PROBE[1:]):
            raise ParameterError(
                f"modulus {self.name!r} is flagged concave but h(r)/r increases"
            )

    def __call__(self, r: float) -> float:
        return float(self.evaluator(r))


def _log_lipschitz(r: float) -> float:
    if r <= 0.0:
        return 0.0
    if r >= 1.0:
        return float(r)
    return float(r * (1.0 - np.log(r)))


def builtin_modulus(kind: str, L: float | None = None, evaluator=None) -> OsgoodModulus:
    """Standard moduli: linear(L), log-lipschitz, or a validated custom one.

    The log-Lipschitz modulus r (1 - ln r) on (0, 1), r on [1, inf) is the
    natural one for velocity fields reconstructed from bounded vorticity.
    """
    if kind == "linear":
        if L is None or L <= 0:
            raise ParameterError("linear modulus needs a slope L > 0")
        return OsgoodModulus(lambda r: L * r, name=f"linear({L})", concave=True)
    if kind == "log-lipschitz":
        return OsgoodModulus(_log_lipschitz, name="log-lipschitz", concave=True)
    if kind == "custom":
        if evaluator is None:
            raise ParameterError("custom modulus needs an evaluator")
        return OsgoodModulus(evaluator, name="custom")
    raise ParameterError(f"unknown modulus kind {kind!r}")


def _G(h: OsgoodModulus, r: float, r0: float) -> float:
    """int_{r0}^{r} 1/h, split per decade to keep the quadrature honest."""
    if r <= 0.0:
        return -np.inf
    if r == r0:
        return 0.0
    lo, hi, sign = (r0, r, 1.0) if r > r0 else (r, r0, -1.0)
    # Decade splits between lo and hi stabilise quad near the 0+ singularity.
    points = [lo]
    x = lo
    while x * 10.0 < hi:
        x *= 10.0
        points.append(x)
    points.append(hi)
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        val, err = quad(lambda s: 1.0 / h(s), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        if not np.isfinite(val):
            raise NumericError(f"quadrature of 1/h diverged on [{a}, {b}]")
        total += val
    return sign * total


def bihari_bound(
    h: OsgoodModulus, alpha: float, beta: float, r0: float = 1.0
) -> float:
    """M^h(alpha, beta) = G^{-1}(G(alpha) + beta); increasing in both arguments.

    Returns inf when G saturates below the target (only possible for moduli
    growing superlinearly at infinity, which concave Osgood moduli never do).
    """
    if not (np.isfinite(alpha) and np.isfinite(beta)) or alpha < 0 or beta < 0:
        raise ParameterError("bihari bound needs finite alpha, beta >= 0")
    if alpha == 0.0:
        return 0.0
    if beta == 0.0:
        return float(alpha)
    target = _G(h, alpha, r0) + beta
    lo = alpha
    hi = max(alpha, r0)
    g_hi = _G(h, hi, r0)
    while g_hi < target:
        hi *= 2.0
        if hi > 1e300:
            return np.inf
        g_hi = _G(h, hi, r0)
    # Bisection on G(r) = target; G monotone.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _G(h, mid, r0) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def osgood_ode_envelope(
    h: OsgoodModulus, K: float, g_integral: np.ndarray, r0: float = 1.0
) -> np.ndarray:
    """Pointwise envelope t -> M^h(K, int_0^t g) for a sampled schedule.

    ``g_integral`` must be nondecreasing and start from 0; the output is
    nondecreasing.  K = 0 gives the identically zero envelope (uniqueness).
    """
    sched = np.asarray(g_integral, dtype=float)
    if sched.size == 0 or sched[0] != 0.0 or np.any(np.diff(sched) < 0):
        raise ParameterError("schedule must be nondecreasing from 0")
    if K < 0:
        raise ParameterError("K must be nonnegative")
    if K == 0.0:
        return np.zeros_like(sched)
    return np.array([bihari_bound(h, K, float(b), r0) for b in sched])
