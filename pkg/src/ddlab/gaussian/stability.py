"""Stability of ``x'(t) = a x(t) + b x(t - tau)`` by the inequality test.

All characteristic roots of ``lambda = a + b e^{-lambda tau}`` lie strictly
in the left half-plane exactly when

    a tau < 1,
    a tau + b tau < 0,
    b tau + a tau cos(kappa) + kappa sin(kappa) > 0,

where kappa is the root of ``kappa = a tau tan(kappa)`` in (0, pi)
(kappa = pi/2 for a = 0).  The third left-hand side equals
``b tau + sqrt(a^2 tau^2 + kappa^2)``, so the conditions carve the familiar
cusp in the (a, b) plane.

``rightmost_root`` gives the independent check: the characteristic root with
the largest real part is ``a + W_0(b tau e^{-a tau}) / tau`` on the
principal Lambert-W branch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import bisect
from scipy.special import lambertw

__all__ = ["StabilityClass", "hayes_stable", "rightmost_root"]

_BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class StabilityClass:
    """Classification plus the raw inequality values.

    ``conditions`` holds the three left-hand sides oriented so that a
    positive value means the inequality is satisfied:
    ``(1 - a tau, -(a tau + b tau), b tau + a tau cos k + k sin k)``.
    The third entry is NaN when kappa is undefined (a tau >= 1, where the
    first condition already fails).
    """

    label: str
    conditions: tuple[float, float, float]
    kappa: float

    @property
    def stable(self) -> bool:
        return self.label == "Stable"

    @property
    def boundary(self) -> bool:
        return self.label == "Boundary"

    @property
    def margin(self) -> float:
        """Signed distance to failure: min over the defined conditions."""
        return min(c for c in self.conditions if not math.isnan(c))


def _kappa_root(atau: float) -> float:
    """Root of kappa = atau * tan(kappa) in (0, pi); NaN when atau >= 1."""
    if atau == 0.0:
        return 0.5 * math.pi
    if atau >= 1.0:
        return math.nan

    def g(k):
        return k - atau * math.tan(k)

    # For 0 < atau < 1 the root sits left of the tangent pole; for atau < 0
    # it sits right of it.  Shrinking the bracket off the pole keeps g finite.
    if atau > 0.0:
        lo, hi = 1e-12, 0.5 * math.pi - 1e-12
    else:
        lo, hi = 0.5 * math.pi + 1e-12, math.pi - 1e-12
    if g(lo) * g(hi) > 0.0:
        raise ArithmeticError(
            f"kappa bracket failed for a*tau = {atau!r}")
    return float(bisect(g, lo, hi, xtol=1e-12))


def hayes_stable(p) -> StabilityClass:
    """Classify the zero solution as Stable, Unstable, or Boundary."""
    atau = p.a * p.tau
    btau = p.b * p.tau
    kappa = _kappa_root(atau)
    c1 = 1.0 - atau
    c2 = -(atau + btau)
    if math.isnan(kappa):
        c3 = math.nan
    else:
        c3 = btau + atau * math.cos(kappa) + kappa * math.sin(kappa)
    conditions = (c1, c2, c3)
    defined = [c for c in conditions if not math.isnan(c)]
    if min(abs(c) for c in defined) <= _BOUNDARY_TOL:
        label = "Boundary"
    elif len(defined) == 3 and all(c > 0.0 for c in defined):
        label = "Stable"
    else:
        label = "Unstable"
    return StabilityClass(label=label, conditions=conditions, kappa=kappa)


def rightmost_root(p) -> complex:
    """Characteristic root with the largest real part.

    Substituting mu = (lambda - a) tau turns the characteristic equation
    into mu e^mu = b tau e^{-a tau}, solved by Lambert W; the principal
    branch maximizes the real part.  For b = 0 the single root is a.
    """
    if p.b == 0.0:
        return complex(p.a)
    z = p.b * p.tau * math.exp(-p.a * p.tau)
    w = lambertw(z, k=0)
    return complex(p.a + w / p.tau)
