"""Linear delay equation parameters and the fundamental solution.

For ``x'(t) = a x(t) + b x(t - tau)`` the fundamental solution (zero history,
unit jump at zero) is the finite sum

    X(t) = sum_{k=0}^{floor(t/tau)} (b^k / k!) (t - k tau)^k e^{a (t - k tau)}

which is what every covariance formula in this subpackage is built from.
Terms alternate in sign for ``b < 0`` and can cancel badly, so the sum is
accumulated with Kahan compensation and each term is formed in log magnitude.
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.special import gammaln

MAX_HORIZON_DELAYS = 50.0  # evaluation cap for t, in units of tau


@dataclass(frozen=True)
class LinearDdeParams:
    """Coefficients of ``x' = a x + b x(t - tau)``."""

    a: float
    b: float
    tau: float

    def __post_init__(self):
        for name in ("a", "b", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")


def fundamental_solution(p: LinearDdeParams, t):
    """Evaluate ``X(t)``; vectorized over ``t``, zero for ``t < 0``."""
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if np.any(t_arr > MAX_HORIZON_DELAYS * p.tau + 1e-9 * p.tau):
        raise ValueError(
            f"fundamental solution capped at t <= {MAX_HORIZON_DELAYS} tau")
    out = np.zeros_like(t_arr)
    comp = np.zeros_like(t_arr)
    kmax = 0 if p.b == 0.0 else int(np.floor(t_arr.max() / p.tau)) if t_arr.size else 0
    log_b = -np.inf if p.b == 0.0 else math.log(abs(p.b))
    sign_b = 1.0 if p.b >= 0.0 else -1.0
    for k in range(max(kmax, 0) + 1):
        dt = t_arr - k * p.tau
        live = dt >= 0.0
        if not live.any():
            break
        if k == 0:
            term = np.where(live, np.exp(p.a * dt), 0.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                logmag = (k * log_b - gammaln(k + 1)
                          + k * np.log(np.maximum(dt, 0.0)) + p.a * dt)
            term = np.where(live & (dt > 0.0),
                            sign_b ** k * np.exp(logmag), 0.0)
        # Kahan step
        y = term - comp
        s = out + y
        comp = (s - out) - y
        out = s
    return float(out[0]) if scalar else out


class _PrefixTable:
    """Cumulative integral of X at nodes ``j * tau / resolution``."""

    __slots__ = ("params", "h", "nodes", "cumulative")

    def __init__(self, p: LinearDdeParams, n_delays: int, resolution: int):
        self.params = p
        self.h = p.tau / resolution
        n = n_delays * resolution
        self.nodes = self.h * np.arange(n + 1)
        x, w = np.polynomial.legendre.leggauss(8)
        mid = self.nodes[:-1, None] + 0.5 * self.h * (x + 1.0)
        vals = fundamental_solution(p, mid)
        panel = 0.5 * self.h * (vals * w).sum(axis=1)
        self.cumulative = np.concatenate([[0.0], np.cumsum(panel)])


_PREFIX_CACHE: dict[tuple, _PrefixTable] = {}


def fundamental_prefix(p: LinearDdeParams, z, *, resolution: int = 256):
    """Integral of the fundamental solution over ``[0, z]``, vectorized.

    Negative ``z`` clips to zero (X vanishes there).  Values at cached
    node points are shared; the sub-node remainder is an 8-point
    Gauss-Legendre tail, exact to rounding for these analytic pieces.
    """
    z_arr = np.maximum(np.asarray(z, dtype=float), 0.0)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    zmax = float(z_arr.max()) if z_arr.size else 0.0
    n_delays = max(1, int(np.ceil(zmax / p.tau - 1e-12)))
    key = (p.a, p.b, p.tau, resolution)
    table = _PREFIX_CACHE.get(key)
    if table is None or table.nodes[-1] < zmax - 1e-12:
        table = _PrefixTable(p, n_delays, resolution)
        _PREFIX_CACHE[key] = table
    idx = np.minimum((z_arr / table.h).astype(int), table.nodes.size - 2)
    base = table.cumulative[idx]
    lo = table.nodes[idx]
    x, w = np.polynomial.legendre.leggauss(8)
    half = 0.5 * (z_arr - lo)
    pts = lo[..., None] + half[..., None] * (x + 1.0)
    tail = half * (fundamental_solution(p, pts) * w).sum(axis=-1)
    out = base + tail
    return float(out[0]) if scalar else out
