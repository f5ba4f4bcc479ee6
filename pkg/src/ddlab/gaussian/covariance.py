"""Covariance propagation for the linear delay equation.

Everything follows from the solution representation

    x(t) = X(t) xi(0) + b * integral_{-tau}^{0} X(t - r - tau) xi(r) dr

with X the fundamental solution.  Writing A = t + s1 <= B = t + s2, the
lagged covariance R_t(s1, s2) = E[x(A) x(B)] falls into three regimes:

* both times still in the history window (B <= 0): the initial kernel,
  R_0(A, B);
* straddling (A <= 0 < B): one application of the representation,
  X(B) R_0(A, 0) + b * integral X(B - r - tau) R_0(r, A) dr;
* both evolved (0 < A): the X-weighted single and double integrals over the
  initial kernel.

The regimes agree at their boundaries (the straddling integral collapses as
B -> 0+, and the double integral dies as A -> 0+), which the tests check.

Scalar evaluation uses adaptive Simpson with panels split at fundamental-
solution knots (arguments crossing multiples of tau) and kernel kinks.
Dense curves batch the same panel decomposition through fixed-order
Gauss-Legendre; structured kernels (finite rank, or the running-minimum
kernel) reduce the double integral to products or a single integral first.
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from ..quadrature import adaptive_simpson, adaptive_simpson_2d, panel_gauss
from ..tabular import write_csv
from .kernels import CovKernel, ShiftedWienerKernel
from .linear import LinearDdeParams, fundamental_prefix, fundamental_solution

__all__ = [
    "GaussianState", "r_t", "lag_cov_curve", "sigma2_curve", "SigmaCurve",
    "propagate_state", "wiener_closed_form", "factorized_sigma2",
    "write_r_slice",
]


# ---------------------------------------------------------------------------
# panel bookkeeping


def _x_knot_breaks(p: LinearDdeParams, c: float, lo: float, hi: float):
    """r in (lo, hi) where X(c - r - tau) crosses a smoothness knot."""
    out = []
    k = 0
    while True:
        r = c - (k + 1) * p.tau
        if r <= lo:
            break
        if r < hi:
            out.append(r)
        k += 1
    return out


def _m_single(kernel: CovKernel, p: LinearDdeParams, c: float, fixed_s: float,
              tol: float) -> float:
    """integral_{-tau}^{min(0, c - tau)} X(c - r - tau) K(r, fixed_s) dr."""
    hi = min(0.0, c - p.tau)
    lo = -p.tau
    if hi <= lo:
        return 0.0
    breaks = list(_x_knot_breaks(p, c, lo, hi))
    breaks += list(kernel.kink_positions(fixed_s, lo, hi))

    def f(r):
        return (fundamental_solution(p, c - r - p.tau)
                * kernel.value(r, fixed_s))

    return adaptive_simpson(f, lo, hi, tol=tol, breakpoints=breaks)


def _weighted_single(fn, p: LinearDdeParams, c: float, tol: float) -> float:
    """integral_{-tau}^{min(0, c - tau)} X(c - r - tau) fn(r) dr."""
    hi = min(0.0, c - p.tau)
    lo = -p.tau
    if hi <= lo:
        return 0.0

    def f(r):
        return fundamental_solution(p, c - r - p.tau) * fn(r)

    return adaptive_simpson(f, lo, hi, tol=tol,
                            breakpoints=_x_knot_breaks(p, c, lo, hi))


def _xx_double(kernel: CovKernel, p: LinearDdeParams, A: float, B: float,
               tol: float) -> float:
    """Double integral of X(A-r1-tau) X(B-r2-tau) K(r1, r2) over the window."""
    hi1 = min(0.0, A - p.tau)
    hi2 = min(0.0, B - p.tau)
    if hi1 <= -p.tau or hi2 <= -p.tau:
        return 0.0
    sep = kernel.separable_terms()
    if sep is not None:
        return math.fsum(
            _weighted_single(f, p, A, tol) * _weighted_single(f, p, B, tol)
            for f in sep)
    if isinstance(kernel, ShiftedWienerKernel):
        # min(r1, r2) + tau = measure of {q <= r1} cap {q <= r2} over [-tau, 0]
        # turns the double integral into a single one over q of the product
        # of two running integrals of X.
        iA = fundamental_prefix(p, A - p.tau)
        iB = fundamental_prefix(p, B - p.tau)

        def g(q):
            ga = fundamental_prefix(p, A - p.tau - q) - iA
            gb = fundamental_prefix(p, B - p.tau - q) - iB
            return ga * gb

        # kinks of the running integrals sit where A - tau - q (resp. B)
        # crosses a multiple of tau, i.e. at q = A - (k+1) tau
        breaks = sorted(set(_x_knot_breaks(p, A, -p.tau, 0.0)
                            + _x_knot_breaks(p, B, -p.tau, 0.0)))
        return adaptive_simpson(g, -p.tau, 0.0, tol=tol, breakpoints=breaks)

    def f2(r1, r2):
        return (fundamental_solution(p, A - r1 - p.tau)
                * fundamental_solution(p, B - r2 - p.tau)
                * kernel.value(r1, r2))

    def y_breaks(r1):
        return (_x_knot_breaks(p, B, -p.tau, hi2)
                + list(kernel.kink_positions(r1, -p.tau, hi2)))

    return adaptive_simpson_2d(
        f2, -p.tau, hi1, -p.tau, hi2, tol=tol,
        x_breaks=_x_knot_breaks(p, A, -p.tau, hi1), y_breaks=y_breaks)


# ---------------------------------------------------------------------------
# pointwise covariance


def _canonical_window_args(p, t, s1, s2):
    if s2 < s1:
        s1, s2 = s2, s1
    eps = 1e-12 * p.tau
    if t < -eps:
        raise ValueError("t must be nonnegative")
    if s1 < -p.tau - eps or s2 > eps:
        raise ValueError("s1, s2 must lie in [-tau, 0]")
    s1 = min(max(s1, -p.tau), 0.0)
    s2 = min(max(s2, -p.tau), 0.0)
    return max(t, 0.0), s1, s2


def r_t(kernel: CovKernel, p: LinearDdeParams, t: float, s1: float, s2: float,
        *, tol: float = 1e-9) -> float:
    """Covariance of the evolved Gaussian process at window offsets s1, s2."""
    t, s1, s2 = _canonical_window_args(p, t, s1, s2)
    A = t + s1
    B = t + s2
    if B <= 0.0:
        return float(kernel.value(A, B))
    if A <= 0.0:
        return float(fundamental_solution(p, B) * kernel.value(A, 0.0)
                     + p.b * _m_single(kernel, p, B, A, tol))
    xa = fundamental_solution(p, A)
    xb = fundamental_solution(p, B)
    return float(xa * xb * kernel.value(0.0, 0.0)
                 + p.b * xa * _m_single(kernel, p, B, 0.0, tol)
                 + p.b * xb * _m_single(kernel, p, A, 0.0, tol)
                 + p.b ** 2 * _xx_double(kernel, p, A, B, tol))


# ---------------------------------------------------------------------------
# batched curves


def _ragged_edges(lo, hi, candidates):
    """Sorted panel edges per row from per-row break candidates."""
    cols = [np.broadcast_to(lo, lo.shape)[:, None]]
    for c in candidates:
        cols.append(np.clip(np.asarray(c, dtype=float), lo, hi)[:, None])
    cols.append(np.broadcast_to(hi, lo.shape)[:, None])
    edges = np.concatenate(cols, axis=1)
    edges.sort(axis=1)
    return edges


def _batched_weighted_single(fn, p: LinearDdeParams, c):
    """Vectorized integral_{-tau}^{min(0, c-tau)} X(c - r - tau) fn(r) dr."""
    c = np.asarray(c, dtype=float)
    lo = np.full_like(c, -p.tau)
    hi = np.minimum(0.0, c - p.tau)
    hi = np.maximum(hi, lo)
    kmax = max(0, int(np.ceil(float(c.max(initial=0.0)) / p.tau)))
    cands = [c - (k + 1) * p.tau for k in range(kmax + 1)]
    edges = _ragged_edges(lo, hi, cands)

    def integrand(r):
        cc = c.reshape(c.shape + (1, 1))
        return fundamental_solution(p, cc - r - p.tau) * fn(r)

    return panel_gauss(integrand, edges, order=24)


def lag_cov_curve(kernel: CovKernel, p: LinearDdeParams, s_values,
                  *, tol: float = 1e-9, chunk: int = 256) -> np.ndarray:
    """R_s(-tau, 0) for an array of times; structured kernels run batched.

    Evaluation proceeds in chunks of ``chunk`` times: the batched panel
    integrals broadcast times x panels x nodes (x prefix-tail nodes), and
    bounding the leading axis keeps the transient arrays tens of megabytes
    even for horizons of many delay intervals.
    """
    s = np.asarray(s_values, dtype=float)
    if s.ndim != 1:
        raise ValueError("s_values must be 1-d")
    if np.any(s < -1e-12):
        raise ValueError("times must be nonnegative")
    if len(s) > chunk:
        out = np.empty_like(s)
        for i in range(0, len(s), chunk):
            out[i:i + chunk] = lag_cov_curve(kernel, p, s[i:i + chunk],
                                             tol=tol, chunk=chunk)
        return out
    out = np.empty_like(s)
    early = s <= p.tau
    if early.any():
        se = s[early]
        head = fundamental_solution(p, se) * kernel.value(se - p.tau, 0.0)
        lo = np.full_like(se, -p.tau)
        hi = np.maximum(se - p.tau, lo)
        kink_rows = [kernel.kink_positions(float(c), -p.tau, float(h))
                     for c, h in zip(se - p.tau, hi)]
        width = max((len(k) for k in kink_rows), default=0)
        cands = [np.array([row[i] if i < len(row) else -p.tau
                           for row in kink_rows]) for i in range(width)]
        edges = _ragged_edges(lo, hi, cands)

        def integrand(r):
            # X(s - r - tau) = e^{a (s - r - tau)} here: the argument stays
            # within the first delay interval for s <= tau.
            cc = se.reshape(se.shape + (1, 1))
            return (np.exp(p.a * (cc - r - p.tau))
                    * kernel.value(r, cc - p.tau))

        out[early] = head + p.b * panel_gauss(integrand, edges, order=24)
    late = ~early
    if late.any():
        sl = s[late]
        A = sl - p.tau
        B = sl
        xa = fundamental_solution(p, A)
        xb = fundamental_solution(p, B)
        k00 = float(kernel.value(0.0, 0.0))
        sep = kernel.separable_terms()
        if sep is not None:
            ja = [_batched_weighted_single(f, p, A) for f in sep]
            jb = [_batched_weighted_single(f, p, B) for f in sep]
            f0 = [float(f(0.0)) for f in sep]
            i_a = sum(w * j for w, j in zip(f0, ja))
            i_b = sum(w * j for w, j in zip(f0, jb))
            dbl = sum(a_ * b_ for a_, b_ in zip(ja, jb))
            out[late] = (xa * xb * k00 + p.b * xa * i_b + p.b * xb * i_a
                         + p.b ** 2 * dbl)
        elif isinstance(kernel, ShiftedWienerKernel):
            def ramp(r):
                return r + p.tau

            i_a = _batched_weighted_single(ramp, p, A)
            i_b = _batched_weighted_single(ramp, p, B)
            iA = fundamental_prefix(p, A - p.tau)
            iB = fundamental_prefix(p, B - p.tau)
            kmax = max(0, int(np.ceil(float(B.max()) / p.tau)))
            cands = [A - (k + 1) * p.tau for k in range(kmax + 1)]
            cands += [B - (k + 1) * p.tau for k in range(kmax + 1)]
            lo = np.full_like(sl, -p.tau)
            hi = np.zeros_like(sl)
            edges = _ragged_edges(lo, hi, cands)

            def gg(q):
                a3 = A.reshape(A.shape + (1, 1))
                b3 = B.reshape(B.shape + (1, 1))
                ga = (fundamental_prefix(p, a3 - p.tau - q)
                      - iA.reshape(iA.shape + (1, 1)))
                gb = (fundamental_prefix(p, b3 - p.tau - q)
                      - iB.reshape(iB.shape + (1, 1)))
                return ga * gb

            dbl = panel_gauss(gg, edges, order=24)
            out[late] = (xa * xb * k00 + p.b * xa * i_b + p.b * xb * i_a
                         + p.b ** 2 * dbl)
        else:
            out[late] = [r_t(kernel, p, float(si), -p.tau, 0.0, tol=tol)
                         for si in sl]
    return out


@dataclass
class SigmaCurve:
    """Variance curve with the evolution-equation residual at each node."""

    t: np.ndarray
    sigma2: np.ndarray
    residual: np.ndarray

    def to_csv(self, path):
        write_csv(path, ["t", "sigma2", "residual"],
                  [self.t, self.sigma2, self.residual])

    def at(self, t_query: float) -> float:
        i = int(np.argmin(np.abs(self.t - t_query)))
        if abs(self.t[i] - t_query) > 1e-9 + 1e-9 * abs(t_query):
            raise ValueError(f"t = {t_query} not on the curve grid")
        return float(self.sigma2[i])


def sigma2_curve(kernel: CovKernel, p: LinearDdeParams, T: float, dt: float,
                 *, tol: float = 1e-9) -> SigmaCurve:
    """Variance of x(t) on a uniform grid via the integral representation

        sigma^2(t) = e^{2at} [ sigma^2(0) + 2b * integral_0^t e^{-2as}
                               R_s(-tau, 0) ds ].

    The running integral accumulates 5-point Gauss-Legendre panels (one per
    grid step), and the residual |d sigma^2/dt - 2a sigma^2 - 2b R_t(-tau,0)|
    uses centered differences, switching to one-sided second-order stencils
    at the endpoints and at the breakpoints t = k tau where the curve is
    only C^1 (one-sided grids are exact when tau is a grid multiple).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = int(round(T / dt))
    if n < 2 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of dt (at least 2 steps)")
    t_grid = dt * np.arange(n + 1)
    gx, gw = np.polynomial.legendre.leggauss(5)
    panel_nodes = (t_grid[:-1, None] + 0.5 * dt * (gx + 1.0)).ravel()
    all_s = np.concatenate([t_grid, panel_nodes])
    r_all = lag_cov_curve(kernel, p, all_s, tol=tol)
    r_grid = r_all[: n + 1]
    r_panel = r_all[n + 1:].reshape(n, 5)
    s_panel = panel_nodes.reshape(n, 5)
    wexp = np.exp(-2.0 * p.a * s_panel)
    panels = 0.5 * dt * (wexp * r_panel * gw).sum(axis=1)
    running = np.concatenate([[0.0], np.cumsum(panels)])
    sigma0 = float(kernel.value(0.0, 0.0))
    sigma2 = np.exp(2.0 * p.a * t_grid) * (sigma0 + 2.0 * p.b * running)

    deriv = np.empty_like(sigma2)
    deriv[1:-1] = (sigma2[2:] - sigma2[:-2]) / (2.0 * dt)
    deriv[0] = (-3.0 * sigma2[0] + 4.0 * sigma2[1] - sigma2[2]) / (2.0 * dt)
    deriv[-1] = (3.0 * sigma2[-1] - 4.0 * sigma2[-2] + sigma2[-3]) / (2.0 * dt)
    per = p.tau / dt
    if abs(round(per) - per) < 1e-9:
        m = int(round(per))
        for i in range(m, n - 1, m):
            if i >= 2:
                deriv[i] = (3.0 * sigma2[i] - 4.0 * sigma2[i - 1]
                            + sigma2[i - 2]) / (2.0 * dt)
    residual = np.abs(deriv - 2.0 * p.a * sigma2 - 2.0 * p.b * r_grid)
    return SigmaCurve(t=t_grid, sigma2=sigma2, residual=residual)


# ---------------------------------------------------------------------------
# two-time state and closed forms


@dataclass(frozen=True)
class GaussianState:
    """Second moments of (x(t), x(t - tau)) for the evolved process."""

    t: float
    sigma2_t: float
    sigma2_lag: float
    cross: float

    def __post_init__(self):
        if self.sigma2_t < -1e-10 or self.sigma2_lag < -1e-10:
            raise ValueError("negative variance")
        bound = math.sqrt(max(self.sigma2_t, 0.0)
                          * max(self.sigma2_lag, 0.0))
        if abs(self.cross) > bound + 1e-10:
            raise ValueError("covariance violates Cauchy-Schwarz")

    @property
    def det(self) -> float:
        return self.sigma2_t * self.sigma2_lag - self.cross ** 2

    @property
    def q_matrix(self) -> np.ndarray:
        return np.array([[self.sigma2_t, self.cross],
                         [self.cross, self.sigma2_lag]])


def propagate_state(kernel: CovKernel, p: LinearDdeParams, t: float,
                    *, tol: float = 1e-9) -> GaussianState:
    """Assemble the joint Gaussian state of (x(t), x(t - tau))."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    s_t = r_t(kernel, p, t, 0.0, 0.0, tol=tol)
    cross = r_t(kernel, p, t, -p.tau, 0.0, tol=tol)
    if t < p.tau:
        s_lag = float(kernel.value(t - p.tau, t - p.tau))
    else:
        s_lag = r_t(kernel, p, t, -p.tau, -p.tau, tol=tol)
    return GaussianState(t=float(t), sigma2_t=max(s_t, 0.0),
                         sigma2_lag=max(s_lag, 0.0), cross=cross)


_A_SWITCH = 1e-6


def _expm1_minus_x(x: float) -> float:
    """e^x - 1 - x without cancellation."""
    if abs(x) < 1e-4:
        return 0.5 * x * x * (1.0 + x / 3.0 + x * x / 12.0 + x ** 3 / 60.0)
    return math.expm1(x) - x


def _sq_expm1_residue(x: float) -> float:
    """(e^x - 1)^2 - 2(e^x - 1 - x); leading order (2/3) x^3."""
    if abs(x) < 1e-3:
        return x ** 3 * (2.0 / 3.0 + 0.5 * x + (7.0 / 30.0) * x * x
                         + x ** 3 / 12.0)
    em = math.expm1(x)
    return em * em - 2.0 * (em - x)


def wiener_closed_form(p: LinearDdeParams, t: float):
    """Closed-form (R_t(-tau, 0), sigma^2(t)) for the running-minimum kernel.

    Valid on ``0 <= t <= tau``.  The a != 0 expressions divide
    exponential differences by a^2 and a^3; those differences are
    evaluated by expm1/series helpers so the branch stays accurate
    arbitrarily close to a = 0.  Below |a| < 1e-6 the a = 0 polynomial is
    used outright; the seam mismatch is the genuine a-dependence of the
    curve, of order |a| (about 1e-6 here), not a rounding artifact.
    """
    if not 0.0 <= t <= p.tau * (1.0 + 1e-12):
        raise ValueError("closed form valid on [0, tau] only")
    a, b = p.a, p.b
    if abs(a) < _A_SWITCH:
        r_lag = t + 0.5 * b * t * t
        sigma2 = p.tau + b * t * t + (b * b / 3.0) * t ** 3
    else:
        ea = math.exp(a * t)
        core = _expm1_minus_x(a * t)
        r_lag = ea * t + (b / a ** 2) * core
        sigma2 = (ea * ea * p.tau + (2.0 * b / a ** 2) * ea * core
                  + (b * b / (2.0 * a ** 3)) * _sq_expm1_residue(a * t))
    return r_lag, sigma2


def factorized_sigma2(kernel: CovKernel, p: LinearDdeParams, t: float,
                      *, tol: float = 1e-9) -> float:
    """Variance via the factorized-kernel identity.

    For kernels expressible as R(s1, s2) = integral eta_r(s1) eta_r(s2) dr,
    the variance is the r-integral of the squared evolved factor
    S_t eta_r(0).  The running-minimum kernel uses the closed form of
    S_t eta_r(0) on t in [0, tau]; other factorizable kernels evaluate the
    factor by quadrature.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    factorization = kernel.eta()
    if factorization is None:
        raise ValueError("kernel does not declare a factorization")
    eta_r, (rlo, rhi) = factorization
    if isinstance(kernel, ShiftedWienerKernel) and t <= p.tau:
        a, b = p.a, p.b

        def st0(r):
            gap = np.maximum(t - r - p.tau, 0.0)
            if abs(a) < _A_SWITCH:
                return 1.0 + b * gap
            return math.exp(a * t) + (b / a) * (np.exp(a * gap) - 1.0)

        return adaptive_simpson(lambda r: st0(r) ** 2, rlo, rhi, tol=tol,
                                breakpoints=(t - p.tau,))

    def st0_generic(r_arr):
        out = np.empty_like(np.atleast_1d(np.asarray(r_arr, dtype=float)))
        r_flat = np.atleast_1d(np.asarray(r_arr, dtype=float))
        hi_q = min(0.0, t - p.tau)
        for i, r in enumerate(r_flat):
            head = fundamental_solution(p, t) * float(eta_r(r, 0.0))
            if hi_q > -p.tau:
                inner = adaptive_simpson(
                    lambda q, r=r: (fundamental_solution(p, t - q - p.tau)
                                    * eta_r(r, q)),
                    -p.tau, hi_q, tol=tol,
                    breakpoints=[x for x in (r,) if -p.tau < x < hi_q])
            else:
                inner = 0.0
            out[i] = head + p.b * inner
        return out.reshape(np.shape(r_arr))

    return adaptive_simpson(lambda r: st0_generic(r) ** 2, rlo, rhi,
                            tol=max(tol, 1e-8))


def write_r_slice(path, kernel: CovKernel, p: LinearDdeParams, t, pairs,
                  *, tol: float = 1e-9):
    """CSV of covariance values at fixed times over window-offset pairs."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    rows_t, rows_s1, rows_s2, rows_r = [], [], [], []
    for ti in t_arr:
        for (s1, s2) in pairs:
            rows_t.append(ti)
            rows_s1.append(s1)
            rows_s2.append(s2)
            rows_r.append(r_t(kernel, p, float(ti), float(s1), float(s2),
                              tol=tol))
    write_csv(path, ["t", "s1", "s2", "R"],
              [rows_t, rows_s1, rows_s2, rows_r])
