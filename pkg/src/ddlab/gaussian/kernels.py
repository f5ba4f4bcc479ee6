"""Covariance kernels on the delay window ``[-tau, 0]``.

A kernel is an evaluable symmetric function ``R(s1, s2)``; symmetry is exact
by construction because evaluation canonicalizes the argument order.  Each
kernel may advertise structure the covariance propagator can exploit:

* ``separable_terms`` — functions ``f_m`` with ``R = sum_m f_m(s1) f_m(s2)``
  (finite rank), turning double integrals into products of singles;
* ``kink_positions`` — the ``r`` locations where ``r -> R(r, c)`` is not
  smooth, used to split quadrature panels;
* ``eta`` — a factorization ``R(s1, s2) = integral eta_r(s1) eta_r(s2) dr``
  for the variance identity tested against the generic pipeline.
"""
from __future__ import annotations

import numpy as np

from ..errors import KernelPositivityError
from ..tabular import read_csv, write_csv


class CovKernel:
    """Base class: symmetric positive-semidefinite function on [-tau, 0]^2."""

    def value(self, s1, s2):
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        lo = np.minimum(s1, s2)
        hi = np.maximum(s1, s2)
        return self._value(lo, hi)

    def _value(self, lo, hi):  # pragma: no cover - abstract
        raise NotImplementedError

    # ---- optional structure ------------------------------------------------

    def separable_terms(self):
        """Finite-rank factorization, or None."""
        return None

    def kink_positions(self, c, lo, hi):
        """Kinks of ``r -> value(r, c)`` inside ``(lo, hi)``."""
        return ()

    def eta(self):
        """``(eta(r, s), r_support)`` factorization per unit rank, or None."""
        return None

    # ---- validation --------------------------------------------------------

    def check_grid(self, tau, n=16, tol=1e-8):
        """Verify symmetry and near-PSD-ness of the Gram matrix on a grid."""
        s = np.linspace(-tau, 0.0, n)
        gram = self.value(s[:, None], s[None, :])
        asym = np.abs(gram - gram.T).max()
        if asym > 1e-12:
            raise KernelPositivityError(f"kernel asymmetry {asym:.2e}")
        w = np.linalg.eigvalsh(gram)
        if w.min() < -tol:
            raise KernelPositivityError(
                f"smallest Gram eigenvalue {w.min():.2e} on {n}x{n} grid")
        return float(w.min())


class CosineKernel(CovKernel):
    """R(s1, s2) = cos(s2 - s1): stationary, rank two."""

    def _value(self, lo, hi):
        return np.cos(hi - lo)

    def separable_terms(self):
        return (np.cos, np.sin)


class DegenerateCosineKernel(CovKernel):
    """R(s1, s2) = cos(s1) cos(s2): rank one, supported on a line."""

    def _value(self, lo, hi):
        return np.cos(lo) * np.cos(hi)

    def separable_terms(self):
        return (np.cos,)


class ShiftedWienerKernel(CovKernel):
    """R(s1, s2) = min(s1, s2) + tau: Wiener path started at ``-tau``."""

    def __init__(self, tau):
        if tau <= 0.0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)

    def _value(self, lo, hi):
        return lo + self.tau

    def kink_positions(self, c, lo, hi):
        c = float(c)
        return (c,) if lo < c < hi else ()

    def eta(self):
        def eta_r(r, s):
            return np.where((s >= r) & (s <= 0.0), 1.0, 0.0)

        return eta_r, (-self.tau, 0.0)


class ProductSeparableKernel(CovKernel):
    """R(s1, s2) = u(min) v(max) with u(-tau) = 0, v > 0, u/v nondecreasing.

    This is the covariance of v(s) W(u(s)/v(s)) for a standard Wiener
    process W.  When the derivative of u/v is supplied, the kernel
    factorizes through eta_r(s) = v(s) sqrt((u/v)'(r)) 1_{r <= s}: the
    r-integral of eta_r(s1) eta_r(s2) telescopes to u(min) v(max).
    """

    def __init__(self, u, v, tau, ratio_derivative=None):
        self.u = u
        self.v = v
        self.tau = float(tau)
        self.ratio_derivative = ratio_derivative
        if abs(float(u(-self.tau))) > 1e-12:
            raise ValueError("u must vanish at -tau")

    def _value(self, lo, hi):
        return np.asarray(self.u(lo)) * np.asarray(self.v(hi))

    def kink_positions(self, c, lo, hi):
        c = float(c)
        return (c,) if lo < c < hi else ()

    def eta(self):
        if self.ratio_derivative is None:
            return None
        v, dratio = self.v, self.ratio_derivative

        def eta_r(r, s):
            g = np.sqrt(np.maximum(np.asarray(dratio(r), dtype=float), 0.0))
            return np.where(r <= s, np.asarray(v(s)) * g, 0.0)

        return eta_r, (-self.tau, 0.0)


class TabulatedKernel(CovKernel):
    """Bilinear interpolation of values on a uniform grid over [-tau, 0]^2."""

    def __init__(self, values, tau):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("need a square value grid")
        if values.shape[0] < 2:
            raise ValueError("need at least a 2x2 grid")
        if np.abs(values - values.T).max() > 1e-12:
            raise ValueError("tabulated kernel must be symmetric")
        self.values = values
        self.tau = float(tau)
        self.grid = np.linspace(-self.tau, 0.0, values.shape[0])

    def _value(self, lo, hi):
        return self._bilinear(lo, hi)

    def _bilinear(self, s1, s2):
        n = self.values.shape[0] - 1
        h = self.tau / n
        p1 = np.clip((np.asarray(s1) + self.tau) / h, 0.0, float(n))
        p2 = np.clip((np.asarray(s2) + self.tau) / h, 0.0, float(n))
        i1 = np.minimum(p1.astype(int), n - 1)
        i2 = np.minimum(p2.astype(int), n - 1)
        f1 = p1 - i1
        f2 = p2 - i2
        v = self.values
        return ((1 - f1) * (1 - f2) * v[i1, i2] + f1 * (1 - f2) * v[i1 + 1, i2]
                + (1 - f1) * f2 * v[i1, i2 + 1] + f1 * f2 * v[i1 + 1, i2 + 1])

    def kink_positions(self, c, lo, hi):
        inside = (self.grid > lo) & (self.grid < hi)
        return tuple(self.grid[inside])

    @classmethod
    def from_csv(cls, path):
        header, (s1, s2, r) = read_csv(path)
        if header != ["s1", "s2", "R"]:
            raise ValueError("expected header s1,s2,R")
        grid = np.unique(s1)
        n = grid.size
        if n * n != s1.size:
            raise ValueError("rows do not form a full square grid")
        tau = -float(grid[0])
        values = np.full((n, n), np.nan)
        h = tau / (n - 1)
        i = np.rint((s1 - grid[0]) / h).astype(int)
        j = np.rint((s2 - grid[0]) / h).astype(int)
        values[i, j] = r
        if np.isnan(values).any():
            raise ValueError("rows do not form a full square grid")
        return cls(values, tau)

    def to_csv(self, path):
        n = self.grid.size
        s1 = np.repeat(self.grid, n)
        s2 = np.tile(self.grid, n)
        write_csv(path, ["s1", "s2", "R"], [s1, s2, self.values.ravel()])
