"""Piecewise-constant densities on uniform grids.

A :class:`GridDensity` stores cell-averaged values of a probability density on
``n`` equal cells covering ``[lo, hi]``.  The associated cumulative integral
is piecewise linear and, because it is built from prefix sums of nonnegative
numbers, is nondecreasing even in floating point — the transfer-operator
pushforwards in :mod:`ddlab.maps` rely on that to stay nonnegative exactly.
"""
from __future__ import annotations

import numpy as np

from .tabular import write_csv


class GridDensity:
    """Cell-averaged density on a uniform grid over ``[lo, hi]``."""

    __slots__ = ("values", "lo", "hi", "_prefix")

    def __init__(self, values, lo=0.0, hi=1.0):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0.0):
            raise ValueError("density values must be nonnegative")
        if not hi > lo:
            raise ValueError("require hi > lo")
        self.values = values
        self.lo = float(lo)
        self.hi = float(hi)
        self._prefix = None

    # -- construction ------------------------------------------------------

    @classmethod
    def uniform(cls, n, lo=0.0, hi=1.0):
        return cls(np.full(n, 1.0 / (hi - lo)), lo, hi)

    @classmethod
    def from_values(cls, values, lo=0.0, hi=1.0, normalize=False):
        d = cls(values, lo, hi)
        return d.normalized() if normalize else d

    @classmethod
    def point_mass(cls, x, n, lo=0.0, hi=1.0):
        """All mass in the single cell containing ``x``."""
        d = cls.uniform(n, lo, hi)
        w = d.cell_width
        idx = min(int((x - lo) / w), n - 1)
        v = np.zeros(n)
        v[idx] = 1.0 / w
        return cls(v, lo, hi)

    # -- basic geometry ----------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def cell_width(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    # -- integration -------------------------------------------------------

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_width)

    def normalized(self) -> "GridDensity":
        m = self.mass()
        if m <= 0.0:
            raise ValueError("cannot normalize a zero density")
        return GridDensity(self.values / m, self.lo, self.hi)

    def prefix(self) -> np.ndarray:
        """Cumulative integral at cell edges; ``prefix[0] == 0``."""
        if self._prefix is None:
            p = np.empty(self.n + 1)
            p[0] = 0.0
            np.cumsum(self.values * self.cell_width, out=p[1:])
            self._prefix = p
        return self._prefix

    def cumulative(self, x) -> np.ndarray:
        """Integral of the density over ``[lo, min(x, hi)]``, vectorized."""
        x = np.asarray(x, dtype=float)
        w = self.cell_width
        pos = np.clip((x - self.lo) / w, 0.0, float(self.n))
        idx = np.minimum(pos.astype(int), self.n - 1)
        frac = np.clip(x - (self.lo + idx * w), 0.0, w)
        return self.prefix()[idx] + self.values[idx] * frac

    def integrate(self, a, b) -> float:
        """Integral over ``[a, b]`` intersected with the domain."""
        if b < a:
            a, b = b, a
        return float(self.cumulative(b) - self.cumulative(a))

    def l1_distance(self, other: "GridDensity") -> float:
        self._check_same_grid(other)
        return float(np.abs(self.values - other.values).sum() * self.cell_width)

    def _check_same_grid(self, other: "GridDensity") -> None:
        if (self.n != other.n or abs(self.lo - other.lo) > 1e-12
                or abs(self.hi - other.hi) > 1e-12):
            raise ValueError("densities live on different grids")

    # -- io ----------------------------------------------------------------

    def to_csv(self, path) -> None:
        e = self.edges
        write_csv(path, ["x_left", "x_right", "density"],
                  [e[:-1], e[1:], self.values])

    def __repr__(self):
        return (f"GridDensity(n={self.n}, lo={self.lo:g}, hi={self.hi:g}, "
                f"mass={self.mass():.6g})")


class Histogram:
    """Counts over frozen uniform bins, with a density view."""

    __slots__ = ("counts", "lo", "hi", "total")

    def __init__(self, counts, lo, hi, total=None):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.lo = float(lo)
        self.hi = float(hi)
        self.total = int(total) if total is not None else int(self.counts.sum())

    @classmethod
    def from_samples(cls, samples, bins, lo=None, hi=None):
        """Histogram samples; bin edges default to the sample range.

        A degenerate range (all samples equal) is widened to a single
        occupied bin of tiny but positive width.
        """
        samples = np.asarray(samples, dtype=float)
        if lo is None:
            lo = float(samples.min())
        if hi is None:
            hi = float(samples.max())
        if hi <= lo:
            pad = max(abs(lo) * 1e-9, 1e-12)
            lo, hi = lo - pad, hi + pad
        counts, _ = np.histogram(samples, bins=bins, range=(lo, hi))
        return cls(counts, lo, hi, total=samples.size)

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    def densities(self) -> np.ndarray:
        """Counts normalized by total sample count and bin width.

        Samples falling outside the frozen range are excluded from the
        counts but still divide, so the mass reflects the captured fraction.
        """
        return self.counts / (self.total * self.bin_width)

    def density(self) -> GridDensity:
        return GridDensity(self.densities(), self.lo, self.hi)

    def l1_distance(self, other: "Histogram") -> float:
        if (self.n != other.n or abs(self.lo - other.lo) > 1e-12
                or abs(self.hi - other.hi) > 1e-12):
            raise ValueError("histograms use different binnings")
        return float(np.abs(self.densities() - other.densities()).sum()
                     * self.bin_width)
