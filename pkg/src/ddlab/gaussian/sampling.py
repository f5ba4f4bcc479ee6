"""Draw sample paths of the initial Gaussian history measures.

Each named kernel has an explicit pathwise construction (amplitude-phase
cosine, cumulative-sum Wiener, time-changed Wiener), so sampling is exact in
distribution at the grid nodes; kernels without structure fall back to a
Cholesky factor of the node Gram matrix.  Paths are deterministic per seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import KernelPositivityError
from .kernels import (CosineKernel, DegenerateCosineKernel,
                      ProductSeparableKernel, ShiftedWienerKernel)

__all__ = ["SampledHistory", "sample_gaussian_history"]


@dataclass(frozen=True)
class SampledHistory:
    """History values on the uniform grid s_j = -tau + j tau / m."""

    values: np.ndarray
    tau: float

    @property
    def m(self) -> int:
        return len(self.values) - 1

    @property
    def nodes(self) -> np.ndarray:
        return -self.tau + np.arange(self.m + 1) * (self.tau / self.m)

    def __call__(self, s):
        """Piecewise-linear evaluation on [-tau, 0]."""
        pos = (np.asarray(s, dtype=float) + self.tau) / self.tau * self.m
        pos = np.clip(pos, 0.0, self.m)
        j = np.minimum(pos.astype(int), self.m - 1)
        frac = pos - j
        out = (1.0 - frac) * self.values[j] + frac * self.values[j + 1]
        return float(out) if out.ndim == 0 else out


def sample_gaussian_history(kernel, m: int, tau: float,
                            seed) -> SampledHistory:
    """One path of the centered Gaussian measure with covariance ``kernel``."""
    if m < 2:
        raise ValueError("need at least two history intervals")
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    own_tau = getattr(kernel, "tau", None)
    if own_tau is not None and abs(own_tau - tau) > 1e-12 * tau:
        raise ValueError(f"kernel window {own_tau} != requested tau {tau}")
    rng = np.random.default_rng(seed)
    s = -tau + np.arange(m + 1) * (tau / m)

    if isinstance(kernel, CosineKernel):
        # amplitude from the Rayleigh law by inverse CDF, phase uniform
        amp = math.sqrt(-2.0 * math.log(1.0 - rng.random()))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        values = amp * np.cos(s - theta)
    elif isinstance(kernel, DegenerateCosineKernel):
        values = rng.standard_normal() * np.cos(s)
    elif isinstance(kernel, ShiftedWienerKernel):
        h = tau / m
        steps = rng.standard_normal(m) * math.sqrt(h)
        values = np.concatenate([[0.0], np.cumsum(steps)])
    elif isinstance(kernel, ProductSeparableKernel):
        clock = np.asarray(kernel.u(s), dtype=float) / np.asarray(
            kernel.v(s), dtype=float)
        d = np.diff(clock)
        if np.any(d < -1e-12):
            raise ValueError("u/v must be nondecreasing on the window")
        steps = rng.standard_normal(m) * np.sqrt(np.maximum(d, 0.0))
        w = np.concatenate([[0.0], np.cumsum(steps)])
        values = np.asarray(kernel.v(s), dtype=float) * w
    else:
        gram = np.asarray(kernel.value(s[:, None], s[None, :]), dtype=float)
        gram = 0.5 * (gram + gram.T)
        try:
            chol = np.linalg.cholesky(gram + 1e-12 * np.eye(m + 1))
        except np.linalg.LinAlgError as exc:
            raise KernelPositivityError(
                "Gram matrix is not positive semidefinite "
                "(Cholesky failed after jitter)") from exc
        values = chol @ rng.standard_normal(m + 1)

    return SampledHistory(values=values, tau=float(tau))
