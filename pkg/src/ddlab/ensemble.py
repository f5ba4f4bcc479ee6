"""Ensembles of delay trajectories and the densities they carry.

The workflow is: describe an initial ensemble (`IidUniformPath`,
`ConstantPath`, `GaussianHistory`, `Mixture`), draw it with
`sample_initial`, push it through a field with `evolve_ensemble`, and
interrogate the resulting histogram snapshots with
`detect_density_period`.  Trajectory-level statistics (mean-square
displacement, stationary velocity moments) come from
`evolve_trajectories` + `msd_curve` / `velocity_stats`.

Binning convention: the first snapshot in the requested schedule fixes
the histogram range, which is then frozen; later samples are clipped
into it before counting, so every snapshot accounts for all n
trajectories and its density integrates to one exactly.

Determinism: per-trajectory noise streams are seeded from (seed, global
trajectory index), so results are independent of chunking and of the
thread count used to split the batch.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dde import History, Trajectory, integrate_batch
from .density import Histogram
from .gaussian import sample_gaussian_history
from .tabular import write_csv

_GRID_RTOL = 1e-9


# ---------------------------------------------------------------------------
# initial-ensemble descriptions


@dataclass(frozen=True)
class IidUniformPath:
    """Every history node drawn independently from uniform[lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")


@dataclass(frozen=True)
class ConstantPath:
    """Every trajectory starts from the same constant history."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("value must be finite")


@dataclass(frozen=True)
class GaussianHistory:
    """Histories drawn from the centered Gaussian law of a covariance kernel."""

    kernel: object


@dataclass(frozen=True)
class Mixture:
    """Concatenation of sub-ensembles with fixed member counts."""

    components: tuple

    def __post_init__(self):
        comps = tuple((spec, int(count)) for spec, count in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        for spec, count in comps:
            if count <= 0:
                raise ValueError("component counts must be positive")
            if isinstance(spec, Mixture):
                raise ValueError("mixtures do not nest")
        object.__setattr__(self, "components", comps)

    @property
    def total(self) -> int:
        return sum(count for _, count in self.components)


def _sample_block(spec, n, m, tau, seedseq):
    if isinstance(spec, IidUniformPath):
        rng = np.random.default_rng(seedseq)
        return rng.uniform(spec.lo, spec.hi, (n, m + 1))
    if isinstance(spec, ConstantPath):
        return np.full((n, m + 1), float(spec.value))
    if isinstance(spec, GaussianHistory):
        rows = [
            sample_gaussian_history(spec.kernel, m, tau, child).values
            for child in seedseq.spawn(n)
        ]
        return np.array(rows)
    if isinstance(spec, Mixture):
        blocks = [
            _sample_block(sub, count, m, tau, child)
            for child, (sub, count) in zip(
                seedseq.spawn(len(spec.components)), spec.components)
        ]
        return np.concatenate(blocks)
    raise TypeError(f"unknown ensemble description {type(spec).__name__}")


def sample_initial(spec, n, m, tau, seed=None) -> list[History]:
    """Draw ``n`` initial histories on the m-interval grid of width tau.

    ``Mixture`` components keep their listed order in the returned list,
    and ``n`` must equal the mixture's total count.  Reproducible for a
    fixed integer seed regardless of the composition of the ensemble.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one trajectory")
    if isinstance(spec, Mixture) and spec.total != n:
        raise ValueError(
            f"mixture counts sum to {spec.total}, but n = {n}")
    block = _sample_block(spec, n, m, tau, np.random.SeedSequence(seed))
    return [History(tau, row) for row in block]


def as_velocity_histories(histories: Sequence[History]) -> list[History]:
    """Lift scalar histories to (position, velocity) pairs.

    The scalar path becomes the velocity component; position starts at
    rest at the origin.  This is the natural preparation for fields
    whose state is (x, v) but whose feedback involves only delayed v.
    """
    out = []
    for h in histories:
        if h.dim != 1:
            raise ValueError("histories are already multi-component")
        stacked = np.stack([np.zeros_like(h.samples), h.samples], axis=-1)
        out.append(History(h.tau, stacked, t_now=h.t_now))
    return out


# ---------------------------------------------------------------------------
# pushing ensembles through a field


def _stack_histories(histories):
    if not histories:
        raise ValueError("empty ensemble")
    tau = histories[0].tau
    shape = histories[0].samples.shape
    for h in histories:
        if abs(h.tau - tau) > 1e-12 * tau:
            raise ValueError("histories disagree on the delay")
        if h.samples.shape != shape:
            raise ValueError("histories disagree on the grid")
    return np.stack([h.samples for h in histories]), tau, shape[0] - 1


def _grid_index(t, h):
    k = round(t / h)
    if abs(k * h - t) > _GRID_RTOL * max(1.0, abs(t)):
        raise ValueError(f"time {t:g} does not lie on the step-{h:g} grid")
    return k


def _noise_block(noise, T, seed, indices):
    count = int(np.floor(T / noise.resample_interval + 1e-9)) + 1
    return np.stack([
        noise.segment_values(np.random.default_rng((seed, int(i))), count)
        for i in indices
    ])


def _resolve_seed(seed):
    if seed is None:
        return int(np.random.default_rng().integers(2 ** 62))
    return seed


def ensemble_values(histories, field, times, *, seed=None,
                    threads=1) -> np.ndarray:
    """First state component of every trajectory at the given grid times.

    Returns an (n_trajectories, len(times)) array.  Times at or before
    zero are read from the histories; positive times come from one
    integration pass to the latest requested node.  Splitting the batch
    across threads does not change a single bit of the result, because
    trajectory i's noise stream depends only on (seed, i).
    """
    stacked, tau, m = _stack_histories(histories)
    h = tau / m
    ks = [_grid_index(t, h) for t in times]
    if min(ks) < -m:
        raise ValueError("requested time precedes the stored history")
    B = stacked.shape[0]
    d = 1 if stacked.ndim == 2 else stacked.shape[2]
    out = np.empty((B, len(times)))

    wanted = {}
    for col, k in enumerate(ks):
        wanted.setdefault(k, []).append(col)
    for k, cols in wanted.items():
        if k <= 0:
            node = stacked[:, k + m] if d == 1 else stacked[:, k + m, 0]
            out[:, cols] = node[:, None]

    k_max = max(ks)
    if k_max <= 0:
        return out

    noise = getattr(field, "noise", None)
    base_seed = _resolve_seed(seed) if noise is not None else None
    T = k_max * h
    n_chunks = max(1, min(int(threads), B))
    bounds = np.linspace(0, B, n_chunks + 1).astype(int)

    def work(c):
        lo, hi = bounds[c], bounds[c + 1]
        table = None
        if noise is not None:
            table = _noise_block(noise, T, base_seed, range(lo, hi))

        def obs(k, y):
            cols = wanted.get(k)
            if cols is not None and k > 0:
                col_vals = y[:, 0]
                for col in cols:
                    out[lo:hi, col] = col_vals

        integrate_batch(field, stacked[lo:hi], tau, T,
                        noise_table=table, observer=obs)

    if n_chunks == 1:
        work(0)
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            list(pool.map(work, range(n_chunks)))
    return out


def evolve_trajectories(histories, field, T, *, seed=None, chunk=256):
    """Integrate every history and yield full `Trajectory` records.

    A generator, so statistics can stream without holding the whole
    ensemble's paths in memory; integration happens in batches of
    ``chunk`` trajectories.
    """
    stacked, tau, m = _stack_histories(histories)
    h = tau / m
    B = stacked.shape[0]
    d = 1 if stacked.ndim == 2 else stacked.shape[2]
    n_steps = _grid_index(T, h)
    if n_steps < 1:
        raise ValueError("T must cover at least one step")
    noise = getattr(field, "noise", None)
    base_seed = _resolve_seed(seed) if noise is not None else None

    for start in range(0, B, int(chunk)):
        block = stacked[start:start + int(chunk)]
        b = block.shape[0]
        rec = np.empty((n_steps + 1, b, d))

        def obs(k, y):
            rec[k] = y

        table = None
        if noise is not None:
            table = _noise_block(noise, T, base_seed,
                                 range(start, start + b))
        integrate_batch(field, block, tau, T,
                        noise_table=table, observer=obs)
        for i in range(b):
            yield Trajectory(0.0, h, rec[:, i].copy())


# ---------------------------------------------------------------------------
# density snapshots


class JointHistogram:
    """Square 2-D histogram of (x(t), x(t - tau)) pairs on shared edges."""

    __slots__ = ("counts", "lo", "hi", "total")

    def __init__(self, counts, lo, hi):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("joint counts must be a square matrix")
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.counts = counts
        self.lo = float(lo)
        self.hi = float(hi)
        self.total = int(counts.sum())

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    def densities(self) -> np.ndarray:
        return self.counts / (self.total * self.bin_width ** 2)

    def x_marginal(self) -> Histogram:
        return Histogram(self.counts.sum(axis=1), self.lo, self.hi)


@dataclass(frozen=True)
class DensitySnapshot:
    """The ensemble's histogram at one instant."""

    t: float
    marginal: Histogram
    joint: JointHistogram | None
    n: int


def evolve_ensemble(histories, field, T, snapshot_times, *, bins=100,
                    seed=None, threads=1, joint=True):
    """Integrate the ensemble and histogram it at each snapshot time.

    The first listed snapshot sets the bin range for the whole sequence.
    When ``joint`` is true each snapshot also carries the 2-D histogram
    of (x(t), x(t - tau)) on the same edges, whose x-marginal matches
    the 1-D histogram count for count.
    """
    snapshot_times = [float(t) for t in snapshot_times]
    if not snapshot_times:
        raise ValueError("no snapshot times given")
    tau = histories[0].tau
    for t in snapshot_times:
        if t < 0.0 or t > T + 1e-9 * max(1.0, T):
            raise ValueError(f"snapshot time {t:g} outside [0, T]")

    query = list(snapshot_times)
    if joint:
        query += [t - tau for t in snapshot_times]
    vals = ensemble_values(histories, field, query,
                           seed=seed, threads=threads)
    B = vals.shape[0]

    first = Histogram.from_samples(vals[:, 0], bins)
    lo, hi = first.lo, first.hi

    out = []
    for i, t in enumerate(snapshot_times):
        x = np.clip(vals[:, i], lo, hi)
        marg = Histogram.from_samples(x, bins, lo=lo, hi=hi)
        jh = None
        if joint:
            y = np.clip(vals[:, len(snapshot_times) + i], lo, hi)
            counts2, _, _ = np.histogram2d(x, y, bins=bins,
                                           range=[[lo, hi], [lo, hi]])
            jh = JointHistogram(counts2, lo, hi)
        out.append(DensitySnapshot(t=t, marginal=marg, joint=jh, n=B))
    return out


def detect_density_period(snapshots, dt, tol=0.1):
    """Smallest T = k*dt at which the snapshot sequence repeats.

    Candidate offsets are scored by the mean L1 distance between
    histograms k steps apart.  The minimizing offset is accepted only if
    its mean distance is below ``tol`` and below half the mean distance
    at offsets that are not multiples of it; otherwise None.  A sequence
    that is simply stationary therefore reports None — every offset
    matches equally well, so no offset separates from the rest.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    ts = [s.t for s in snapshots]
    for prev, nxt in zip(ts, ts[1:]):
        if abs((nxt - prev) - dt) > _GRID_RTOL * max(1.0, abs(nxt)):
            raise ValueError("snapshots are not spaced by dt")
    hists = [s.marginal for s in snapshots]
    K = len(hists)
    r_max = K - 2
    if r_max < 1:
        return None
    dist = {}
    for r in range(1, r_max + 1):
        dist[r] = float(np.mean([
            hists[i].l1_distance(hists[i + r]) for i in range(K - r)
        ]))
    best = min(dist, key=lambda r: (dist[r], r))
    mismatched = [dist[q] for q in dist if q % best != 0]
    if not mismatched:
        return None
    if dist[best] < tol and dist[best] < 0.5 * float(np.mean(mismatched)):
        return best * dt
    return None


# ---------------------------------------------------------------------------
# trajectory statistics


@dataclass(frozen=True)
class MsdCurve:
    t: np.ndarray
    msd: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    n_trajectories: int


def msd_curve(trajectories: Iterable[Trajectory], *, tau=None,
              min_trajectories=100) -> MsdCurve:
    """Mean-square displacement of the first component, with a tail fit.

    The linear fit runs over the second half of the time window; its
    slope estimates twice the diffusion coefficient when the motion is
    diffusive.  Pass ``tau`` to enforce that the window spans at least
    100 delays.
    """
    acc = None
    t = None
    step = None
    count = 0
    for tr in trajectories:
        x = tr.states[:, 0]
        if acc is None:
            acc = np.zeros_like(x)
            t = tr.times
            step = tr.step
        elif len(x) != len(acc) or abs(tr.step - step) > 1e-12:
            raise ValueError("trajectories disagree on the time grid")
        acc += (x - x[0]) ** 2
        count += 1
    if count < min_trajectories:
        raise ValueError(
            f"need at least {min_trajectories} trajectories, got {count}")
    span = t[-1] - t[0]
    if tau is not None and span < 100.0 * tau - 1e-9:
        raise ValueError("window too short: need at least 100 delays")
    msd = acc / count

    mask = t >= t[0] + 0.5 * span
    slope, intercept = np.polyfit(t[mask], msd[mask], 1)
    fit = slope * t[mask] + intercept
    resid = msd[mask] - fit
    total = msd[mask] - msd[mask].mean()
    denom = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / denom if denom > 0 else 1.0
    return MsdCurve(t=t, msd=msd, slope=float(slope),
                    intercept=float(intercept), r_squared=float(r2),
                    n_trajectories=count)


@dataclass(frozen=True)
class VelocityStats:
    std: float
    support_bound: float
    fit_curvature: float
    fit_r_squared: float
    n_samples: int


def velocity_stats(trajectories: Iterable[Trajectory], burn_in, *,
                   bins=60, min_samples=1_000_000) -> VelocityStats:
    """Pooled stationary statistics of the velocity component.

    Pools v(t) for t > burn_in over all trajectories, then reports the
    standard deviation, the largest |v| seen, and a least-squares fit of
    log density against -C v^2 over the central 80% of the support (a
    Gaussian-shape check: curvature C and the R^2 of that fit).
    """
    pools = []
    count = 0
    for tr in trajectories:
        v = tr.v
        keep = v[tr.times > burn_in]
        pools.append(keep)
        count += len(keep)
    if count < min_samples:
        raise ValueError(
            f"pooled {count} samples, need at least {min_samples}")
    pooled = np.concatenate(pools)

    std = float(pooled.std())
    bound = float(np.abs(pooled).max())

    lo, hi = float(pooled.min()), float(pooled.max())
    width = hi - lo
    clo, chi = lo + 0.1 * width, hi - 0.1 * width
    central = pooled[(pooled >= clo) & (pooled <= chi)]
    hist, edges = np.histogram(central, bins=bins, range=(clo, chi),
                               density=True)
    mids = 0.5 * (edges[:-1] + edges[1:])
    keep = hist > 0
    logd = np.log(hist[keep])
    design = np.stack([-mids[keep] ** 2, np.ones(keep.sum())], axis=1)
    coef, *_ = np.linalg.lstsq(design, logd, rcond=None)
    fitted = design @ coef
    resid = logd - fitted
    total = logd - logd.mean()
    denom = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / denom if denom > 0 else 1.0
    return VelocityStats(std=std, support_bound=bound,
                         fit_curvature=float(coef[0]),
                         fit_r_squared=float(r2), n_samples=count)


# ---------------------------------------------------------------------------
# file output


def write_snapshot_csv(path, snapshots) -> None:
    """All marginal histograms, one row per (snapshot, bin)."""
    t_col, left, right, dens = [], [], [], []
    for snap in snapshots:
        hist = snap.marginal
        edges = hist.edges
        d = hist.densities()
        t_col.extend([snap.t] * hist.n)
        left.extend(edges[:-1])
        right.extend(edges[1:])
        dens.extend(d)
    write_csv(path, ["t", "bin_left", "bin_right", "density"],
              [t_col, left, right, dens])


def write_joint_csv(path, snapshots) -> None:
    """Occupied joint-histogram cells, one row per (snapshot, cell)."""
    cols = [[], [], [], [], [], []]
    for snap in snapshots:
        if snap.joint is None:
            continue
        jh = snap.joint
        edges = jh.edges
        d = jh.densities()
        xi, yi = np.nonzero(jh.counts)
        for a, b in zip(xi, yi):
            cols[0].append(snap.t)
            cols[1].append(edges[a])
            cols[2].append(edges[a + 1])
            cols[3].append(edges[b])
            cols[4].append(edges[b + 1])
            cols[5].append(d[a, b])
    write_csv(path, ["t", "x_left", "x_right", "y_left", "y_right",
                     "density"], cols)
