"""Method-of-steps RK4 integration of delay differential equations.

The integrator advances on the uniform grid ``t = t0 + n h`` with
``h = tau / m``, so every delayed stage time lands either on a stored node or
exactly halfway between two of them.  Node values are read back directly;
half-node values come from four-point cubic stencils, which keeps the
classical Runge-Kutta update at full fourth order for smooth data.

The datum with a unit jump at the starting time (zero path before, one at the
start) generates the fundamental solution of the linear equation, so the
read-back is careful at the two places such a jump hurts.  Stencils never
straddle the starting node: samples before it are read as left limits and the
pre-jump value is recovered by cubic extrapolation.  And they never straddle
the node one delay later, where the first derivative of the solution inherits
the jump.  Marks at ``k tau`` for ``k >= 2`` are progressively smoother and
plain centered stencils lose nothing measurable there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .tabular import write_csv

__all__ = [
    "History", "Trajectory", "LinearDelayField", "TentDelayField",
    "AffineCircleDelayField", "SineFeedbackField", "PiecewiseConstantUniform",
    "eval_field", "state_dim", "integrate", "integrate_batch",
    "convergence_order", "make_history", "fundamental_history",
]

_MIN_SUBSTEPS = 4  # the cubic read-back needs four usable nodes per piece


@dataclass(frozen=True)
class History:
    """State samples on the uniform grid covering the last full delay.

    ``samples[i]`` is the state at ``t_now - tau + i * step`` with
    ``step = tau / m`` and ``m = len(samples) - 1``; ``samples[-1]`` is the
    state at ``t_now`` itself.  Earlier samples are read as left-limit
    values, which is what lets a discontinuous datum live on a plain grid:
    put the pre-jump path in ``samples[:-1]`` and the post-jump state in
    ``samples[-1]`` (see :func:`fundamental_history`).
    """

    tau: float
    samples: np.ndarray
    t_now: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError("tau must be positive")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim not in (1, 2) or arr.shape[0] < 3:
            raise ValueError("need at least three samples covering the delay")
        if not np.all(np.isfinite(arr)):
            raise ValueError("history samples must be finite")
        object.__setattr__(self, "samples", arr)

    @property
    def m(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def step(self) -> float:
        return self.tau / self.m

    @property
    def dim(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]


def make_history(fn, tau: float, m: int, *, t_now: float = 0.0) -> History:
    """Sample the path ``fn`` on the ``m + 1`` nodes of ``[t_now - tau, t_now]``."""
    nodes = np.linspace(t_now - tau, t_now, m + 1)
    vals = np.array([np.asarray(fn(float(s)), dtype=float) for s in nodes])
    return History(tau, vals, t_now)


def fundamental_history(tau: float, m: int) -> History:
    """Zero path with a unit jump at time zero.

    Integrating a linear field from this datum produces the fundamental
    solution of ``x' = a x + b x(t - tau)``.
    """
    vals = np.zeros(m + 1)
    vals[-1] = 1.0
    return History(tau, vals, 0.0)


# ---------------------------------------------------------------------------
# fields

@dataclass(frozen=True)
class LinearDelayField:
    """``x' = a x(t) + b x(t - tau)``; the delay length comes from the history."""

    a: float
    b: float


@dataclass(frozen=True)
class TentDelayField:
    """``x' = -alpha x + a min(x_tau, 1 - x_tau)``.

    Relaxation at rate ``alpha`` toward a tent-shaped drive evaluated one
    delay back.  When ``alpha`` is large the state tracks
    ``(a / alpha) min(x_tau, 1 - x_tau)``, so successive delay windows
    approximate iteration of a tent map with slope ``a / alpha``: slopes in
    ``(1, 2]`` fold the interval and support cycling ensemble densities,
    while slopes below one make the origin globally attracting and every
    ensemble collapses onto it.
    """

    alpha: float
    a: float

    def __post_init__(self):
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class PiecewiseConstantUniform:
    """Right-continuous piecewise-constant noise with uniform levels.

    The value is constant on ``[t0 + k dt, t0 + (k + 1) dt)`` where ``dt`` is
    the resample interval and ``t0`` the start of integration, and each
    segment level is an independent draw from ``uniform(lo, hi)``.
    """

    lo: float
    hi: float
    resample_interval: float

    def __post_init__(self):
        if not (self.hi >= self.lo):
            raise ValueError("need hi >= lo")
        if not (self.resample_interval > 0.0):
            raise ValueError("resample interval must be positive")

    def segment_values(self, rng, count: int) -> np.ndarray:
        """Draw ``count`` independent segment levels from ``rng``."""
        return rng.uniform(self.lo, self.hi, size=count)


@dataclass(frozen=True)
class AffineCircleDelayField:
    """``x' = -alpha x + alpha ((a x_tau + b + xi(t)) mod 1)``.

    The wrap applies to the whole bracket, noise included, and the drive is
    scaled by ``alpha`` so that fast relaxation reduces successive delay
    windows to the noisy circle map ``x -> (a x + b + xi) mod 1`` itself.
    (An unscaled drive would confine the state to ``[0, 1/alpha]``, the
    bracket would then stay strictly below one, and the wrap could never
    engage.)  ``noise`` is optional; without it the drive is deterministic.
    """

    alpha: float
    a: float
    b: float
    noise: PiecewiseConstantUniform | None = None

    def __post_init__(self):
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")
        if not (0.0 < self.a < 1.0 and 0.0 < self.b < 1.0):
            raise ValueError("need 0 < a < 1 and 0 < b < 1")


@dataclass(frozen=True)
class SineFeedbackField:
    """Position/velocity pair with delayed sinusoidal velocity feedback.

    ``x' = v`` and ``v' = -gamma v + sin(2 pi beta v(t - tau))``.  The state
    vector is ``(x, v)``; only the velocity enters with a delay, and the
    position is its plain integral.
    """

    gamma: float
    beta: float

    def __post_init__(self):
        if not (self.gamma > 0.0 and self.beta > 0.0):
            raise ValueError("gamma and beta must be positive")


def state_dim(field) -> int:
    """Dimension of the field's state vector."""
    return 2 if isinstance(field, SineFeedbackField) else 1


def eval_field(field, x, x_delayed, t: float = 0.0, noise_value=None):
    """Right-hand side of the delay equation at one instant.

    ``x`` and ``x_delayed`` are current and delayed states; both broadcast
    over leading axes, with the state components on the last axis for
    two-component fields.  ``noise_value`` is the active noise level for
    fields that carry a noise process and is ignored otherwise.  Pure
    evaluation: nothing is advanced or sampled here.
    """
    x = np.asarray(x, dtype=float)
    xd = np.asarray(x_delayed, dtype=float)
    if isinstance(field, LinearDelayField):
        return field.a * x + field.b * xd
    if isinstance(field, TentDelayField):
        return -field.alpha * x + field.a * np.minimum(xd, 1.0 - xd)
    if isinstance(field, AffineCircleDelayField):
        drive = field.a * xd + field.b
        if noise_value is not None:
            drive = drive + noise_value
        return -field.alpha * x + field.alpha * np.mod(drive, 1.0)
    if isinstance(field, SineFeedbackField):
        v = x[..., 1]
        vd = xd[..., 1]
        dv = -field.gamma * v + np.sin((2.0 * np.pi * field.beta) * vd)
        return np.stack([v, dv], axis=-1)
    raise TypeError(f"not a recognized delay field: {type(field).__name__}")


# ---------------------------------------------------------------------------
# the stepper

# Cubic read-back weights for the value halfway through node interval
# [j, j+1].  Comments mark the four stencil nodes relative to j, with "x"
# the evaluation point.
_MID_CENTERED = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0   # j-1  j  x  j+1  j+2
_MID_RIGHT = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0      # j  x  j+1  j+2  j+3
_MID_LAST = np.array([1.0, -5.0, 15.0, 5.0]) / 16.0       # j-2  j-1  j  x  j+1
_MID_EXTRAP = np.array([-5.0, 21.0, -35.0, 35.0]) / 16.0  # j-3  j-2  j-1  j  x
# Pre-jump (left-limit) value at a node, extrapolated from the four nodes
# before it:
_NODE_EXTRAP = np.array([-1.0, 4.0, -6.0, 4.0])


def _mid_stencil(j: int, m: int):
    """Stencil (weights, base node) for the half-node value in ``[j, j+1]``.

    Node indices count from the start of integration (node 0); node ``m``
    sits one delay later.  The solution value jumps only at node 0 (left
    limits before, the initial state after) and its first derivative jumps
    at node ``m``, so near those two nodes the stencil stays inside one
    smooth piece; everywhere else it is centered.
    """
    if j in (-m, 0, m):
        return _MID_RIGHT, j
    if j == -1:
        return _MID_EXTRAP, j - 3
    if j in (-2, m - 1):
        return _MID_LAST, j - 2
    return _MID_CENTERED, j - 1


def integrate_batch(field, samples, tau: float, T: float, *, t0: float = 0.0,
                    noise_table=None, observer=None) -> np.ndarray:
    """Advance a stack of histories together; returns the final states.

    ``samples`` holds one history per row, shaped ``(B, m+1)`` for scalar
    fields or ``(B, m+1, d)``, all rows sharing the grid of step ``tau / m``;
    ``T`` must be a whole number of steps.  For a field with a noise
    process, ``noise_table`` supplies one row of segment levels per
    trajectory (see :class:`PiecewiseConstantUniform`; the segment clock
    starts at ``t0``).  ``observer(k, states)`` is called for every node
    index ``k = 0 .. n`` with the ``(B, d)`` states at that node; the array
    is freshly allocated per step and may be kept without copying.

    Every trajectory in the stack sees exactly the arithmetic it would see
    alone, so splitting a batch across workers cannot change results.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("samples must be shaped (B, m+1) or (B, m+1, d)")
    nb, rows, d = arr.shape
    m = rows - 1
    if m < _MIN_SUBSTEPS:
        raise ValueError(f"need at least {_MIN_SUBSTEPS} substeps per delay")
    if d != state_dim(field):
        raise ValueError(
            f"field wants state dimension {state_dim(field)}, got {d}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("history samples must be finite")
    if not (tau > 0.0):
        raise ValueError("tau must be positive")
    h = tau / m
    n_steps = int(round(T / h))
    if n_steps < 1 or abs(n_steps * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError("T must be a positive whole number of steps tau/m")

    noise = getattr(field, "noise", None)
    seg_dt = None
    if noise is not None:
        if noise_table is None:
            raise ValueError("field carries a noise process; supply noise_table")
        noise_table = np.asarray(noise_table, dtype=float)
        seg_dt = noise.resample_interval
        needed = int(math.floor(n_steps * h / seg_dt + 1e-9)) + 1
        if noise_table.ndim != 2 or noise_table.shape[0] != nb \
                or noise_table.shape[1] < needed:
            raise ValueError(
                f"noise_table must be shaped ({nb}, >= {needed})")
    elif noise_table is not None:
        raise ValueError("noise_table given but the field has no noise process")

    # Ring buffer over absolute node index i (slot (i + m) % size); m + 4
    # slots retain exactly the nodes the widest stencil can reach back to.
    size = m + 4
    ring = np.empty((size, nb, d))
    for i in range(m + 1):
        ring[i] = arr[:, i]
    y = ring[m].copy()
    if observer is not None:
        observer(0, y.copy())

    sixth = h / 6.0
    for n in range(n_steps):
        j = n - m
        t = t0 + n * h
        xd0 = ring[(j + m) % size]
        if j + 1 == 0:
            # Right edge of the delayed window is the one two-valued node;
            # this step wants its left limit.
            xd1 = (_NODE_EXTRAP[0] * ring[m - 4] + _NODE_EXTRAP[1] * ring[m - 3]
                   + _NODE_EXTRAP[2] * ring[m - 2]
                   + _NODE_EXTRAP[3] * ring[m - 1])
        else:
            xd1 = ring[(j + 1 + m) % size]
        w, base = _mid_stencil(j, m)
        xdm = (w[0] * ring[(base + m) % size]
               + w[1] * ring[(base + 1 + m) % size]
               + w[2] * ring[(base + 2 + m) % size]
               + w[3] * ring[(base + 3 + m) % size])
        if seg_dt is None:
            xi0 = xim = xi1 = None
        else:
            rel = n * h
            xi0 = noise_table[:, int(rel / seg_dt + 1e-9)][:, None]
            xim = noise_table[:, int((rel + 0.5 * h) / seg_dt + 1e-9)][:, None]
            xi1 = noise_table[:, int((rel + h) / seg_dt + 1e-9)][:, None]
        k1 = eval_field(field, y, xd0, t, xi0)
        k2 = eval_field(field, y + (0.5 * h) * k1, xdm, t + 0.5 * h, xim)
        k3 = eval_field(field, y + (0.5 * h) * k2, xdm, t + 0.5 * h, xim)
        k4 = eval_field(field, y + h * k3, xd1, t + h, xi1)
        y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(y)):
            bad = np.where(~np.isfinite(y).all(axis=1))[0]
            raise DivergenceError(t0 + (n + 1) * h, index=int(bad[0]))
        ring[(n + 1 + m) % size] = y
        if observer is not None:
            observer(n + 1, y)
    return y


@dataclass(frozen=True)
class Trajectory:
    """Grid-sampled solution path; node ``k`` sits at ``t0 + k * step``."""

    t0: float
    step: float
    states: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        object.__setattr__(self, "states", arr)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.states.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def v(self) -> np.ndarray:
        if self.states.shape[1] < 2:
            raise ValueError("scalar trajectory has no velocity column")
        return self.states[:, 1]

    def to_csv(self, path) -> None:
        d = self.states.shape[1]
        if d > 2:
            raise ValueError("CSV layout is defined for 1- and 2-component states")
        cols = [self.times] + [self.states[:, i] for i in range(d)]
        write_csv(path, ["t", "x", "v"][:1 + d], cols)


def integrate(field, initial: History, T: float, seed=None) -> Trajectory:
    """Integrate one trajectory, recording every grid node.

    The step is ``initial.step`` and ``T`` must be a whole number of steps.
    ``seed`` feeds the noise stream for fields that carry a noise process
    (ignored otherwise); the same seed always reproduces the same trajectory
    bit for bit.  A state leaving the finite range raises
    :class:`~ddlab.errors.DivergenceError` carrying the blow-up time.
    """
    d = state_dim(field)
    h = initial.step
    n_steps = int(round(T / h))
    noise = getattr(field, "noise", None)
    table = None
    if noise is not None:
        rng = np.random.default_rng(seed)
        count = int(math.floor(n_steps * h / noise.resample_interval + 1e-9)) + 1
        table = noise.segment_values(rng, max(count, 1))[None, :]
    out = np.empty((max(n_steps, 0) + 1, d))

    def _record(k, states):
        out[k] = states[0]

    integrate_batch(field, initial.samples[None, ...], initial.tau, T,
                    t0=initial.t_now, noise_table=table, observer=_record)
    return Trajectory(initial.t_now, h, out)


def _refine_samples(arr: np.ndarray) -> np.ndarray:
    """Halve the grid step of a sampled path, filling cubic midpoints.

    Treats the whole path as one smooth piece, so it is only appropriate
    for data without an embedded jump.
    """
    m = arr.shape[0] - 1
    out = np.empty((2 * m + 1,) + arr.shape[1:])
    out[0::2] = arr
    for j in range(m):
        if j == 0:
            w, base = _MID_RIGHT, 0
        elif j == m - 1:
            w, base = _MID_LAST, j - 2
        else:
            w, base = _MID_CENTERED, j - 1
        out[2 * j + 1] = (w[0] * arr[base] + w[1] * arr[base + 1]
                          + w[2] * arr[base + 2] + w[3] * arr[base + 3])
    return out


def convergence_order(field, initial, T: float, *, tau: float = None,
                      m0: int = 32) -> float:
    """Observed order of the step-halving error at time ``T``.

    Runs the same problem at steps ``h``, ``h/2`` and ``h/4`` and returns
    ``log2`` of the ratio of successive solution differences, measured in
    the max norm over the shared coarse-grid nodes (a single-instant
    difference is too easily polluted by error cancellation).  ``initial``
    is either a :class:`History` (its samples are refined to the halved
    grids with the same cubic stencils the integrator uses, which is exact
    for polynomial data and fourth-order accurate otherwise) or a callable
    ``s -> state`` on ``[t0 - tau, t0]``; a callable needs ``tau`` and gives
    the cleanest estimate because every resolution samples it directly.
    Fields with a noise process are rejected: halving the step of a noisy
    run changes the realization, not just the error.
    """
    if getattr(field, "noise", None) is not None:
        raise ValueError("convergence order is undefined for noisy fields")
    if callable(initial):
        if tau is None:
            raise ValueError("callable initial data needs an explicit tau")
        tiers = [make_history(initial, tau, m0 * 2 ** i) for i in range(3)]
    else:
        tiers = [initial]
        samples = initial.samples
        for _ in range(2):
            samples = _refine_samples(samples)
            tiers.append(History(initial.tau, samples, initial.t_now))
    runs = [integrate(field, hist, T).states for hist in tiers]
    e1 = float(np.max(np.abs(runs[0] - runs[1][::2])))
    e2 = float(np.max(np.abs(runs[1][::2] - runs[2][::4])))
    if e2 == 0.0:
        return math.inf
    if e1 == 0.0:
        return -math.inf
    return math.log2(e1 / e2)
