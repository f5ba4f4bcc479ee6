"""Adaptive and panel quadrature used by the covariance machinery.

The workhorse is :func:`adaptive_simpson`, a vectorized interval-stack
implementation of adaptive composite Simpson with Richardson extrapolation.
Integrands must accept numpy arrays.  Known kink locations are passed as
``breakpoints`` so each panel sees a smooth integrand; the error allocation is
proportional to interval length, so the final absolute error is close to
``tol`` for the whole integral.

For dense curve evaluation (thousands of nearby integrals of panel-smooth
integrands) adaptivity in pure Python is too slow; :func:`panel_gauss` applies
a fixed-order Gauss-Legendre rule to a batch of panels in one vectorized pass.
Tests cross-check it against the adaptive engine.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import QuadratureError

_LEG_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(n: int):
    try:
        return _LEG_CACHE[n]
    except KeyError:
        xw = np.polynomial.legendre.leggauss(n)
        _LEG_CACHE[n] = xw
        return xw


def adaptive_simpson(f, a, b, *, tol=1e-9, breakpoints=(), max_intervals=200_000,
                     min_width_factor=1e-14):
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Parameters
    ----------
    f : callable
        Vectorized integrand: maps an ndarray of abscissae to an ndarray.
    a, b : float
        Integration limits, ``a <= b``.
    tol : float
        Absolute error target for the whole integral.
    breakpoints : iterable of float
        Interior points where the integrand (or a derivative) kinks; the
        initial panels are split there.
    max_intervals : int
        Hard cap on simultaneously active subintervals.

    Raises
    ------
    QuadratureError
        If the tolerance cannot be met within the subdivision budget.
    """
    a = float(a)
    b = float(b)
    if b < a:
        raise ValueError("require a <= b")
    if b == a:
        return 0.0
    total = b - a
    edges = [a]
    for x in sorted(float(p) for p in breakpoints):
        if edges[-1] + 1e-15 * total < x < b - 1e-15 * total:
            edges.append(x)
    edges.append(b)
    edges = np.asarray(edges)

    lo = edges[:-1].copy()
    hi = edges[1:].copy()
    mid = 0.5 * (lo + hi)
    flo = np.asarray(f(lo), dtype=float)
    fmid = np.asarray(f(mid), dtype=float)
    fhi = np.asarray(f(hi), dtype=float)
    simp = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    accepted = []
    min_width = min_width_factor * total
    unresolved = 0.0
    while lo.size:
        if lo.size > max_intervals:
            raise QuadratureError(
                f"interval stack exceeded {max_intervals} subintervals")
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        fnew = np.asarray(f(np.concatenate([lm, rm])), dtype=float)
        flm = fnew[: lo.size]
        frm = fnew[lo.size:]
        h6 = (mid - lo) / 6.0
        s_left = h6 * (flo + 4.0 * flm + fmid)
        s_right = h6 * (fmid + 4.0 * frm + fhi)
        s2 = s_left + s_right
        err = (s2 - simp) / 15.0
        done = np.abs(err) <= tol * (hi - lo) / total
        tiny = (hi - lo) < min_width
        if np.any(tiny & ~done):
            unresolved += float(np.sum(np.abs(err[tiny & ~done])))
            done = done | tiny
        if np.any(done):
            accepted.extend((s2[done] + err[done]).tolist())
        keep = ~done
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        flo = np.concatenate([flo[keep], fmid[keep]])
        fhi = np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([flm[keep], frm[keep]])
        simp = np.concatenate([s_left[keep], s_right[keep]])
    if unresolved > 10.0 * tol:
        raise QuadratureError(
            f"unresolved error {unresolved:.3e} on vanishing subintervals")
    return math.fsum(accepted)


def adaptive_simpson_2d(f, ax, bx, ay, by, *, tol=1e-9, x_breaks=(),
                        y_breaks=None):
    """Iterated adaptive Simpson for a double integral over a rectangle.

    ``f(x, y)`` must broadcast over ndarrays.  ``y_breaks``, if given, maps a
    scalar ``x`` to inner-integrand kink locations.  The absolute error is
    roughly ``tol * (1 + bx - ax)``; callers that need better shrink ``tol``.
    """
    if bx <= ax or by <= ay:
        return 0.0

    def outer(xs):
        out = np.empty_like(xs, dtype=float)
        for i, x in enumerate(np.atleast_1d(xs)):
            brk = y_breaks(x) if y_breaks is not None else ()
            out[i] = adaptive_simpson(
                lambda ys, x=x: f(np.full_like(ys, x), ys),
                ay, by, tol=tol, breakpoints=brk)
        return out

    return adaptive_simpson(outer, ax, bx, tol=tol * max(bx - ax, 1.0),
                            breakpoints=x_breaks)


def panel_gauss(f, edges, *, order=32):
    """Gauss-Legendre integral of ``f`` over panels with shared batching.

    Parameters
    ----------
    f : callable
        Vectorized integrand; receives the node array of shape
        ``(..., P, order)`` and must broadcast elementwise.
    edges : ndarray, shape (..., P+1)
        Panel edges, nondecreasing along the last axis.  Zero-width panels
        contribute zero, which lets callers pad ragged panel lists.
    order : int
        Nodes per panel.

    Returns
    -------
    ndarray of shape ``edges.shape[:-1]``: the sum of the panel integrals.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = _leggauss(order)
    lo = edges[..., :-1]
    hi = edges[..., 1:]
    half = 0.5 * (hi - lo)
    nodes = lo[..., None] + half[..., None] * (x + 1.0)
    vals = np.asarray(f(nodes), dtype=float)
    panel = half * (vals * w).sum(axis=-1)
    return panel.sum(axis=-1)
