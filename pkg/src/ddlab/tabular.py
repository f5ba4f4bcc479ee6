"""CSV helpers.

All numeric output goes through :func:`fmt` so that files are byte-for-byte
reproducible across runs: floats are printed with 17 significant digits, which
round-trips any IEEE double exactly, and no locale- or time-dependent state is
involved anywhere.
"""
from __future__ import annotations

import io

import numpy as np


def fmt(x) -> str:
    """Format a scalar for CSV output (floats with 17 significant digits)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def render_csv(header, columns) -> str:
    """Render named columns as CSV text.

    Parameters
    ----------
    header : sequence of str
        Column names.
    columns : sequence of array_like
        One entry per header item, all the same length.
    """
    columns = [np.asarray(c) for c in columns]
    if len(columns) != len(header):
        raise ValueError("header/column count mismatch")
    n = len(columns[0]) if columns else 0
    for c in columns:
        if len(c) != n:
            raise ValueError("ragged columns")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i in range(n):
        buf.write(",".join(fmt(c[i]) for c in columns) + "\n")
    return buf.getvalue()


def write_csv(path, header, columns) -> None:
    text = render_csv(header, columns)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns (header, columns)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    cols = [np.array([float(r[j]) for r in rows]) for j in range(len(header))]
    return header, cols
