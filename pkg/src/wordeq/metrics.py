"""Curve comparison: MAE in dB / normalized units and partial curve mapping.

The partial-curve-mapping minimisation runs in a compiled kernel when the
``_pcm_core`` extension is built, and in a numpy fallback otherwise. Set
``WORDEQ_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .dataset import GAIN_LIMIT_DB, EqCurve
from . import _pcm_py

if os.environ.get("WORDEQ_PURE_PYTHON", "") not in ("", "0"):
    _kernel = _pcm_py.partial_curve_min
    BACKEND = "python"
else:
    try:
        from ._pcm_core import partial_curve_min as _kernel
        BACKEND = "cython"
    except ImportError:
        _kernel = _pcm_py.partial_curve_min
        BACKEND = "python"


@dataclass(frozen=True, eq=False)
class Curve2D:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("a curve needs two equally long 1-d coordinate arrays with >= 2 points")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FloatingPointError("curve coordinates must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("curve x coordinates must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_points(cls, points) -> "Curve2D":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts[:, 0], pts[:, 1])

    def translated(self, dx: float, dy: float) -> "Curve2D":
        return Curve2D(self.x + dx, self.y + dy)


def curve_from_eq(curve: EqCurve) -> Curve2D:
    """EQ curve as (log10 Hz, dB) points."""
    return Curve2D(np.log10(curve.band_centers_hz), curve.gains_db)


def _as_curve(c) -> Curve2D:
    if isinstance(c, Curve2D):
        return c
    if isinstance(c, EqCurve):
        return curve_from_eq(c)
    return Curve2D.from_points(c)


def normalize_pair(reference: Curve2D, candidate: Curve2D):
    """Shift/scale both curves so the reference spans [0, 1] on each axis.

    A zero-extent axis of the reference is scaled by 1.
    """
    x0, y0 = reference.x.min(), reference.y.min()
    sx = reference.x.max() - x0
    sy = reference.y.max() - y0
    sx = sx if sx > 0 else 1.0
    sy = sy if sy > 0 else 1.0
    return ((reference.x - x0) / sx, (reference.y - y0) / sy,
            (candidate.x - x0) / sx, (candidate.y - y0) / sy)


def arc_length(x, y) -> float:
    return float(np.sum(np.hypot(np.diff(x), np.diff(y))))


def pcm_distance(reference, candidate) -> float:
    """Partial curve mapping distance of ``candidate`` from ``reference``.

    Normalisation is anchored on ``reference``. The shorter curve (by arc
    length after normalisation) slides along the longer one; the result is the
    smallest trapezoid-integrated point-pair distance over all offsets that keep
    the short curve inside the long one.
    """
    ref = _as_curve(reference)
    cand = _as_curve(candidate)
    rx, ry, cx, cy = normalize_pair(ref, cand)
    if arc_length(cx, cy) < arc_length(rx, ry):
        return float(_kernel(cx, cy, rx, ry))
    return float(_kernel(rx, ry, cx, cy))


def _gains(c) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(c, EqCurve):
        return c.gains_db, c.band_centers_hz
    return np.asarray(c, dtype=np.float64), None


def mae_db(a, b) -> float:
    """Mean absolute difference over the bands, in dB."""
    ga, ca = _gains(a)
    gb, cb = _gains(b)
    if ga.shape != gb.shape:
        raise ValueError(f"band count mismatch: {ga.shape} vs {gb.shape}")
    if ca is not None and cb is not None and not np.array_equal(ca, cb):
        raise ValueError("curves are defined on different band grids")
    return float(np.mean(np.abs(ga - gb)))


def mae_normalized(a, b) -> float:
    """:func:`mae_db` expressed in the [0, 1] training units."""
    return mae_db(a, b) / (2 * GAIN_LIMIT_DB)
