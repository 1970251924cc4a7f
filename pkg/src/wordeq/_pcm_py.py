"""Pure numpy kernel for the partial-curve-mapping minimisation.

Used when the compiled ``_pcm_core`` extension is unavailable. Both kernels
take curves that are already normalised, with the first curve no longer (in
arc length) than the second, and return the minimum mapped area over every
admissible offset.

For a fixed offset ``t`` the short curve's vertex ``i`` at arc length ``s_i`` is
paired with the long-curve point at arc length ``s_i + t``; the area is the
trapezoid sum of pair distances over the short curve's arc-length steps. Between
consecutive breakpoints ``S_k - s_i`` every paired point moves along a single
long-curve segment at unit speed, so the area is a sum of Euclidean norms of
affine functions of ``t`` and therefore convex on that piece. Each piece is
minimised exactly by bisection on the (monotone) derivative.
"""

from __future__ import annotations

import numpy as np

BISECTION_STEPS = 64


def _arc(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))))


def partial_curve_min(sx, sy, lx, ly) -> float:
    sx, sy, lx, ly = (np.asarray(v, dtype=np.float64) for v in (sx, sy, lx, ly))
    s = _arc(sx, sy)
    S = _arc(lx, ly)
    span = max(S[-1] - s[-1], 0.0)

    ds = np.diff(s)
    weight = np.zeros_like(s)
    weight[:-1] += 0.5 * ds
    weight[1:] += 0.5 * ds

    seg_len = np.diff(S)
    ux = np.divide(np.diff(lx), seg_len, out=np.zeros_like(seg_len), where=seg_len > 0)
    uy = np.divide(np.diff(ly), seg_len, out=np.zeros_like(seg_len), where=seg_len > 0)

    cuts = (S[:, None] - s[None, :]).ravel()
    cuts = cuts[(cuts > 0.0) & (cuts < span)]
    knots = np.unique(np.concatenate(([0.0, span], cuts)))
    if knots.size == 1:
        lo = hi = knots
    else:
        lo, hi = knots[:-1], knots[1:]

    mid = 0.5 * (lo + hi)
    seg = np.searchsorted(S, s[None, :] + mid[:, None], side="right") - 1
    seg = np.clip(seg, 0, S.size - 2)
    ax, ay = ux[seg], uy[seg]
    # w_i = P_i - (long point at arc length s_i with t = 0 on this segment)
    wx = sx[None, :] - lx[seg] - (s[None, :] - S[seg]) * ax
    wy = sy[None, :] - ly[seg] - (s[None, :] - S[seg]) * ay

    def area(t):
        return np.sum(weight * np.hypot(wx - t[:, None] * ax, wy - t[:, None] * ay), axis=1)

    def slope(t):
        dx = wx - t[:, None] * ax
        dy = wy - t[:, None] * ay
        d = np.hypot(dx, dy)
        num = -(dx * ax + dy * ay)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(d > 0.0, num / d, 0.0)
        return np.sum(weight * g, axis=1)

    a, b = lo.copy(), hi.copy()
    interior = (slope(a) < 0.0) & (slope(b) > 0.0)
    for _ in range(BISECTION_STEPS):
        if not interior.any():
            break
        m = 0.5 * (a + b)
        up = slope(m) > 0.0
        b = np.where(interior & up, m, b)
        a = np.where(interior & ~up, m, a)
    best = np.minimum(area(lo), area(hi))
    best = np.minimum(best, area(0.5 * (a + b)))
    return float(best.min())
