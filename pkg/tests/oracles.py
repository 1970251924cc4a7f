"""Reference computations written independently of the package kernels."""

import numpy as np
from scipy.optimize import minimize_scalar

from wordeq import nn


def _cumlen(x, y):
    return np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))))


def mapped_area(sx, sy, lx, ly, offsets):
    """Trapezoid area between the short curve and the long curve shifted by each offset."""
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    s = _cumlen(sx, sy)
    S = _cumlen(lx, ly)
    u = s[None, :] + offsets[:, None]
    px = np.interp(u, S, lx)
    py = np.interp(u, S, ly)
    d = np.hypot(sx[None, :] - px, sy[None, :] - py)
    return np.sum(0.5 * (d[:, 1:] + d[:, :-1]) * np.diff(s)[None, :], axis=1)


def pcm_bruteforce(ref_x, ref_y, cand_x, cand_y, refine=8):
    """Exhaustive offset search followed by local bounded refinement.

    The offset grid has ten times as many points as there are breakpoints
    (offsets where some mapped point crosses a long-curve vertex), and the
    breakpoints themselves are included.
    """
    ref_x, ref_y, cand_x, cand_y = (np.asarray(v, dtype=float) for v in (ref_x, ref_y, cand_x, cand_y))
    x0, y0 = ref_x.min(), ref_y.min()
    ex = ref_x.max() - x0 or 1.0
    ey = ref_y.max() - y0 or 1.0
    rx, ry = (ref_x - x0) / ex, (ref_y - y0) / ey
    cx, cy = (cand_x - x0) / ex, (cand_y - y0) / ey
    if _cumlen(cx, cy)[-1] < _cumlen(rx, ry)[-1]:
        sx, sy, lx, ly = cx, cy, rx, ry
    else:
        sx, sy, lx, ly = rx, ry, cx, cy
    s = _cumlen(sx, sy)
    S = _cumlen(lx, ly)
    span = max(S[-1] - s[-1], 0.0)
    if span == 0.0:
        return float(mapped_area(sx, sy, lx, ly, 0.0)[0])
    breaks = (S[None, :] - s[:, None]).ravel()
    breaks = breaks[(breaks >= 0) & (breaks <= span)]
    grid = np.unique(np.concatenate(([0.0, span], breaks,
                                     np.linspace(0.0, span, 10 * max(breaks.size, 10) + 1))))
    vals = mapped_area(sx, sy, lx, ly, grid)
    best = float(vals.min())
    for i in np.argsort(vals)[:refine]:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(lambda t: mapped_area(sx, sy, lx, ly, t)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def mlp_forward_masked(weights, biases, x, masks=None):
    """Outputs plus the sign pattern of every ReLU pre-activation (for kink detection)."""
    a = x
    pattern = []
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        if i < last:
            pattern.append(z > 0)
            a = np.maximum(z, 0)
            if masks is not None and masks[i] is not None:
                a = a * masks[i]
        else:
            a = 1 / (1 + np.exp(-z))
    return a, pattern


def sine_gain_db(process, freq, sample_rate=44100, seconds=2.0, guard=4096):
    """Gain of ``process`` at ``freq`` from a least-squares sine fit of the steady state."""
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    x = 0.25 * np.sin(2 * np.pi * freq * t)
    y = process(x)
    sl = slice(guard, len(t) - guard)
    basis = np.column_stack([np.sin(2 * np.pi * freq * t[sl]), np.cos(2 * np.pi * freq * t[sl])])
    coef_in = np.linalg.lstsq(basis, x[sl], rcond=None)[0]
    coef_out = np.linalg.lstsq(basis, y[sl], rcond=None)[0]
    return 20 * np.log10(np.hypot(*coef_out) / np.hypot(*coef_in))


def fd_gradient_check(model, x, y, masks=None, per_tensor=25, h=1e-5, seed=0):
    """Largest relative error between backprop and central differences on sampled coordinates."""
    rng = np.random.default_rng(seed)
    out, cache = nn.forward(model, x, training=True, rng=np.random.default_rng(0), dropout_rate=0.0)
    if masks is not None:
        cache.masks = masks
        out, _ = mlp_forward_masked(model.weights, model.biases, x, masks)
        cache.output = out
        # rebuild the activations the masked pass used
        a = x
        cache.pre, cache.post = [], []
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            z = a @ w + b
            a = (np.maximum(z, 0) * masks[i]) if i < len(model.weights) - 1 else 1 / (1 + np.exp(-z))
            cache.pre.append(z)
            cache.post.append(a)
    grads = nn.backward(model, cache, y)
    base_out, base_pat = mlp_forward_masked(model.weights, model.biases, x, masks)
    base_sign = np.sign(base_out - y)
    worst, checked = 0.0, 0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        for k in rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False):
            old = flat[k]
            vals = []
            kink = False
            for step in (h, -h):
                flat[k] = old + step
                o, pat = mlp_forward_masked(model.weights, model.biases, x, masks)
                kink |= any(np.any(a != b) for a, b in zip(pat, base_pat))
                kink |= np.any(np.sign(o - y) != base_sign)
                vals.append(np.mean(np.abs(o - y)))
            flat[k] = old
            if kink:
                continue
            num = (vals[0] - vals[1]) / (2 * h)
            ana = g.reshape(-1)[k]
            denom = max(abs(num), abs(ana), 1e-7)
            worst = max(worst, abs(num - ana) / denom)
            checked += 1
    return worst, checked
