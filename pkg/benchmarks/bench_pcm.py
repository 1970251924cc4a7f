"""Time the compiled and numpy partial-curve-mapping kernels on random EQ curves.

    python benchmarks/bench_pcm.py [--pairs 200] [--points 40] [--repeat 3]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from wordeq import _pcm_py
from wordeq.metrics import arc_length, normalize_pair, Curve2D


def _pairs(n_pairs: int, n_points: int, seed: int):
    rng = np.random.default_rng(seed)
    x = np.log10(np.geomspace(20, 20000, n_points))
    out = []
    for _ in range(n_pairs):
        ref = Curve2D(x, rng.uniform(-4, 4, n_points))
        cand = Curve2D(x, rng.uniform(-4, 4, n_points))
        rx, ry, cx, cy = normalize_pair(ref, cand)
        if arc_length(cx, cy) < arc_length(rx, ry):
            out.append((cx, cy, rx, ry))
        else:
            out.append((rx, ry, cx, cy))
    return out


def _time(kernel, pairs, repeat: int) -> tuple[float, np.ndarray]:
    best = np.inf
    values = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        values = np.array([kernel(*p) for p in pairs])
        best = min(best, time.perf_counter() - t0)
    return best, values


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--points", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    pairs = _pairs(args.pairs, args.points, args.seed)
    t_py, v_py = _time(_pcm_py.partial_curve_min, pairs, args.repeat)
    print(f"python  {t_py * 1e3:9.2f} ms  ({t_py / len(pairs) * 1e6:8.1f} us/pair)")
    try:
        from wordeq._pcm_core import partial_curve_min as compiled
    except ImportError:
        print("cython  not built (pip install --no-build-isolation -e .)")
        return 0
    t_cy, v_cy = _time(compiled, pairs, args.repeat)
    print(f"cython  {t_cy * 1e3:9.2f} ms  ({t_cy / len(pairs) * 1e6:8.1f} us/pair)")
    print(f"speedup {t_py / t_cy:9.1f}x   max |diff| {np.max(np.abs(v_py - v_cy)):.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
