"""Time the numba kernels against their numpy fallbacks.

Arguments are captured from real engine calls (a short anneal on the bundled
100-module benchmark, a spatial-entropy evaluation and an SOR solve), so both
backends see representative shapes. Run with

    python benchmarks/bench_kernels.py [--repeat N]

and it prints one line per kernel with the median time of each backend and
the speed-up. Results are also checked for agreement.
"""
from __future__ import annotations

import argparse
import copy
import time

import numpy as np

from tsvshield import kernels
from tsvshield.bench_io import load_bundled
from tsvshield.config import EngineConfig
from tsvshield.floorplan import anneal
from tsvshield.leakage import spatial_entropy
from tsvshield.model import grid_pitch
from tsvshield.thermal import StackModel, ThermalNetwork

NAMES = ("rasterize_rects", "sp_pack", "longest_path", "class_distance_sums", "sor_solve",
         "assign_sites", "nested_means_bounds", "grow_trees", "greedy_cover")


def capture_calls() -> dict:
    """Run a little engine work and keep the first argument tuple per kernel."""
    seen = {}
    originals = {n: getattr(kernels, n) for n in NAMES}

    def recorder(name, fn):
        def wrapped(*args):
            seen.setdefault(name, copy.deepcopy(args))
            return fn(*args)
        return wrapped

    for n, fn in originals.items():
        setattr(kernels, n, recorder(n, fn))
    try:
        cfg = EngineConfig(sa_max_moves=20, grid_nx=32, grid_ny=32)
        anneal(load_bundled("n100s"), cfg, "tsc", seed=1, harden_final=False)
        rng = np.random.default_rng(0)
        spatial_entropy(rng.random((32, 32)))
        pitch = grid_pitch(cfg.outline, (32, 32))
        net = ThermalNetwork(StackModel.from_config(cfg), pitch, rng.random((32, 32)) * 0.2)
        w = rng.random((32, 32)) * 1e-3
        net.solve_watts(w, w, method="sor", tol=1e-6)
    finally:
        for n, fn in originals.items():
            setattr(kernels, n, fn)
    return seen


def median_time(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        a = copy.deepcopy(args)
        t = time.perf_counter()
        fn(*a)
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    if a.dtype.kind == "f" or b.dtype.kind == "f":
        return bool(np.allclose(a, b, rtol=1e-9, atol=1e-12))
    return bool(np.array_equal(a, b))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    calls = capture_calls()
    print(f"{'kernel':22s} {'numba ms':>10s} {'numpy ms':>10s} {'speed-up':>9s}  agree")
    for name in NAMES:
        if name not in calls:
            print(f"{name:22s} (not exercised)")
            continue
        fa = getattr(kernels.numba_impl, name)
        fb = getattr(kernels.numpy_impl, name)
        fa(*copy.deepcopy(calls[name]))        # compile outside the timed runs
        ta = median_time(fa, calls[name], args.repeat)
        tb = median_time(fb, calls[name], max(1, min(args.repeat, 3)))
        ra, rb = fa(*copy.deepcopy(calls[name])), fb(*copy.deepcopy(calls[name]))
        if name == "sor_solve":
            # sweep orders differ between backends; both stop at the residual tolerance
            ok = bool(np.allclose(ra[0], rb[0], rtol=1e-4, atol=0.0))
        else:
            ok = same(ra, rb)
        print(f"{name:22s} {1e3 * ta:10.3f} {1e3 * tb:10.3f} {tb / ta:8.1f}x  {ok}")


if __name__ == "__main__":
    main()
