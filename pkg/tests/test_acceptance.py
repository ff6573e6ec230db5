"""Acceptance criteria, one test per criterion.

Every test records a PASS/FAIL line (echoed in the terminal summary and on
stdout) before asserting, so a failing criterion still reports its numbers.
"""
import math
import time

import numpy as np
import pytest

from oracles import (
    dense_thermal, entropy_oracle, labels_from_classes, nested_means_oracle, pearson_two_pass,
    stability_oracle,
)
from tsvshield.bench_io import load_bundled
from tsvshield.cli import report_json
from tsvshield.config import EngineConfig
from tsvshield.floorplan import anneal
from tsvshield.harden import harden, hotspot_floorplan, mean_correlation
from tsvshield.leakage import nested_means_classify, pearson, spatial_entropy, stability
from tsvshield.model import Grid2D
from tsvshield.sweep import (
    REGULAR_COLUMNS, TSV_PATTERNS, column_minimum, entropy_rank_correlation,
    secondary_experiment_sweep, table_maximum,
)
from tsvshield.thermal import StackModel, solve_steady

SEEDS = range(10)
SA_MOVES = 3000


def record(log, number, ok, detail, soft=False):
    tag = "PASS" if ok else ("FAIL (soft, not gated)" if soft else "FAIL")
    line = f"criterion {number}: {tag} - {detail}"
    log.append(line)
    print(line)


def rel_close(a, b, rtol=1e-9):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


# ----------------------------------------------------------------------------

def test_criterion_1_metric_oracles(acceptance_log):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = {"pearson": 0, "stability": 0, "nested_means": 0, "entropy": 0}
    n = 100
    for _ in range(n):
        ny, nx = (int(v) for v in rng.integers(1, 9, 2))
        if ny * nx < 2:
            nx = 2
        p = rng.lognormal(0, 1, (ny, nx))
        t = 300 + rng.normal(0, 1, (ny, nx)) + 3 * p
        if not rel_close(pearson(p, t).r, pearson_two_pass(p, t)):
            bad["pearson"] += 1

        m = int(rng.integers(3, 12))
        ps = rng.lognormal(0, 0.5, (m, ny, nx))
        ts = 300 + 2 * ps + rng.normal(0, 0.3, (m, ny, nx))
        sm = stability(ps, ts)
        ref = stability_oracle(ps, ts)
        for idx in np.ndindex(ny, nx):
            got = float(sm.values[idx]) if sm.defined[idx] else None
            if not rel_close(got, ref[idx]):
                bad["stability"] += 1
                break

        v = rng.lognormal(0, 1, int(rng.integers(1, 65)))
        if not np.array_equal(nested_means_classify(v), labels_from_classes(v, nested_means_oracle(v))):
            bad["nested_means"] += 1

        if not rel_close(spatial_entropy(p).s, entropy_oracle(p)):
            bad["entropy"] += 1
    dt = time.perf_counter() - t0
    ok = not any(bad.values()) and dt < 10.0
    record(acceptance_log, 1, ok, f"{n} instances per metric, mismatches {bad}, {dt:.2f} s")
    assert ok


def test_criterion_2_thermal_correctness(acceptance_log):
    t0 = time.perf_counter()
    stack = StackModel()
    pitch = (125.0, 125.0)
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(10):
        p1, p2 = rng.random((2, 8, 8)) * 1e-5
        d = rng.random((8, 8)) * (rng.random((8, 8)) < 0.5)
        r = solve_steady(Grid2D(p1, pitch), Grid2D(p2, pitch), Grid2D(d, pitch), stack)
        ref = dense_thermal(p1, p2, d, pitch)
        got = np.stack([r.t1.values, r.t2.values]) - stack.ambient
        worst = max(worst, float(np.max(np.abs(got - ref) / np.abs(ref))))

    p1, p2 = rng.random((2, 32, 32)) * 1e-5
    d = (rng.random((32, 32)) < 0.2).astype(float)
    r = solve_steady(Grid2D(p1, pitch), Grid2D(p2, pitch), Grid2D(d, pitch), stack)
    g_sink = stack.h_sink * pitch[0] * pitch[1] * 1e-12
    out = ((r.t1.values - stack.ambient) * stack.pkg_ratio * g_sink).sum() \
        + ((r.t2.values - stack.ambient) * g_sink).sum()
    total = (p1.sum() + p2.sum()) * pitch[0] * pitch[1]
    balance = abs(out - total) / total

    mono = True
    base = r
    for _ in range(5):
        q2 = p2.copy()
        q2[rng.integers(32), rng.integers(32)] += 1e-5
        more = solve_steady(Grid2D(p1, pitch), Grid2D(q2, pitch), Grid2D(d, pitch), stack)
        mono &= bool(np.all(more.t1.values >= base.t1.values - 1e-12)
                     and np.all(more.t2.values >= base.t2.values - 1e-12))

    half = rng.random((16, 8)) * 1e-5
    sym = np.hstack([half, half[:, ::-1]])
    ds = np.hstack([d[:16, :8], d[:16, :8][:, ::-1]])
    rs = solve_steady(Grid2D(sym, pitch), Grid2D(sym[::-1], pitch), Grid2D(ds, pitch), stack)
    mirror = bool(np.allclose(rs.t1.values, rs.t1.values[:, ::-1], rtol=1e-12)
                  and np.allclose(rs.t2.values, rs.t2.values[:, ::-1], rtol=1e-12))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and balance <= 1e-4 and mono and mirror and dt < 60
    record(acceptance_log, 2, ok, f"8x8 dense max rel err {worst:.2e}, 32x32 energy balance {balance:.2e}, "
                                  f"monotone {mono}, mirror {mirror}, {dt:.2f} s")
    assert ok


def test_criterion_3_sweep_trends(acceptance_log):
    t0 = time.perf_counter()
    rep = secondary_experiment_sweep(EngineConfig(), dims=(32, 32))
    mins = {t: column_minimum(rep, t).power_pattern for t in TSV_PATTERNS}
    top = table_maximum(rep)
    rhos = {t: entropy_rank_correlation(rep, t) for t in TSV_PATTERNS}
    dt = time.perf_counter() - t0
    a = all(v == "globally_uniform" for v in mins.values())
    b = top.power_pattern == "large_gradients" and top.tsv_pattern in REGULAR_COLUMNS
    c = all(v >= 0.5 for v in rhos.values())
    ok = len(rep.rows) == 30 and a and b and c and dt < 300
    record(acceptance_log, 3, ok, f"30 cases; column minima globally uniform {a}; table max "
                                  f"{top.power_pattern}/{top.tsv_pattern} r1={top.r1:.3f}; "
                                  f"min Spearman(S1, r1) {min(rhos.values()):.3f}; {dt:.1f} s")
    assert ok


# ----------------------------------------------------------------------------
# floorplanning runs shared by criteria 4 and 6

@pytest.fixture(scope="module")
def floorplan_runs():
    bundle = load_bundled("n100s")
    cfg = EngineConfig(sa_max_moves=SA_MOVES)
    t0 = time.perf_counter()
    reports = {m: [anneal(bundle, cfg, m, seed=s).report for s in SEEDS] for m in ("pa", "tsc")}
    return reports, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_4_floorplanning_direction(floorplan_runs, acceptance_log):
    reports, dt = floorplan_runs
    r_pa = float(np.mean([r.r1 for r in reports["pa"]]))
    r_tsc = float(np.mean([r.r1 for r in reports["tsc"]]))
    legal = all(r.legal for rs in reports.values() for r in rs)
    ok = r_tsc <= 0.97 * r_pa and legal and dt < 1800
    record(acceptance_log, 4, ok, f"mean r1 pa {r_pa:.4f}, tsc {r_tsc:.4f} (ratio {r_tsc / r_pa:.3f}), "
                                  f"{len(SEEDS)} seeds x {SA_MOVES} moves, all legal {legal}, {dt:.0f} s")
    assert ok


def test_criterion_5_hardening(acceptance_log):
    t0 = time.perf_counter()
    cfg = EngineConfig()
    fp = hotspot_floorplan()
    out, trace = harden(fp, cfg)
    r = trace.r_values
    strictly = len(r) >= 2 and all(b < a for a, b in zip(r, r[1:]))
    # independent recomputation of every accepted step
    cur = fp
    recomputed = [mean_correlation(cur, cfg)]
    for isl, _ in trace.steps:
        cur = cur.replace(tsvs=cur.tsvs + (isl,))
        recomputed.append(mean_correlation(cur, cfg))
    never_up = all(b <= a for a, b in zip(recomputed, recomputed[1:]))
    same = all(math.isclose(a, b, rel_tol=1e-9) for a, b in zip(recomputed, r))
    reduction = 1 - r[-1] / r[0]
    dt = time.perf_counter() - t0
    ok = strictly and never_up and same and reduction >= 0.05 and dt < 300
    record(acceptance_log, 5, ok, f"r_mean {r[0]:.4f} -> {r[-1]:.4f} ({100 * reduction:.1f}% drop) "
                                  f"over {trace.accepted} islands, recomputation agrees {same}, {dt:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_6_cost_envelope(floorplan_runs, acceptance_log):
    reports, _ = floorplan_runs
    pw = {m: float(np.mean([r.power for r in rs])) for m, rs in reports.items()}
    vol = {m: float(np.mean([r.volumes for r in rs])) for m, rs in reports.items()}
    dummy_frac = float(np.mean([r.dummy_tsvs / max(r.signal_tsvs, 1) for r in reports["tsc"]]))
    checks = {
        "power": pw["tsc"] <= 1.15 * pw["pa"],
        "dummy": dummy_frac <= 0.05,
        "volumes": vol["tsc"] >= vol["pa"],
    }
    record(acceptance_log, 6, all(checks.values()),
           f"power tsc/pa {pw['tsc'] / pw['pa']:.3f}, dummy/signal {100 * dummy_frac:.2f}%, "
           f"volumes pa {vol['pa']:.1f} tsc {vol['tsc']:.1f}; {checks}", soft=True)


def test_criterion_7_determinism(acceptance_log):
    bundle = load_bundled("n100s")
    cfg = EngineConfig(sa_max_moves=200, grid_nx=32, grid_ny=32)
    outs = [report_json(anneal(bundle, cfg, "tsc", seed=11).report) for _ in range(2)]
    ok = outs[0] == outs[1]
    record(acceptance_log, 7, ok, f"two tsc runs at seed 11 give byte-identical reports "
                                  f"({len(outs[0])} bytes, wall time excluded)")
    assert ok
