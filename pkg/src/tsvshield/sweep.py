"""Exploratory sweep: 5 power distributions x 6 TSV distributions on a fixed
two-die test layout, reporting power/temperature correlation per die."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata, spearmanr

from .leakage import pearson, spatial_entropy
from .model import Grid2D, rasterize_coverage_arrays, rasterize_power_arrays
from .thermal import StackModel, ThermalNetwork

POWER_PATTERNS = ("globally_uniform", "locally_uniform", "medium_gradients",
                  "small_gradients", "large_gradients")
TSV_PATTERNS = ("none", "maximal", "irregular", "irregular_regular", "islands", "islands_regular")

# module grid of the test layout and the channel left between modules (um)
_CELLS = 4
_CHANNEL = 0.0
_STACK_POWER = 10.0


@dataclass
class SweepRow:
    power_pattern: str
    tsv_pattern: str
    r1: float | None
    r2: float | None
    s1: float
    s2: float


@dataclass
class SweepReport:
    rows: list[SweepRow]
    maps: dict = field(default_factory=dict, repr=False)

    def row(self, power_pattern, tsv_pattern) -> SweepRow:
        for r in self.rows:
            if r.power_pattern == power_pattern and r.tsv_pattern == tsv_pattern:
                return r
        raise KeyError((power_pattern, tsv_pattern))

    def column(self, tsv_pattern) -> list[SweepRow]:
        return [r for r in self.rows if r.tsv_pattern == tsv_pattern]


def module_rects(outline, cells=_CELLS, channel=_CHANNEL):
    W, H = outline
    cw, ch = W / cells, H / cells
    rects = []
    for j in range(cells):
        for i in range(cells):
            rects.append((i * cw + channel / 2, j * ch + channel / 2,
                          (i + 1) * cw - channel / 2, (j + 1) * ch - channel / 2))
    return np.array(rects)


def module_densities(pattern, n_cells, die, rng_seed=0):
    """Relative power density per module for a named pattern (row-major cells)."""
    k = n_cells * n_cells
    rng = np.random.default_rng(1000 * die + rng_seed)
    field_ = rng.uniform(-1.0, 1.0, k)
    ii, jj = np.meshgrid(np.arange(n_cells), np.arange(n_cells))
    if pattern == "globally_uniform":
        return np.ones(k)
    if pattern == "locally_uniform":
        # quadrants of equal density, mild steps between them
        q = (ii >= n_cells // 2).astype(int) + 2 * (jj >= n_cells // 2).astype(int)
        steps = rng.permutation([0.8, 0.93, 1.07, 1.2])
        return steps[q.ravel()]
    contrast = {"small_gradients": 1.5, "medium_gradients": 3.0, "large_gradients": 10.0}[pattern]
    if pattern == "large_gradients":
        # hot spots stack across the dies and the top die runs at twice the level
        field_ = np.random.default_rng(1000 + rng_seed).uniform(-1.0, 1.0, k)
        return contrast ** (0.5 * field_) * (2.0 if die == 2 else 1.0)
    return contrast ** (0.5 * field_)


def power_maps(pattern, outline, dims, cells=_CELLS):
    rects = module_rects(outline, cells)
    areas = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
    watts = [module_densities(pattern, cells, d) * areas for d in (1, 2)]
    scale = _STACK_POWER / (watts[0].sum() + watts[1].sum())
    return [rasterize_power_arrays(rects, w * scale, outline, dims) for w in watts]


def tsv_rects(pattern, outline, pitch=20.0, regular_pitch=250.0, seed=7):
    """TSV footprints (x0, y0, x1, y1) for a named pattern; ``maximal`` returns None."""
    W, H = outline
    rng = np.random.default_rng(seed)
    rects = []

    def add(cx, cy, side):
        rects.append((cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2))

    if pattern == "maximal":
        return None
    if pattern in ("irregular", "irregular_regular"):
        for cx, cy in rng.uniform([pitch, pitch], [W - pitch, H - pitch], size=(150, 2)):
            add(cx, cy, pitch)
    if pattern in ("islands", "islands_regular"):
        for cx, cy in rng.uniform([300, 300], [W - 300, H - 300], size=(6, 2)):
            add(cx, cy, 10 * pitch)
    if pattern in ("irregular_regular", "islands_regular"):
        xs = np.arange(regular_pitch / 2, W, regular_pitch)
        ys = np.arange(regular_pitch / 2, H, regular_pitch)
        for cy in ys:
            for cx in xs:
                add(cx, cy, pitch)
    return np.array(rects).reshape(-1, 4)


def tsv_density(pattern, outline, dims, pitch=20.0, regular_pitch=250.0):
    nx, ny = dims
    rects = tsv_rects(pattern, outline, pitch, regular_pitch)
    if rects is None:
        return np.ones((ny, nx))
    return rasterize_coverage_arrays(rects, outline, dims)


def secondary_experiment_sweep(cfg, dims=None, keep_maps=False) -> SweepReport:
    """Run all power x TSV pattern combinations through the detailed solver."""
    stack = StackModel.from_config(cfg)
    outline = cfg.outline
    dims = tuple(dims) if dims is not None else cfg.grid
    nx, ny = dims
    pitch = (outline[0] / nx, outline[1] / ny)
    area = pitch[0] * pitch[1]
    pmaps = {p: power_maps(p, outline, dims) for p in POWER_PATTERNS}
    ents = {p: [spatial_entropy(m, cfg.entropy_singleton, cfg.entropy_ratio).s for m in pmaps[p]]
            for p in POWER_PATTERNS}
    rows = []
    maps = {}
    for tp in TSV_PATTERNS:
        d = tsv_density(tp, outline, dims, cfg.tsv_pitch, cfg.regular_tsv_pitch)
        net = ThermalNetwork(stack, pitch, d)
        for pp in POWER_PATTERNS:
            p1, p2 = pmaps[pp]
            rise, res, it = net.solve_watts(p1 * area, p2 * area, cfg.solver, cfg.solver_tol,
                                            cfg.solver_max_iter)
            t = rise + stack.ambient
            rows.append(SweepRow(pp, tp, pearson(p1, t[0]).r, pearson(p2, t[1]).r, *ents[pp]))
            if keep_maps:
                maps[(pp, tp)] = {
                    "power1": Grid2D(p1, pitch), "power2": Grid2D(p2, pitch),
                    "temp1": Grid2D(t[0], pitch), "temp2": Grid2D(t[1], pitch),
                    "tsv": Grid2D(d, pitch),
                }
    return SweepReport(rows, maps)


def write_sweep_csv(report: SweepReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_pattern", "tsv_pattern", "r1", "r2", "S1", "S2"])
        for r in report.rows:
            w.writerow([r.power_pattern, r.tsv_pattern,
                        "" if r.r1 is None else f"{r.r1:.6f}",
                        "" if r.r2 is None else f"{r.r2:.6f}",
                        f"{r.s1:.6f}", f"{r.s2:.6f}"])


# An undefined correlation (constant power map) carries no exploitable linear
# relation; for ranking it sits below every defined value.
def rank_key(r) -> float:
    return -math.inf if r is None else r


REGULAR_COLUMNS = ("maximal", "irregular_regular", "islands_regular")


def column_minimum(report: SweepReport, tsv_pattern) -> SweepRow:
    return min(report.column(tsv_pattern), key=lambda row: rank_key(row.r1))


def table_maximum(report: SweepReport) -> SweepRow:
    return max(report.rows, key=lambda row: rank_key(row.r1))


def entropy_rank_correlation(report: SweepReport, tsv_pattern) -> float:
    """Spearman correlation between S1 and r1 over the power patterns of one column."""
    col = report.column(tsv_pattern)
    s = rankdata([row.s1 for row in col])
    r = rankdata([rank_key(row.r1) for row in col])
    return float(spearmanr(s, r)[0])
