"""Attacker impersonation by activity sampling, correlation-stability maps and
post-floorplanning insertion of dummy thermal TSV islands."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .leakage import StabilityMap, pearson, spatial_entropy, stability
from .model import (
    TSV_DUMMY,
    BlockModule,
    DomainError,
    Floorplan,
    Grid2D,
    TsvIsland,
    grid_pitch,
    rasterize_coverage_arrays,
    rasterize_power_arrays,
)
from .thermal import StackModel, ThermalNetwork, ThermalResult, ThermalSolverError


@dataclass(frozen=True, eq=False)
class ActivitySample:
    index: int
    powers: np.ndarray        # W per block, in floorplan block order
    power1: Grid2D
    power2: Grid2D
    thermal: ThermalResult


def footprint_operator(fp: Floorplan, dims):
    """Per-die (n_blocks, ny*nx) matrices mapping block watts to W/um^2 maps."""
    nx, ny = dims
    ops = []
    for d in (1, 2):
        m = np.zeros((len(fp.blocks), ny * nx))
        for i, b in enumerate(fp.blocks):
            if b.die == d:
                m[i] = rasterize_power_arrays([b.rect], [1.0], fp.outline, dims).ravel()
        ops.append(m)
    return ops


def tsv_density_values(fp: Floorplan, dims) -> np.ndarray:
    return rasterize_coverage_arrays([t.rect for t in fp.tsvs], fp.outline, dims)


def draw_powers(fp: Floorplan, m: int, seed: int, std_frac: float) -> np.ndarray:
    """(m, n_blocks) draws ~ Normal(P, std_frac * P), truncated at zero."""
    mean = np.array([b.effective_power for b in fp.blocks])
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, len(mean)))
    return np.maximum(mean + std_frac * mean * z, 0.0)


class _Sampler:
    """Shared operator and network for batches of activity samples."""

    def __init__(self, fp: Floorplan, cfg, dims=None):
        self.fp = fp
        self.dims = tuple(dims) if dims is not None else cfg.grid
        self.pitch = grid_pitch(fp.outline, self.dims)
        self.ops = footprint_operator(fp, self.dims)
        self.stack = StackModel.from_config(cfg)
        self.net = ThermalNetwork(self.stack, self.pitch, tsv_density_values(fp, self.dims))

    def maps(self, draws):
        nx, ny = self.dims
        m = len(draws)
        return [(draws @ op).reshape(m, ny, nx) for op in self.ops]

    def solve(self, draws):
        p1, p2 = self.maps(draws)
        a = self.pitch[0] * self.pitch[1]
        rise = self.net.solve_many(p1 * a, p2 * a)
        return p1, p2, rise


def sample_activities(fp: Floorplan, m: int, seed: int, cfg, dims=None) -> list[ActivitySample]:
    """Draw ``m`` activity samples and solve each one in steady state."""
    if m < 2:
        raise DomainError("need at least two activity samples")
    sp = _Sampler(fp, cfg, dims)
    draws = draw_powers(fp, m, seed, cfg.sample_std)
    p1, p2, rise = sp.solve(draws)
    area = sp.pitch[0] * sp.pitch[1]
    out = []
    for k in range(m):
        res = sp.net.residual(rise[k], p1[k] * area, p2[k] * area)
        total = float((p1[k].sum() + p2[k].sum()) * area)
        if not res <= cfg.solver_tol * max(total, 1e-300):
            raise ThermalSolverError(f"sample {k}: steady-state solve failed", res, 1)
        out.append(ActivitySample(k, draws[k], Grid2D(p1[k], sp.pitch), Grid2D(p2[k], sp.pitch),
                                  sp.net.result(rise[k], res, 1)))
    return out


def stability_map(samples, die: int = 1) -> StabilityMap:
    ps = [s.power1 if die == 1 else s.power2 for s in samples]
    ts = [s.thermal.die(die) for s in samples]
    return stability(ps, ts)


def stability_maps(fp, cfg, dims):
    sp = _Sampler(fp, cfg, dims)
    draws = draw_powers(fp, cfg.samples, cfg.seed, cfg.sample_std)
    p1, p2, rise = sp.solve(draws)
    return stability(p1, rise[:, 0]), stability(p2, rise[:, 1])


def correlations(fp: Floorplan, cfg, dims=None):
    """(r1, r2, thermal result) at nominal power, direct steady-state solve."""
    dims = tuple(dims) if dims is not None else cfg.grid
    pitch = grid_pitch(fp.outline, dims)
    nx, ny = dims
    maps = []
    for d in (1, 2):
        bl = fp.on_die(d)
        maps.append(rasterize_power_arrays([b.rect for b in bl], [b.effective_power for b in bl],
                                           fp.outline, dims))
    net = ThermalNetwork(StackModel.from_config(cfg), pitch, tsv_density_values(fp, dims))
    a = pitch[0] * pitch[1]
    rise, res, it = net.solve_watts(maps[0] * a, maps[1] * a)
    return pearson(maps[0], rise[0]).r, pearson(maps[1], rise[1]).r, maps, net.result(rise, res, it)


def mean_correlation(fp: Floorplan, cfg, dims=None) -> float | None:
    """Mean of the defined r1, r2 (the stop criterion of the hardening loop)."""
    r1, r2, _, _ = correlations(fp, cfg, dims)
    vals = [r for r in (r1, r2) if r is not None]
    return float(np.mean(vals)) if vals else None


def verify_correlation(fp: Floorplan, cfg, dims=None) -> dict:
    r1, r2, maps, res = correlations(fp, cfg, dims)
    s = [spatial_entropy(mp, cfg.entropy_singleton, cfg.entropy_ratio).s for mp in maps]
    return {"r": [r1, r2], "s": s, "peak": res.peak}


# ----------------------------------------------------------------------------
# dummy TSV islands

def island_side_sites(count: int) -> int:
    return int(math.ceil(math.sqrt(count) - 1e-12))


def island_windows(fp: Floorplan, pitch: float, k: int):
    """Boolean map over site grid: True where a k x k island fits (lower-left site)."""
    W, H = fp.outline
    sx, sy = int(W // pitch), int(H // pitch)
    free = np.ones((sy, sx), dtype=bool)
    rects = [b.rect for b in fp.on_die(1)] + [t.rect for t in fp.tsvs]
    for (x0, y0, x1, y1) in rects:
        # a site is blocked when its square overlaps the rectangle with positive area
        ix0 = max(int(math.floor(x0 / pitch + 1e-9)), 0)
        ix1 = min(int(math.ceil(x1 / pitch - 1e-9)), sx)
        iy0 = max(int(math.floor(y0 / pitch + 1e-9)), 0)
        iy1 = min(int(math.ceil(y1 / pitch - 1e-9)), sy)
        if ix1 > ix0 and iy1 > iy0:
            free[iy0:iy1, ix0:ix1] = False
    if sy < k or sx < k:
        return np.zeros((0, 0), dtype=bool)
    c = np.zeros((sy + 1, sx + 1), dtype=np.int64)
    c[1:, 1:] = np.cumsum(np.cumsum(~free, axis=0), axis=1)
    blocked = c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
    return blocked == 0


def place_island(fp: Floorplan, target_xy, radius_um: float, count: int, pitch: float):
    """Nearest free island centre within ``radius_um`` (Chebyshev) of ``target_xy``."""
    k = island_side_sites(count)
    ok = island_windows(fp, pitch, k)
    if ok.size == 0 or not ok.any():
        return None
    iy, ix = np.nonzero(ok)
    cx = (ix + 0.5 * k) * pitch
    cy = (iy + 0.5 * k) * pitch
    tx, ty = target_xy
    near = np.maximum(np.abs(cx - tx), np.abs(cy - ty)) <= radius_um
    if not near.any():
        return None
    d2 = (cx - tx) ** 2 + (cy - ty) ** 2
    d2 = np.where(near, d2, np.inf)
    j = int(np.argmin(d2))     # first in row-major order on ties
    return (float(cx[j]), float(cy[j]))


@dataclass
class HardeningTrace:
    start_r: float | None
    steps: list = field(default_factory=list)        # (TsvIsland, r_mean after insertion)
    rejected: tuple | None = None                     # (TsvIsland, r_mean) of the reverted try
    stop_reason: str = ""
    floorplan: Floorplan | None = field(default=None, repr=False)

    @property
    def accepted(self) -> int:
        return len(self.steps)

    @property
    def r_values(self) -> list:
        return [self.start_r] + [r for _, r in self.steps]


def _focus_mask(fp: Floorplan, ids, dims):
    bl = [b for b in fp.blocks if b.id in ids]
    if not bl:
        raise DomainError(f"focus modules not found: {sorted(ids)}")
    return rasterize_coverage_arrays([b.rect for b in bl], fp.outline, dims) > 0


def harden(fp: Floorplan, cfg, focus=None, max_dummy: int | None = None
           ) -> tuple[Floorplan, HardeningTrace]:
    """Insert dummy TSV islands where the correlation is most stable while the
    mean correlation keeps dropping.

    ``max_dummy`` caps the total number of dummy TSVs in the floorplan; the
    loop stops before an island would exceed it.
    """
    dims = cfg.grid
    nx, ny = dims
    pitch = grid_pitch(fp.outline, dims)
    if focus is None and cfg.focus_modules:
        focus = [s.strip() for s in cfg.focus_modules.split(",") if s.strip()]
    fmask = _focus_mask(fp, set(focus), dims) if focus else None
    # the island may start anywhere within harden_radius bins of the chosen bin;
    # half its side plus one site absorb the snapping to the TSV site grid
    k = island_side_sites(cfg.island_tsv_count)
    radius = (cfg.harden_radius + 0.5) * max(pitch) + (0.5 * k + 1) * cfg.tsv_pitch
    r_cur = mean_correlation(fp, cfg, dims)
    trace = HardeningTrace(r_cur)
    if r_cur is None:
        trace.stop_reason = "correlation undefined"
        trace.floorplan = fp
        return fp, trace
    for _ in range(cfg.harden_max_steps):
        if max_dummy is not None and fp.dummy_tsv_count() + cfg.island_tsv_count > max_dummy:
            trace.stop_reason = "dummy TSV budget"
            break
        s1, s2 = stability_maps(fp, cfg, dims)
        score = np.where(s1.defined, np.abs(s1.values), -1.0)
        if cfg.harden_target == "stack":
            score = np.maximum(score, np.where(s2.defined, np.abs(s2.values), -1.0))
        if fmask is not None:
            score = np.where(fmask, score, -1.0)
        order = np.argsort(-score.ravel(), kind="stable")
        spot = None
        for flat in order:
            if score.flat[flat] < 0:
                break
            iy, ix = divmod(int(flat), nx)
            spot = place_island(fp, ((ix + 0.5) * pitch[0], (iy + 0.5) * pitch[1]), radius,
                                cfg.island_tsv_count, cfg.tsv_pitch)
            if spot is not None:
                break
        if spot is None:
            trace.stop_reason = "no whitespace for an island"
            break
        isl = TsvIsland(spot, cfg.island_tsv_count, TSV_DUMMY, cfg.tsv_pitch)
        cand = fp.replace(tsvs=fp.tsvs + (isl,))
        r_new = mean_correlation(cand, cfg, dims)
        if r_new is not None and r_new < r_cur:
            fp, r_cur = cand, r_new
            trace.steps.append((isl, r_new))
        else:
            trace.rejected = (isl, r_new)
            trace.stop_reason = "mean correlation no longer decreasing"
            break
    else:
        trace.stop_reason = "step limit"
    trace.floorplan = fp
    return fp, trace


def hotspot_floorplan(side: float = 1000.0) -> Floorplan:
    """Two-die test case with a large power gradient across the stack.

    The top die carries a hotspot over its central quarter (30x the density of
    its periphery). Underneath sit a moderate module under the hotspot and four
    corner modules, which are the densest sources of the bottom die. The corner
    modules lie beneath the cool part of the top die with whitespace around
    them, so dummy islands placed at their edges open vertical paths that
    flatten the bottom-die temperature around its strongest sources.
    Coordinates scale with ``side`` (um); powers are in W.
    """
    q = side / 4.0

    def hard(bid, x, y, w, h, die, p):
        return BlockModule(bid, "hard", w * h, (w / h, w / h), (x, y), (w, h), die, p)

    blocks = [hard("core", 1.4 * q, 1.4 * q, 1.2 * q, 1.2 * q, 1, 0.025)]
    for k, (i, j) in enumerate(((0, 0), (3, 0), (0, 3), (3, 3))):
        blocks.append(hard(f"corner{k}", i * q, j * q, q, q, 1, 0.03))
    for j in range(4):
        for i in range(4):
            hot = i in (1, 2) and j in (1, 2)
            blocks.append(hard(f"top{j}{i}", i * q, j * q, q, q, 2, 0.15 if hot else 0.005))
    return Floorplan((side, side), tuple(blocks))


# ----------------------------------------------------------------------------
# localization attack

@dataclass
class AttackReport:
    targets: tuple
    success: bool
    margin: float            # K: best delta inside targets minus best delta outside
    peak_delta: float
    peak_bin: tuple          # (die, iy, ix)
    delta1: np.ndarray = field(repr=False)
    delta2: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"targets": list(self.targets), "success": self.success, "margin": self.margin,
                "peak_delta": self.peak_delta, "peak_bin": list(self.peak_bin)}


def localize_attack(fp: Floorplan, targets, cfg, dims=None) -> AttackReport:
    """Attacker drives the targets ``attack_sigma`` standard deviations above
    their mean and compares mean temperatures against a baseline run drawn with
    the same random numbers; detection succeeds when the hottest delta bin lies
    in a target footprint."""
    targets = tuple(targets)
    if not targets:
        raise DomainError("need at least one target module")
    ids = [b.id for b in fp.blocks]
    missing = [t for t in targets if t not in ids]
    if missing:
        raise DomainError(f"unknown target modules: {missing}")
    sp = _Sampler(fp, cfg, dims)
    nx, ny = sp.dims
    base = draw_powers(fp, cfg.samples, cfg.seed, cfg.sample_std)
    mean = np.array([b.effective_power for b in fp.blocks])
    boost = np.array([cfg.attack_sigma * cfg.sample_std * p if b.id in targets else 0.0
                      for b, p in zip(fp.blocks, mean)])
    _, _, r0 = sp.solve(base)
    _, _, r1 = sp.solve(base + boost)
    delta = (r1 - r0).mean(axis=0)
    inside = []
    for d in (1, 2):
        tb = [b for b in fp.blocks if b.id in targets and b.die == d]
        cov = rasterize_coverage_arrays([b.rect for b in tb], fp.outline, sp.dims) if tb else np.zeros((ny, nx))
        inside.append(cov >= 0.5)
    inside = np.stack(inside)
    peak = float(delta.max())
    j = np.unravel_index(int(np.argmax(delta)), delta.shape)
    peak_bin = (int(j[0]) + 1, int(j[1]), int(j[2]))
    best_in = float(delta[inside].max()) if inside.any() else 0.0
    best_out = float(delta[~inside].max()) if (~inside).any() else 0.0
    success = bool(peak > 0 and inside[j])
    return AttackReport(targets, success, best_in - best_out, peak, peak_bin, delta[0], delta[1])
