"""Fixed-outline two-die floorplanning by simulated annealing.

Each die is encoded as a sequence pair over its blocks; soft blocks carry an
aspect ratio. Decoding packs both dies bottom-left and drops one signal TSV
per cross-die net onto the die-1 whitespace site nearest the net's bounding
box centre. The cost mixes classical terms (outline, packing, wirelength,
critical delay, peak temperature, power) with the leakage terms (mean |r| and
mean spatial entropy) in the leakage-aware setup.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .leakage import pearson, spatial_entropy
from .model import (
    TSV_SIGNAL,
    VOLTAGE_LEVELS,
    DomainError,
    Floorplan,
    TsvIsland,
    rasterize_coverage_arrays,
    rasterize_power_arrays,
    soft_dims,
)
from .thermal import StackModel, blur_rise, calibrate
from .timing import (
    TimingStructure,
    TimingTech,
    VolumeContext,
    adjacency_matrix,
    bool_words,
    feasible_mask,
    natural_key,
    select_words,
    volume_candidates,
)

log = logging.getLogger(__name__)

MODES = ("pa", "tsc")
TERMS = ("outline", "packing", "wirelength", "delay", "temp", "power", "corr", "entropy")
LEAKAGE_TERMS = ("corr", "entropy")
_LEVEL_INDEX = {lv.volts: k for k, lv in enumerate(VOLTAGE_LEVELS)}


class NoLegalSolutionError(RuntimeError):
    """Raised by callers that insist on legality; ``anneal`` itself reports instead."""


# ----------------------------------------------------------------------------
# problem and encoding

class Problem:
    """Static per-benchmark data in natural block-id order."""

    def __init__(self, blocks, terminals, nets, cfg, outline=None):
        self.cfg = cfg
        self.outline = tuple(outline) if outline is not None else cfg.outline
        self.blocks = tuple(sorted(blocks, key=lambda b: natural_key(b.id)))
        self.terminals = tuple(terminals)
        self.nets = tuple(nets)
        self.ids = tuple(b.id for b in self.blocks)
        self.n = len(self.blocks)
        self.area = np.array([b.area for b in self.blocks], dtype=float)
        self.power = np.array([b.nominal_power for b in self.blocks], dtype=float)
        self.soft = np.array([b.kind == "soft" for b in self.blocks])
        self.limits = [b.aspect_limits for b in self.blocks]
        self.st = TimingStructure(self.ids, [t.id for t in self.terminals], self.nets)
        tpos = {t.id: t.pos for t in self.terminals}
        self.term_xy = np.array([tpos[t] for t in self.st.terminal_ids], dtype=float).reshape(-1, 2)
        self.term_die = np.ones(len(self.st.terminal_ids), dtype=np.int64)
        self._net_pins()
        self.tech = TimingTech.from_config(cfg)
        self.stack = StackModel.from_config(cfg)
        g = cfg.est_grid
        self.est_dims = (g, g)
        self.est_pitch = (self.outline[0] / g, self.outline[1] / g)
        self.masks = calibrate(self.stack, self.est_pitch, self.est_dims)
        p = cfg.tsv_pitch
        self.site_pitch = p
        self.sites = (max(1, int(self.outline[1] // p)), max(1, int(self.outline[0] // p)))
        self.delay0 = self.tech.k_d * np.sqrt(self.area)
        self.clock = cfg.clock_target if cfg.clock_target > 0 else None

    def _net_pins(self):
        pins, ptr = [], [0]
        for net in self.nets:
            ps = [self.st.index[p] for p in dict.fromkeys(net.pins)]
            if len(ps) < 2:
                continue
            pins.extend(ps)
            ptr.append(len(pins))
        self.pin_node = np.array(pins, dtype=np.int64)
        self.net_ptr = np.array(ptr, dtype=np.int64)

    @classmethod
    def from_bundle(cls, bundle, cfg):
        return cls(bundle.blocks, bundle.terminals, bundle.nets, cfg)

    @classmethod
    def from_floorplan(cls, fp: Floorplan, cfg):
        return cls(fp.blocks, fp.terminals, fp.nets, cfg, fp.outline)


@dataclass
class LayoutEncoding:
    """Per-die sequence pairs (block indices), soft-block shapes and the volume seed."""

    seq_p: tuple
    seq_m: tuple
    w: np.ndarray
    h: np.ndarray
    aspect: np.ndarray
    vseed: int = 0

    def copy(self) -> "LayoutEncoding":
        return LayoutEncoding((list(self.seq_p[0]), list(self.seq_p[1])),
                              (list(self.seq_m[0]), list(self.seq_m[1])),
                              self.w.copy(), self.h.copy(), self.aspect.copy(), self.vseed)

    def die_array(self, n) -> np.ndarray:
        die = np.zeros(n, dtype=np.int64)
        die[list(self.seq_p[0])] = 1
        die[list(self.seq_p[1])] = 2
        return die

    def validate(self, n):
        for d in (0, 1):
            if sorted(self.seq_p[d]) != sorted(self.seq_m[d]):
                raise DomainError(f"die {d + 1}: sequence pair halves hold different blocks")
        allb = sorted(list(self.seq_p[0]) + list(self.seq_p[1]))
        if allb != list(range(n)):
            raise DomainError("every block must appear on exactly one die")


def initial_encoding(prob: Problem, rng) -> LayoutEncoding:
    """Area-balanced die split (largest first) with random sequence pairs."""
    order = sorted(range(prob.n), key=lambda i: (-prob.area[i], i))
    load = [0.0, 0.0]
    dies = [[], []]
    for i in order:
        d = 0 if load[0] <= load[1] else 1
        dies[d].append(i)
        load[d] += prob.area[i]
    seq_p = tuple(list(rng.permutation(sorted(x))) for x in dies)
    seq_m = tuple(list(rng.permutation(sorted(x))) for x in dies)
    seq_p = tuple([int(v) for v in s] for s in seq_p)
    seq_m = tuple([int(v) for v in s] for s in seq_m)
    w = np.zeros(prob.n)
    h = np.zeros(prob.n)
    aspect = np.ones(prob.n)
    for i, b in enumerate(prob.blocks):
        if b.kind == "soft":
            aspect[i] = min(max(1.0, b.aspect_limits[0]), b.aspect_limits[1])
            w[i], h[i] = soft_dims(b.area, aspect[i], b.aspect_limits)
        else:
            w[i], h[i] = b.dims
            aspect[i] = w[i] / h[i]
    return LayoutEncoding(seq_p, seq_m, w, h, aspect)


@dataclass
class Layout:
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    h: np.ndarray
    die: np.ndarray
    tsv_xy: np.ndarray        # (k, 2) centres of signal TSVs
    tsv_unplaced: int = 0

    @property
    def rects(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.x + self.w, self.y + self.h], axis=1)

    def node_xy(self, prob: Problem):
        cx = self.x + 0.5 * self.w
        cy = self.y + 0.5 * self.h
        xy = np.concatenate([np.stack([cx, cy], axis=1), prob.term_xy])
        die = np.concatenate([self.die, prob.term_die])
        return xy, die


def _free_sites(prob: Problem, rects, die):
    sy, sx = prob.sites
    p = prob.site_pitch
    free = np.ones((sy, sx), dtype=bool)
    for (x0, y0, x1, y1) in rects[die == 1]:
        ix0 = min(max(math.ceil(x0 / p - 0.5), 0), sx)
        ix1 = min(max(math.ceil(x1 / p - 0.5), 0), sx)
        iy0 = min(max(math.ceil(y0 / p - 0.5), 0), sy)
        iy1 = min(max(math.ceil(y1 / p - 0.5), 0), sy)
        free[iy0:iy1, ix0:ix1] = False
    return free


def decode(enc: LayoutEncoding, prob: Problem) -> Layout:
    n = prob.n
    x = np.zeros(n)
    y = np.zeros(n)
    die = enc.die_array(n)
    for d in (0, 1):
        members = np.array(sorted(enc.seq_p[d]), dtype=np.int64)
        if members.size == 0:
            continue
        local = {int(b): k for k, b in enumerate(members)}
        gp = np.array([local[b] for b in enc.seq_p[d]], dtype=np.int64)
        gm = np.array([local[b] for b in enc.seq_m[d]], dtype=np.int64)
        lx, ly = kernels.sp_pack(gp, gm, np.ascontiguousarray(enc.w[members]),
                                 np.ascontiguousarray(enc.h[members]))
        x[members] = lx
        y[members] = ly
    lay = Layout(x, y, enc.w.copy(), enc.h.copy(), die, np.zeros((0, 2)))
    _place_signal_tsvs(prob, lay)
    return lay


def _place_signal_tsvs(prob: Problem, lay: Layout):
    if prob.net_ptr.size < 2:
        return
    xy, die = lay.node_xy(prob)
    px = xy[prob.pin_node, 0]
    py = xy[prob.pin_node, 1]
    pd = die[prob.pin_node]
    starts = prob.net_ptr[:-1]
    cross = np.maximum.reduceat(pd, starts) != np.minimum.reduceat(pd, starts)
    if not cross.any():
        return
    cx = 0.5 * (np.maximum.reduceat(px, starts) + np.minimum.reduceat(px, starts))[cross]
    cy = 0.5 * (np.maximum.reduceat(py, starts) + np.minimum.reduceat(py, starts))[cross]
    sy, sx = prob.sites
    p = prob.site_pitch
    tx = np.clip(np.floor(cx / p), 0, sx - 1).astype(np.int64)
    ty = np.clip(np.floor(cy / p), 0, sy - 1).astype(np.int64)
    free = _free_sites(prob, lay.rects, lay.die)
    ox, oy = kernels.assign_sites(free, tx, ty, max(sx, sy))
    ok = ox >= 0
    lay.tsv_xy = np.stack([(ox[ok] + 0.5) * p, (oy[ok] + 0.5) * p], axis=1)
    lay.tsv_unplaced = int((~ok).sum())


# ----------------------------------------------------------------------------
# cost evaluation

@dataclass
class CostBreakdown:
    terms: dict
    weights: dict
    norms: dict
    total: float
    classical: float
    r1: float | None
    r2: float | None
    s1: float
    s2: float
    legal: bool
    n_volumes: int
    critical_delay: float

    @property
    def normalized(self) -> dict:
        return {k: self.terms[k] / self.norms[k] for k in TERMS}

    @property
    def leakage_key(self) -> tuple:
        return (self.terms["corr"], self.terms["entropy"])


def mode_weights(cfg, mode: str) -> dict:
    if mode not in MODES:
        raise DomainError(f"mode must be pa or tsc, got {mode!r}")
    w = {k: float(getattr(cfg, f"w_{k}")) for k in TERMS}
    if mode == "pa":
        w["corr"] = 0.0
        w["entropy"] = 0.0
    return w


def unit_norms() -> dict:
    return {k: 1.0 for k in TERMS}


def choose_levels(prob: Problem, lay: Layout, mode: str, clock: float, vseed: int = 0):
    """Voltage-level index per block from volume construction and selection."""
    cfg = prob.cfg
    xy, die = lay.node_xy(prob)
    ed, _ = prob.st.edge_delays(xy, die, prob.tech)
    nd = np.zeros(prob.st.n)
    nd[:prob.n] = prob.delay0
    arr, req = prob.st.propagate(ed, nd, clock)
    slack = (req - arr)[:prob.n]
    feas = [feasible_mask(prob.delay0[i], slack[i]) for i in range(prob.n)]
    adj = bool_words(adjacency_matrix(lay.rects, lay.die, cfg.adjacency_gap, cfg.overlap_min))
    words, fm = volume_candidates(adj, feas, cfg.tree_cap)
    ctx = VolumeContext(prob.ids, adj, feas, prob.power, prob.area)
    jitter = None
    if vseed:
        jitter = 0.1 * np.random.default_rng(vseed).uniform(-1.0, 1.0, prob.n)
    vols = select_words(words, fm, ctx, cfg, "pa" if mode == "pa" else "tsc", jitter)
    pos = {bid: i for i, bid in enumerate(prob.ids)}
    lev = np.full(prob.n, _LEVEL_INDEX[1.0], dtype=np.int64)
    for v in vols:
        k = _LEVEL_INDEX[v.voltage.volts]
        for m in v.members:
            lev[pos[m]] = k
    return lev, vols


def critical_delay_of(prob: Problem, lay: Layout, lev) -> float:
    xy, die = lay.node_xy(prob)
    ed, _ = prob.st.edge_delays(xy, die, prob.tech)
    nd = np.zeros(prob.st.n)
    nd[:prob.n] = prob.delay0 * np.array([VOLTAGE_LEVELS[k].delay_scale for k in lev])
    arr, _ = prob.st.propagate(ed, nd, 1.0)
    return float(arr.max()) if arr.size else 0.0


def _hpwl(prob: Problem, lay: Layout) -> float:
    if prob.net_ptr.size < 2:
        return 0.0
    xy, _ = lay.node_xy(prob)
    px = xy[prob.pin_node, 0]
    py = xy[prob.pin_node, 1]
    s = prob.net_ptr[:-1]
    hp = (np.maximum.reduceat(px, s) - np.minimum.reduceat(px, s)
          + np.maximum.reduceat(py, s) - np.minimum.reduceat(py, s))
    return float(hp.sum()) * 1e-6


def _outline_terms(prob: Problem, lay: Layout):
    W, H = prob.outline
    viol = 0.0
    bbox = 0.0
    legal = True
    for d in (1, 2):
        sel = lay.die == d
        if not sel.any():
            continue
        bx = float((lay.x[sel] + lay.w[sel]).max())
        by = float((lay.y[sel] + lay.h[sel]).max())
        viol += max(0.0, bx / W - 1.0) + max(0.0, by / H - 1.0)
        bbox += bx * by
        legal = legal and bx <= W * (1 + 1e-9) and by <= H * (1 + 1e-9)
    packing = max(0.0, 1.0 - float((lay.w * lay.h).sum()) / bbox) if bbox > 0 else 0.0
    return viol, packing, legal


def estimate_maps(prob: Problem, lay: Layout, lev, extra_tsv_rects=None):
    """Power density maps, TSV density and estimated rise on the estimation grid."""
    ps = np.array([VOLTAGE_LEVELS[k].power_scale for k in lev])
    pw = prob.power * ps
    rects = lay.rects
    maps = []
    for d in (1, 2):
        sel = lay.die == d
        maps.append(rasterize_power_arrays(rects[sel], pw[sel], prob.outline, prob.est_dims))
    s = 0.5 * prob.site_pitch
    tr = np.concatenate([lay.tsv_xy - s, lay.tsv_xy + s], axis=1) if len(lay.tsv_xy) else np.zeros((0, 4))
    if extra_tsv_rects is not None and len(extra_tsv_rects):
        tr = np.concatenate([tr, np.asarray(extra_tsv_rects, dtype=float)])
    dens = rasterize_coverage_arrays(tr, prob.outline, prob.est_dims)
    area = prob.est_pitch[0] * prob.est_pitch[1]
    rise = blur_rise(maps[0] * area, maps[1] * area, dens, prob.masks)
    return maps, dens, rise, float(pw.sum())


def evaluate_layout(prob: Problem, lay: Layout, lev, mode: str, norms: dict, clock: float,
                    n_volumes: int = 0) -> CostBreakdown:
    cfg = prob.cfg
    weights = mode_weights(cfg, mode)
    viol, packing, legal = _outline_terms(prob, lay)
    maps, _, rise, power = estimate_maps(prob, lay, lev)
    r = [pearson(maps[i], rise[i]).r for i in (0, 1)]
    s = [spatial_entropy(maps[i], cfg.entropy_singleton, cfg.entropy_ratio).s for i in (0, 1)]
    defined = [abs(v) for v in r if v is not None]
    cd = critical_delay_of(prob, lay, lev)
    terms = {
        "outline": viol,
        "packing": packing,
        "wirelength": _hpwl(prob, lay),
        "delay": cd,
        "temp": float(rise.max()),
        "power": power,
        "corr": float(np.mean(defined)) if defined else 0.0,
        "entropy": 0.5 * (s[0] + s[1]),
    }
    classical = sum(weights[k] * terms[k] / norms[k] for k in TERMS if k not in LEAKAGE_TERMS)
    total = classical + sum(weights[k] * terms[k] / norms[k] for k in LEAKAGE_TERMS)
    return CostBreakdown(terms, weights, dict(norms), float(total), float(classical), r[0], r[1],
                         s[0], s[1], legal, n_volumes, cd)


def layout_of_floorplan(prob: Problem, fp: Floorplan):
    pos = {b.id: b for b in fp.blocks}
    bl = [pos[i] for i in prob.ids]
    lay = Layout(np.array([b.pos[0] for b in bl], dtype=float),
                 np.array([b.pos[1] for b in bl], dtype=float),
                 np.array([b.dims[0] for b in bl], dtype=float),
                 np.array([b.dims[1] for b in bl], dtype=float),
                 np.array([b.die for b in bl], dtype=np.int64), np.zeros((0, 2)))
    sig = [t for t in fp.tsvs if t.kind == TSV_SIGNAL]
    lay.tsv_xy = np.array([t.center for t in sig], dtype=float).reshape(-1, 2)
    lev = np.array([_LEVEL_INDEX[b.voltage.volts] for b in bl], dtype=np.int64)
    return lay, lev


def evaluate(fp: Floorplan, mode: str, cfg, norms: dict | None = None,
             clock: float | None = None) -> CostBreakdown:
    """Cost of a finished floorplan (its voltages and signal TSVs taken as given)."""
    prob = Problem.from_floorplan(fp, cfg)
    lay, lev = layout_of_floorplan(prob, fp)
    clock = clock if clock is not None else (cfg.clock_target or 1.0)
    return evaluate_layout(prob, lay, lev, mode, norms or unit_norms(), clock, len(fp.volumes))


def to_floorplan(prob: Problem, lay: Layout, lev, vols=()) -> Floorplan:
    blocks = []
    for i, b in enumerate(prob.blocks):
        blocks.append(b.with_(pos=(float(lay.x[i]), float(lay.y[i])),
                              dims=(float(lay.w[i]), float(lay.h[i])),
                              die=int(lay.die[i]), voltage=VOLTAGE_LEVELS[int(lev[i])]))
    tsvs = tuple(TsvIsland((float(x), float(y)), 1, TSV_SIGNAL, prob.site_pitch)
                 for x, y in lay.tsv_xy)
    return Floorplan(prob.outline, tuple(blocks), prob.nets, tsvs, tuple(vols), prob.terminals)


# ----------------------------------------------------------------------------
# annealing

class _State:
    __slots__ = ("enc", "lay", "lev", "vols", "cost")

    def __init__(self, enc, lay, lev, vols, cost):
        self.enc = enc
        self.lay = lay
        self.lev = lev
        self.vols = vols
        self.cost = cost


def _evaluate_enc(prob, enc, mode, norms, clock):
    lay = decode(enc, prob)
    lev, vols = choose_levels(prob, lay, mode, clock, enc.vseed)
    cost = evaluate_layout(prob, lay, lev, mode, norms, clock, len(vols))
    return _State(enc, lay, lev, vols, cost)


def _recost(prob, st, mode, norms, clock):
    st.cost = evaluate_layout(prob, st.lay, st.lev, mode, norms, clock, len(st.vols))
    return st


MOVES = ("swap_p", "swap_m", "swap_both", "die", "reshape", "vseed")
MOVE_P = np.array([0.25, 0.15, 0.2, 0.15, 0.2, 0.05])


def propose(enc: LayoutEncoding, prob: Problem, rng, bias: float, hot):
    """A perturbed copy of ``enc`` or None when the design-rule bias vetoes it."""
    new = enc.copy()
    kind = MOVES[int(rng.choice(len(MOVES), p=MOVE_P))]
    if kind in ("swap_p", "swap_m", "swap_both"):
        d = int(rng.integers(2))
        if len(new.seq_p[d]) < 2:
            d = 1 - d
        sp, sm = new.seq_p[d], new.seq_m[d]
        if len(sp) < 2:
            return new
        i, j = (int(v) for v in rng.choice(len(sp), size=2, replace=False))
        if kind == "swap_p":
            sp[i], sp[j] = sp[j], sp[i]
        elif kind == "swap_m":
            sm[i], sm[j] = sm[j], sm[i]
        else:
            a, b = sp[i], sp[j]
            sp[i], sp[j] = b, a
            ia, ib = sm.index(a), sm.index(b)
            sm[ia], sm[ib] = b, a
    elif kind == "die":
        b = int(rng.integers(prob.n))
        src = 0 if b in new.seq_p[0] else 1
        dst = 1 - src
        if dst == 0 and hot[b] and rng.random() < bias:
            return None
        new.seq_p[src].remove(b)
        new.seq_m[src].remove(b)
        new.seq_p[dst].insert(int(rng.integers(len(new.seq_p[dst]) + 1)), b)
        new.seq_m[dst].insert(int(rng.integers(len(new.seq_m[dst]) + 1)), b)
    elif kind == "reshape":
        soft = np.flatnonzero(prob.soft)
        if soft.size:
            b = int(soft[rng.integers(soft.size)])
            lo, hi = prob.limits[b]
            a = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            new.aspect[b] = a
            new.w[b], new.h[b] = soft_dims(prob.area[b], a, (lo, hi))
    else:
        new.vseed = int(rng.integers(1, 2**31))
    return new


@dataclass
class LeakageReport:
    mode: str
    seed: int
    correlation_r1: float | None
    correlation_r2: float | None
    correlation_mean: float | None
    entropy_s1: float
    entropy_s2: float
    est_r1: float | None
    est_r2: float | None
    peak_temp: float
    power: float
    wirelength_m: float
    critical_delay: float
    clock: float
    volumes: int
    signal_tsvs: int
    dummy_tsvs: int
    legal: bool
    moves: int
    accepted: int
    final_cost: dict
    hardening_steps: int = 0
    estimate_agrees: bool = True
    note: str = ""
    runtime_s: float = 0.0

    # short aliases used throughout the code base
    r1 = property(lambda self: self.correlation_r1)
    r2 = property(lambda self: self.correlation_r2)
    r_mean = property(lambda self: self.correlation_mean)
    s1 = property(lambda self: self.entropy_s1)
    s2 = property(lambda self: self.entropy_s2)

    def as_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


@dataclass
class AnnealResult:
    floorplan: Floorplan
    report: LeakageReport
    cost: CostBreakdown
    history: list = field(default_factory=list, repr=False)


class _Archive:
    """Legal solutions within (1 + delta) of the best classical cost, kept in
    (corr, entropy) order; plus the best-total solution."""

    def __init__(self, delta, cap=64):
        self.delta = delta
        self.cap = cap
        self.best_classical = math.inf
        self.pool = []          # (leak key, classical, seq, state)
        self.best_total = None
        self._seq = 0

    def offer(self, st: _State):
        c = st.cost
        if self.best_total is None or c.total < self.best_total.cost.total:
            self.best_total = st
        if not c.legal:
            return
        if c.classical < self.best_classical:
            self.best_classical = c.classical
            bound = (1 + self.delta) * self.best_classical
            self.pool = [e for e in self.pool if e[1] <= bound]
        if c.classical <= (1 + self.delta) * self.best_classical:
            self._seq += 1
            self.pool.append((c.leakage_key, c.classical, self._seq, st))
            self.pool.sort(key=lambda e: (e[0], e[1], e[2]))
            del self.pool[self.cap:]

    def best_classical_state(self):
        if not self.pool:
            return None
        return min(self.pool, key=lambda e: (e[1], e[2]))[3]

    def leakage_best(self):
        return self.pool[0][3] if self.pool else None


def anneal(bundle, cfg, mode: str = "pa", *, seed: int | None = None, moves: int | None = None,
           harden_final: bool = True) -> AnnealResult:
    """Anneal a benchmark in the ``pa`` or ``tsc`` setup and verify the result.

    ``moves`` overrides the budget: 0 evaluates the initial solution only,
    a positive count spreads that many moves over ``sa_temp_steps``
    temperatures, and None defers to the configured schedule.
    """
    from .harden import harden, verify_correlation   # late import: harden builds on this module

    if mode not in MODES:
        raise DomainError(f"mode must be pa or tsc, got {mode!r}")
    t_start = time.perf_counter()
    seed = cfg.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    prob = Problem.from_bundle(bundle, cfg) if not isinstance(bundle, Problem) else bundle
    enc = initial_encoding(prob, rng)
    lay0 = decode(enc, prob)
    clock = prob.clock
    if clock is None:
        clock = 1.1 * critical_delay_of(prob, lay0, np.full(prob.n, _LEVEL_INDEX[1.0]))
        clock = clock if clock > 0 else 1.0
    budget = cfg.sa_max_moves if moves is None else int(moves)
    norms = unit_norms()
    cur = _evaluate_enc(prob, enc, mode, norms, clock)
    history = []
    n_moves = 0
    n_acc = 0
    hot = prob.power / prob.area >= np.median(prob.power / prob.area)

    if budget != 0:
        # random walk: term scales for normalization and the uphill delta for T0
        walk = [cur]
        n_walk = max(10, min(2 * prob.n, 200))
        st = cur
        for _ in range(n_walk):
            e = propose(st.enc, prob, rng, 0.0, hot)
            st = _evaluate_enc(prob, e, mode, norms, clock)
            walk.append(st)
        for k in TERMS:
            m = float(np.mean([w.cost.terms[k] for w in walk]))
            norms[k] = m if m > 1e-12 else 1.0
        norms["outline"] = 1.0
        costs = [_recost(prob, w, mode, norms, clock).cost.total for w in walk]
        ups = [b - a for a, b in zip(costs, costs[1:]) if b > a]
        t0 = cfg.sa_t0 if cfg.sa_t0 > 0 else (float(np.mean(ups)) / math.log(2) if ups else 1.0)
        cur = _recost(prob, cur, mode, norms, clock)
    else:
        t0 = cfg.sa_t0 or 1.0

    archive = _Archive(cfg.delta)
    archive.offer(cur)
    if budget != 0:
        if budget > 0:
            steps = max(1, cfg.sa_temp_steps)
            per_temp = [budget // steps + (1 if s < budget % steps else 0) for s in range(steps)]
        else:
            per_temp = None
        T = t0
        step = 0
        while True:
            if per_temp is not None:
                if step >= len(per_temp):
                    break
                m_here = per_temp[step]
            else:
                m_here = cfg.sa_moves_per_temp * prob.n
            acc_here = 0
            for _ in range(m_here):
                n_moves += 1
                e = propose(cur.enc, prob, rng, cfg.design_rule_bias, hot)
                if e is None:
                    continue
                cand = _evaluate_enc(prob, e, mode, norms, clock)
                dc = cand.cost.total - cur.cost.total
                if dc <= 0 or rng.random() < math.exp(-dc / T):
                    cur = cand
                    acc_here += 1
                    archive.offer(cur)
            n_acc += acc_here
            history.append((step, T, cur.cost.total, acc_here / max(m_here, 1)))
            step += 1
            T *= cfg.sa_cooling
            if per_temp is None and acc_here < cfg.sa_stop_accept * m_here:
                break

    note = ""
    if mode == "tsc":
        pick = archive.leakage_best()
    else:
        pick = archive.best_classical_state()
    if pick is None:
        pick = archive.best_total
        note = "no legal solution visited; returning best-cost layout"
        log.warning(note)

    fp = to_floorplan(prob, pick.lay, pick.lev, pick.vols)
    steps_h = 0
    if mode == "tsc" and harden_final:
        fp, trace = harden(fp, cfg, max_dummy=int(cfg.harden_tsv_budget * fp.signal_tsv_count()))
        steps_h = len(trace.steps)
    ver = verify_correlation(fp, cfg)
    est_lay, est_lev = layout_of_floorplan(prob, fp)
    dummy_rects = [t.rect for t in fp.tsvs if t.kind != TSV_SIGNAL]
    maps, _, rise, _ = estimate_maps(prob, est_lay, est_lev, dummy_rects)
    est_r = [pearson(maps[i], rise[i]).r for i in (0, 1)]
    agrees = all(
        (a is None) == (b is None) and (a is None or (np.sign(a) == np.sign(b) and abs(a - b) <= 0.15))
        for a, b in zip(ver["r"], est_r))
    if not agrees:
        log.warning("estimate and detailed correlations disagree: %s vs %s", est_r, ver["r"])
    defined = [v for v in ver["r"] if v is not None]
    c = pick.cost
    report = LeakageReport(
        mode=mode, seed=seed, correlation_r1=ver["r"][0], correlation_r2=ver["r"][1],
        correlation_mean=float(np.mean(defined)) if defined else None,
        entropy_s1=ver["s"][0], entropy_s2=ver["s"][1], est_r1=est_r[0], est_r2=est_r[1],
        peak_temp=ver["peak"], power=float(sum(b.effective_power for b in fp.blocks)),
        wirelength_m=c.terms["wirelength"], critical_delay=c.critical_delay, clock=float(clock),
        volumes=len(fp.volumes), signal_tsvs=fp.signal_tsv_count(), dummy_tsvs=fp.dummy_tsv_count(),
        legal=bool(c.legal), moves=n_moves, accepted=n_acc, final_cost=dict(c.terms),
        hardening_steps=steps_h, estimate_agrees=bool(agrees), note=note,
        runtime_s=time.perf_counter() - t_start,
    )
    return AnnealResult(fp, report, c, history)
