"""Timing estimation (star Elmore nets, area-based module delays, longest-path
slacks) and construction/selection of multi-die voltage volumes."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import V10, V12, VOLTAGE_LEVELS, DomainError, Floorplan, VoltageVolume, level

OHM_FF_NS = 1e-6   # 1 ohm * 1 fF = 1e-15 s


class UnplacedPinError(RuntimeError):
    """A net pin that is neither a placed block nor a terminal."""


def natural_key(s: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s))


@dataclass(frozen=True)
class TimingTech:
    r_w: float = 0.1
    c_w: float = 0.2
    r_drv: float = 100.0
    c_sink: float = 5.0
    r_tsv: float = 0.5
    c_tsv: float = 20.0
    k_d: float = 2.5e-4

    @classmethod
    def from_config(cls, cfg) -> "TimingTech":
        return cls(cfg.r_w, cfg.c_w, cfg.r_drv, cfg.c_sink, cfg.r_tsv, cfg.c_tsv, cfg.k_d)


def module_delay(block, tech: TimingTech, nominal: bool = True) -> float:
    """Intrinsic delay surrogate k_d * sqrt(area), scaled by the supply level."""
    d = tech.k_d * math.sqrt(block.area)
    return d if nominal else d * block.voltage.delay_scale


def pin_table(fp: Floorplan) -> dict:
    """pin id -> (x, y, die); blocks at their centre, terminals at their position."""
    pins = {t.id: (t.pos[0], t.pos[1], t.die) for t in fp.terminals}
    for b in fp.blocks:
        cx, cy = b.center
        pins[b.id] = (cx, cy, b.die)
    return pins


def elmore_delay(net, fp: Floorplan, tech: TimingTech = TimingTech(), pins=None) -> float:
    """Star-topology Elmore delay (ns) of a net: the worst sink."""
    pins = pin_table(fp) if pins is None else pins
    try:
        dx, dy, dd = pins[net.driver]
        sinks = [pins[s] for s in net.sinks]
    except KeyError as e:
        raise UnplacedPinError(f"net {net.id}: pin {e.args[0]} is not placed") from None
    lens = [abs(sx - dx) + abs(sy - dy) for sx, sy, _ in sinks]
    c_total = sum(tech.c_w * L + tech.c_sink for L in lens)
    worst = 0.0
    for L, (_, _, sd) in zip(lens, sinks):
        d = tech.r_drv * c_total + tech.r_w * L * (tech.c_w * L / 2 + tech.c_sink)
        if sd != dd:
            d += tech.r_tsv * (tech.c_tsv / 2 + tech.c_sink)
        worst = max(worst, d)
    return worst * OHM_FF_NS


class TimingStructure:
    """Connectivity of the timing graph, fixed for a netlist.

    Nodes are the modules in natural id order followed by the terminals. Each
    net contributes one driver->sink edge per distinct sink. Cycles are broken
    by a depth-first search that visits nodes and successors in ascending
    order and drops every edge that closes onto the active path.
    """

    def __init__(self, module_ids, terminal_ids, nets):
        self.module_ids = tuple(sorted(module_ids, key=natural_key))
        self.terminal_ids = tuple(sorted(terminal_ids, key=natural_key))
        self.node_ids = self.module_ids + self.terminal_ids
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        src, dst, net_of = [], [], []
        for k, net in enumerate(nets):
            pins = list(dict.fromkeys(net.pins))
            if len(pins) < 2:
                continue
            try:
                d = self.index[pins[0]]
                ss = [self.index[p] for p in pins[1:]]
            except KeyError as e:
                raise UnplacedPinError(f"net {net.id}: unknown pin {e.args[0]}") from None
            for s in ss:
                src.append(d)
                dst.append(s)
                net_of.append(k)
        self.n = len(self.node_ids)
        self.n_modules = len(self.module_ids)
        self.n_nets = len(nets)
        self.src = np.array(src, dtype=np.int64)
        self.dst = np.array(dst, dtype=np.int64)
        self.net_of = np.array(net_of, dtype=np.int64)
        self.kept = self._break_cycles()
        self._build_csr()

    def _break_cycles(self):
        n = self.n
        succ = [[] for _ in range(n)]
        for e in np.lexsort((self.dst, self.src)):
            succ[self.src[e]].append(int(e))
        kept = np.ones(len(self.src), dtype=bool)
        state = np.zeros(n, dtype=np.int8)   # 0 new, 1 on path, 2 done
        post = []
        for root in range(n):
            if state[root]:
                continue
            state[root] = 1
            stack = [(root, 0)]
            while stack:
                v, i = stack[-1]
                if i < len(succ[v]):
                    stack[-1] = (v, i + 1)
                    e = succ[v][i]
                    w = self.dst[e]
                    if state[w] == 1:
                        kept[e] = False
                    elif state[w] == 0:
                        state[w] = 1
                        stack.append((w, 0))
                else:
                    state[v] = 2
                    post.append(v)
                    stack.pop()
        self.order = np.array(post[::-1], dtype=np.int64)
        return kept

    def _build_csr(self):
        ke = np.flatnonzero(self.kept)
        by_dst = ke[np.argsort(self.dst[ke], kind="stable")]
        by_src = ke[np.argsort(self.src[ke], kind="stable")]
        self.in_perm = by_dst
        self.out_perm = by_src
        self.in_ptr = np.concatenate(([0], np.cumsum(np.bincount(self.dst[ke], minlength=self.n))))
        self.out_ptr = np.concatenate(([0], np.cumsum(np.bincount(self.src[ke], minlength=self.n))))
        self.in_src = np.ascontiguousarray(self.src[by_dst])
        self.out_dst = np.ascontiguousarray(self.dst[by_src])

    @property
    def dropped(self) -> int:
        return int((~self.kept).sum())

    def positions(self, fp: Floorplan):
        xy = np.zeros((self.n, 2))
        die = np.ones(self.n, dtype=np.int64)
        pins = pin_table(fp)
        for i, nid in enumerate(self.node_ids):
            try:
                x, y, d = pins[nid]
            except KeyError:
                raise UnplacedPinError(f"pin {nid} is not placed") from None
            xy[i] = (x, y)
            die[i] = d
        return xy, die

    def edge_delays(self, xy, die, tech: TimingTech):
        """Per-edge star Elmore delay (ns) and per-edge Manhattan length (um)."""
        L = np.abs(xy[self.src] - xy[self.dst]).sum(axis=1)
        cross = die[self.src] != die[self.dst]
        c_tot = np.bincount(self.net_of, weights=tech.c_w * L + tech.c_sink, minlength=self.n_nets)
        d = (tech.r_drv * c_tot[self.net_of] + tech.r_w * L * (tech.c_w * L / 2 + tech.c_sink)
             + cross * (tech.r_tsv * (tech.c_tsv / 2 + tech.c_sink)))
        return d * OHM_FF_NS, L

    def propagate(self, edge_delay, node_delay, clock):
        arr, req = kernels.longest_path(
            self.order, self.in_ptr, self.in_src, np.ascontiguousarray(edge_delay[self.in_perm]),
            self.out_ptr, self.out_dst, np.ascontiguousarray(edge_delay[self.out_perm]),
            np.ascontiguousarray(node_delay, dtype=float), float(clock))
        return arr, req


@dataclass(frozen=True, eq=False)
class TimingGraph:
    node_ids: tuple
    n_modules: int
    node_delay: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_delay: np.ndarray
    edge_kept: np.ndarray
    arrival: np.ndarray
    required: np.ndarray
    clock: float

    @property
    def slack(self) -> np.ndarray:
        return self.required - self.arrival

    @property
    def critical_delay(self) -> float:
        return float(self.arrival.max()) if self.arrival.size else 0.0

    def module_slacks(self) -> dict:
        s = self.slack
        return {self.node_ids[i]: float(s[i]) for i in range(self.n_modules)}

    def module_delays(self) -> dict:
        return {self.node_ids[i]: float(self.node_delay[i]) for i in range(self.n_modules)}


def structure_for(fp: Floorplan) -> TimingStructure:
    return TimingStructure([b.id for b in fp.blocks], [t.id for t in fp.terminals], fp.nets)


def node_delays(fp: Floorplan, st: TimingStructure, tech: TimingTech, nominal=True):
    nd = np.zeros(st.n)
    for b in fp.blocks:
        nd[st.index[b.id]] = module_delay(b, tech, nominal)
    return nd


def critical_delay(fp: Floorplan, tech: TimingTech = TimingTech(), nominal=True, st=None) -> float:
    st = structure_for(fp) if st is None else st
    xy, die = st.positions(fp)
    ed, _ = st.edge_delays(xy, die, tech)
    arr, _ = st.propagate(ed, node_delays(fp, st, tech, nominal), 1.0)
    return float(arr.max()) if arr.size else 0.0


def compute_slacks(fp: Floorplan, clock_target: float, tech: TimingTech = TimingTech(),
                   *, nominal: bool = True, st: TimingStructure | None = None) -> TimingGraph:
    """Arrival, required time and slack per node; module delays at 1.0 V unless ``nominal=False``."""
    if not clock_target > 0:
        raise DomainError(f"clock target must be positive, got {clock_target!r}")
    st = structure_for(fp) if st is None else st
    xy, die = st.positions(fp)
    ed, _ = st.edge_delays(xy, die, tech)
    nd = node_delays(fp, st, tech, nominal)
    arr, req = st.propagate(ed, nd, clock_target)
    return TimingGraph(st.node_ids, st.n_modules, nd, st.src, st.dst, ed, st.kept, arr, req,
                       float(clock_target))


# feasible voltage sets are 3-bit masks over VOLTAGE_LEVELS (bit 0 = 0.8 V)
ALL_LEVELS = (1 << len(VOLTAGE_LEVELS)) - 1


# absolute slack tolerance (ns) absorbing round-off in arrival/required times
SLACK_TOL = 1e-9


def feasible_mask(delay: float, slack: float) -> int:
    m = 0
    for k, lv in enumerate(VOLTAGE_LEVELS):
        if (lv.delay_scale - 1.0) * delay <= slack + SLACK_TOL:
            m |= 1 << k
    return m


def mask_volts(mask: int) -> frozenset:
    return frozenset(lv.volts for k, lv in enumerate(VOLTAGE_LEVELS) if mask >> k & 1)


def feasible_voltages(delay: float, slack: float) -> frozenset:
    """Supply levels whose extra delay fits into the module's 1.0 V slack."""
    return mask_volts(feasible_mask(delay, slack))


def adjacency(blocks, gap: float, overlap_min: float) -> list[int]:
    """Neighbour bitmask per block: same-die blocks facing each other across at
    most ``gap``, or cross-die blocks whose footprints overlap by at least
    ``overlap_min`` of the smaller one."""
    if not blocks:
        return []
    r = np.array([b.rect for b in blocks], dtype=float)
    return adjacency_arrays(r, np.array([b.die for b in blocks]), gap, overlap_min)


def adjacency_matrix(r, die, gap, overlap_min) -> np.ndarray:
    """Boolean (n, n) neighbour matrix for rectangles ``r`` on dies ``die``."""
    area = (r[:, 2] - r[:, 0]) * (r[:, 3] - r[:, 1])
    sep_x = np.maximum(r[:, None, 0] - r[None, :, 2], r[None, :, 0] - r[:, None, 2])
    sep_y = np.maximum(r[:, None, 1] - r[None, :, 3], r[None, :, 1] - r[:, None, 3])
    same = die[:, None] == die[None, :]
    facing = ((sep_x <= gap) & (sep_y < 0)) | ((sep_y <= gap) & (sep_x < 0))
    ov = np.clip(-sep_x, 0, None) * np.clip(-sep_y, 0, None)
    stacked = ~same & (ov >= overlap_min * np.minimum(area[:, None], area[None, :]))
    adj = (same & facing) | stacked
    np.fill_diagonal(adj, False)
    return adj


def bool_words(b: np.ndarray) -> np.ndarray:
    """Pack boolean rows into little-endian uint64 words, bit i = column i."""
    b = np.atleast_2d(np.asarray(b, dtype=bool))
    W = max(1, (b.shape[1] + 63) // 64)
    packed = np.packbits(b, axis=1, bitorder="little")
    out = np.zeros((b.shape[0], 8 * W), dtype=np.uint8)
    out[:, :packed.shape[1]] = packed
    return out.view("<u8").astype(np.uint64)


def words_bool(words: np.ndarray, n: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :n].astype(bool)


def int_words(masks, n: int) -> np.ndarray:
    """uint64 word rows from Python-int bitmasks."""
    W = max(1, (n + 63) // 64)
    raw = b"".join(int(m).to_bytes(8 * W, "little") for m in masks)
    return np.frombuffer(raw, dtype="<u8").reshape(len(masks), W).astype(np.uint64)


def adjacency_arrays(r, die, gap, overlap_min) -> list[int]:
    adj = adjacency_matrix(r, die, gap, overlap_min)
    # pack each row into a Python int via its byte representation
    packed = np.packbits(adj, axis=1, bitorder="little")
    return [int.from_bytes(packed[i].tobytes(), "little") for i in range(len(r))]


def _bits(m: int):
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def grow_tree(root: int, adj, feas, cap: int):
    """Breadth-first enumeration of connected module sets containing ``root``.

    Each node extends its parent by one adjacent module (ascending index) and
    keeps the intersection of feasible levels; empty intersections are not
    expanded and member sets already seen are skipped. Returns parallel lists
    of member masks, feasible masks and parent positions, at most ``cap`` long.
    """
    if not feas[root]:
        return [], [], []
    masks = [1 << root]
    fmask = [feas[root]]
    parent = [-1]
    front = [adj[root]]
    seen = {masks[0]}
    head = 0
    while head < len(masks) and len(masks) < cap:
        m, f, fr = masks[head], fmask[head], front[head]
        for j in _bits(fr & ~m):
            nf = f & feas[j]
            if not nf:
                continue
            nm = m | (1 << j)
            if nm in seen:
                continue
            seen.add(nm)
            masks.append(nm)
            fmask.append(nf)
            parent.append(head)
            front.append(fr | adj[j])
            if len(masks) >= cap:
                break
        head += 1
    return masks, fmask, parent


@dataclass(frozen=True)
class VolumeTree:
    root: str
    members: tuple           # per node: tuple of module ids
    feasible: tuple          # per node: frozenset of volts
    parents: tuple           # per node: parent node index, -1 for the root
    masks: tuple = field(default=(), repr=False)
    fmasks: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.members)


@dataclass
class VolumeContext:
    """Per-floorplan inputs shared by tree construction and selection."""

    ids: tuple
    adj: list
    feas: list
    power: np.ndarray
    area: np.ndarray

    @classmethod
    def build(cls, fp: Floorplan, graph: TimingGraph, cfg) -> "VolumeContext":
        order = sorted(fp.blocks, key=lambda b: natural_key(b.id))
        slack = graph.module_slacks()
        delay = graph.module_delays()
        feas = [feasible_mask(delay[b.id], slack[b.id]) for b in order]
        return cls(tuple(b.id for b in order),
                   adjacency(order, cfg.adjacency_gap, cfg.overlap_min), feas,
                   np.array([b.nominal_power for b in order]),
                   np.array([b.area for b in order]))


def build_volume_tree(root: str, fp: Floorplan, graph: TimingGraph, cfg,
                      ctx: VolumeContext | None = None) -> VolumeTree:
    ctx = VolumeContext.build(fp, graph, cfg) if ctx is None else ctx
    r = ctx.ids.index(root)
    masks, fm, par = grow_tree(r, ctx.adj, ctx.feas, cfg.tree_cap)
    if not masks:
        # an infeasible module stays a lone node with an empty feasible set
        masks, fm, par = [1 << r], [0], [-1]
    members = tuple(tuple(ctx.ids[i] for i in _bits(m)) for m in masks)
    return VolumeTree(root, members, tuple(mask_volts(f) for f in fm), tuple(par),
                      tuple(masks), tuple(fm))


def select_volumes(trees, ctx: VolumeContext, cfg, objective: str = "pa",
                   jitter=None) -> list[VoltageVolume]:
    """Greedy partition of the modules into voltage volumes.

    Candidates are the distinct member sets over all trees, each scored once at
    its best feasible level. ``pa`` scores the amortized (power, count)
    objective, ``tsc`` the within-volume spread of power density, the distance
    of the volume's density from the chip mean and the count proxy. A single
    pass over the candidates in (score, member ids) order keeps every
    candidate disjoint from those already taken. Modules without any feasible
    level become forced 1.2 V singletons. ``jitter`` (one value per module)
    scales each score by one plus the members' mean jitter.
    """
    cand = {}
    for t in trees:
        for m, f in zip(t.masks, t.fmasks):
            if f and m not in cand:
                cand[m] = f
    return select_candidates(cand, ctx, cfg, objective, jitter)


def member_matrix(masks, n: int) -> np.ndarray:
    """Boolean (len(masks), n) membership matrix from Python-int bitmasks."""
    if not len(masks):
        return np.zeros((0, n), dtype=bool)
    return words_bool(int_words(masks, n), n)


def volume_candidates(adj_words: np.ndarray, feas, cap: int):
    """Distinct member sets over the trees of every root, as (words, feasible masks)."""
    feas = np.asarray(feas, dtype=np.int64)
    masks, fm, _, _ = kernels.grow_trees(np.ascontiguousarray(adj_words, dtype=np.uint64),
                                         feas, int(cap))
    if len(masks) == 0:
        return masks, fm
    # the feasible mask is fixed by the member set, so any duplicate will do
    key = np.ascontiguousarray(masks).view(np.dtype((np.void, 8 * masks.shape[1]))).ravel()
    _, first = np.unique(key, return_index=True)
    first.sort()
    return masks[first], fm[first]


_PS = np.array([lv.power_scale for lv in VOLTAGE_LEVELS])


def score_candidates(M, fmasks, ctx: VolumeContext, cfg, objective="pa", jitter=None):
    """Per-candidate (score, level index) arrays for the greedy cover.

    ``M`` is the boolean (candidates, modules) membership matrix.
    """
    n = len(ctx.ids)
    M = np.asarray(M, dtype=float)
    f = np.array(fmasks, dtype=np.int64)
    size = M.sum(axis=1)
    power = M @ ctx.power
    feas = np.stack([(f >> k) & 1 for k in range(len(VOLTAGE_LEVELS))], axis=1).astype(bool)
    if objective == "pa":
        p_mean = float(ctx.power.mean()) if n else 1.0
        p_mean = p_mean if p_mean > 0 else 1.0
        lev = np.argmax(feas, axis=1)
        score = (cfg.vs_alpha * power * _PS[lev] / p_mean + cfg.vs_beta) / size
    else:
        mu = float(ctx.power.sum() / ctx.area.sum()) if n else 1.0
        mu = mu if mu > 0 else 1.0
        dens = ctx.power / ctx.area - mu
        m1 = (M @ dens) / size
        sd = np.sqrt(np.maximum((M @ (dens * dens)) / size - m1 * m1, 0.0)) / mu
        pmean = power / (M @ ctx.area)
        per = (cfg.vs_alpha * sd[:, None] * _PS[None, :]
               + cfg.vs_beta * np.abs(pmean[:, None] * _PS[None, :] - mu) / mu
               + (cfg.vs_gamma / size)[:, None])
        per = np.where(feas, per, np.inf)
        lev = np.argmin(per, axis=1)
        score = per[np.arange(len(lev)), lev]
    if jitter is not None:
        score = score * (1.0 + (M @ np.asarray(jitter, dtype=float)) / size)
    return score, lev


def select_candidates(cand: dict, ctx: VolumeContext, cfg, objective="pa", jitter=None):
    """Greedy cover over ``{member mask: feasible mask}`` candidates (see ``select_volumes``)."""
    n = len(ctx.ids)
    masks = [m for m, f in cand.items() if f]
    words = int_words(masks, n) if masks else np.zeros((0, max(1, (n + 63) // 64)), np.uint64)
    return select_words(words, np.array([cand[m] for m in masks], dtype=np.int64),
                        ctx, cfg, objective, jitter)


def _adjacency_bool(adj, n: int) -> np.ndarray:
    if isinstance(adj, np.ndarray):
        return words_bool(adj, n)
    return member_matrix(list(adj), n)


def _components(A: np.ndarray, alive: np.ndarray) -> list[list[int]]:
    """Connected components of the graph ``A`` restricted to ``alive`` nodes."""
    seen = ~alive.copy()
    comps = []
    for r in range(len(alive)):
        if seen[r]:
            continue
        seen[r] = True
        comp, stack = [r], [r]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(A[u] & ~seen):
                seen[v] = True
                comp.append(int(v))
                stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def _exact_pa(comp, A, ctx: VolumeContext, cfg, jitter):
    """Optimal pa partition of one small component by dynamic programming over subsets.

    The pa objective is additive over volumes (power at the lowest common
    level plus the count weight), so the best partition of a member set is
    the best first volume containing its lowest member plus the best
    partition of the rest. Returns [(member indices, level index)].
    """
    k = len(comp)
    full = (1 << k) - 1
    local = [[j for j in range(k) if A[comp[i], comp[j]]] for i in range(k)]
    nbr = [sum(1 << j for j in local[i]) for i in range(k)]
    p_mean = float(ctx.power.mean()) if len(ctx.power) else 1.0
    p_mean = p_mean if p_mean > 0 else 1.0
    cost = [math.inf] * (full + 1)
    lev = [0] * (full + 1)
    for T in range(1, full + 1):
        mem = [i for i in range(k) if T >> i & 1]
        f = ALL_LEVELS
        for i in mem:
            f &= int(ctx.feas[comp[i]])
        if not f:
            continue
        reach = 1 << mem[0]
        grow = reach
        while grow:
            nxt = 0
            for i in mem:
                if grow >> i & 1:
                    nxt |= nbr[i]
            grow = nxt & T & ~reach
            reach |= grow
        if reach != T:
            continue
        L = (f & -f).bit_length() - 1
        pw = sum(ctx.power[comp[i]] for i in mem)
        c = cfg.vs_alpha * pw * _PS[L] / p_mean + cfg.vs_beta
        if jitter is not None:
            c *= 1.0 + sum(jitter[comp[i]] for i in mem) / len(mem)
        cost[T], lev[T] = c, L
    best = [0.0] + [math.inf] * full
    pick = [0] * (full + 1)
    for S in range(1, full + 1):
        low = S & -S
        rest = S ^ low
        sub = rest
        while True:
            T = sub | low
            v = cost[T] + best[S ^ T]
            if v < best[S]:
                best[S], pick[S] = v, T
            if sub == 0:
                break
            sub = (sub - 1) & rest
    out = []
    S = full
    while S:
        T = pick[S]
        out.append(([comp[i] for i in range(k) if T >> i & 1], lev[T]))
        S ^= T
    return out


def select_words(words, fmasks, ctx: VolumeContext, cfg, objective="pa", jitter=None):
    """Greedy cover over candidates given as uint64 member words.

    Under ``pa`` every connected component of feasible modules with at most
    ``cfg.exact_volume_limit`` members is partitioned optimally instead, and
    the greedy pass only sees the remaining modules.
    """
    if objective not in ("pa", "tsc"):
        raise DomainError(f"unknown volume objective {objective!r}")
    n = len(ctx.ids)
    vols = []
    covered = np.zeros(n, dtype=bool)
    limit = getattr(cfg, "exact_volume_limit", 0)
    if objective == "pa" and limit > 0 and n:
        A = _adjacency_bool(ctx.adj, n)
        alive = np.array([f != 0 for f in ctx.feas])
        for comp in _components(A, alive):
            if len(comp) > limit:
                continue
            for idx, L in _exact_pa(comp, A, ctx, cfg, jitter):
                lv = VOLTAGE_LEVELS[L]
                f = ALL_LEVELS
                for i in idx:
                    f &= int(ctx.feas[i])
                covered[idx] = True
                vols.append(VoltageVolume(tuple(ctx.ids[i] for i in idx), mask_volts(f), lv,
                                          float(ctx.power[idx].sum()) * lv.power_scale))
        if covered.any() and len(words):
            rows = words_bool(words, n)
            free = ~(rows & covered).any(axis=1)
            words, fmasks = words[free], np.asarray(fmasks)[free]
    if len(words):
        M = words_bool(words, n)
        score, lev = score_candidates(M, fmasks, ctx, cfg, objective, jitter)
        order = np.argsort(score, kind="stable")
        # equal scores fall back to the lexicographic order of member indices
        sv = score[order]
        tie = np.flatnonzero(sv[1:] == sv[:-1])
        if tie.size:
            order = order.tolist()
            i = 0
            while i < len(order):
                j = i + 1
                while j < len(order) and score[order[j]] == score[order[i]]:
                    j += 1
                if j - i > 1:
                    order[i:j] = sorted(order[i:j], key=lambda c: np.flatnonzero(M[c]).tolist())
                i = j
            order = np.array(order, dtype=np.int64)
        keep = kernels.greedy_cover(np.ascontiguousarray(words, dtype=np.uint64),
                                    order.astype(np.int64))
        for c in np.flatnonzero(keep):
            idx = np.flatnonzero(M[c])
            covered[idx] = True
            lv = VOLTAGE_LEVELS[int(lev[c])]
            vols.append(VoltageVolume(tuple(ctx.ids[i] for i in idx), mask_volts(int(fmasks[c])),
                                      lv, float(ctx.power[idx].sum()) * lv.power_scale))
    for i in np.flatnonzero(~covered):
        vols.append(VoltageVolume((ctx.ids[i],), frozenset(), V12,
                                  float(ctx.power[i]) * V12.power_scale, forced=True))
    vols.sort(key=lambda v: natural_key(v.members[0]))
    return vols


def assign_volumes(fp: Floorplan, graph: TimingGraph, cfg, objective: str = "pa", jitter=None):
    """Build all trees, select volumes and return the floorplan with voltages applied."""
    ctx = VolumeContext.build(fp, graph, cfg)
    trees = [build_volume_tree(r, fp, graph, cfg, ctx) for r in ctx.ids]
    vols = select_volumes(trees, ctx, cfg, objective, jitter)
    return apply_volumes(fp, vols), vols


def apply_volumes(fp: Floorplan, vols) -> Floorplan:
    volt = {m: v.voltage for v in vols for m in v.members}
    blocks = tuple(b.with_(voltage=volt.get(b.id, V10)) for b in fp.blocks)
    return fp.replace(blocks=blocks, volumes=tuple(vols))


def all_nominal(fp: Floorplan) -> Floorplan:
    return fp.replace(blocks=tuple(b.with_(voltage=level(1.0)) for b in fp.blocks), volumes=())
