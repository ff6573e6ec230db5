"""GSRC benchmark parsing, synthetic benchmark generation and artifact writers."""
from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    BlockModule,
    Floorplan,
    Grid2D,
    Net,
    Terminal,
    TsvIsland,
    level,
)


class GsrcParseError(ValueError):
    def __init__(self, msg, line=None, source=""):
        self.line = line
        where = f"{source}:{line}: " if line is not None else (f"{source}: " if source else "")
        super().__init__(where + msg)


class UndeclaredPinError(GsrcParseError):
    """A net pin names neither a block nor a terminal."""


@dataclass(frozen=True)
class BenchmarkBundle:
    name: str
    blocks: tuple[BlockModule, ...]
    terminals: tuple[Terminal, ...]
    nets: tuple[Net, ...]
    scale_factor: float = 1.0
    terminal_pos_known: bool = False
    blocks_text: str = ""
    nets_text: str = ""
    pl_text: str | None = None
    power_text: str | None = None

    @property
    def powers(self) -> dict[str, float]:
        return {b.id: b.nominal_power for b in self.blocks}

    @property
    def total_power(self) -> float:
        return float(sum(b.nominal_power for b in self.blocks))

    @property
    def total_area(self) -> float:
        return float(sum(b.area for b in self.blocks))


_COUNT_RE = re.compile(r"^(\w+)\s*:\s*(\d+)\s*$")
_POINT_RE = re.compile(r"\(\s*([-+\d.eE]+)\s*,\s*([-+\d.eE]+)\s*\)")


def _content_lines(text):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(("UCSC ", "UCLA ")):
            continue
        yield no, line


def _parse_blocks(text):
    declared = {}
    soft, hard, terms = [], [], []
    for no, line in _content_lines(text):
        m = _COUNT_RE.match(line)
        if m:
            declared[m.group(1)] = int(m.group(2))
            continue
        tok = line.split()
        if len(tok) >= 2 and tok[1] == "softrectangular":
            if len(tok) != 5:
                raise GsrcParseError("soft block needs '<name> softrectangular <area> <minAR> <maxAR>'", no, "blocks")
            try:
                area, lo, hi = float(tok[2]), float(tok[3]), float(tok[4])
            except ValueError:
                raise GsrcParseError(f"non-numeric soft block field in {line!r}", no, "blocks") from None
            if area <= 0 or lo <= 0 or hi < lo:
                raise GsrcParseError(f"invalid soft block geometry in {line!r}", no, "blocks")
            soft.append(BlockModule(tok[0], "soft", area, (lo, hi)))
        elif len(tok) >= 2 and tok[1] == "hardrectilinear":
            pts = [(float(a), float(b)) for a, b in _POINT_RE.findall(line)]
            if len(tok) < 3 or tok[2] != "4" or len(pts) != 4:
                raise GsrcParseError("hard block needs 'hardrectilinear 4' and four (x,y) points", no, "blocks")
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            w, h = max(xs) - min(xs), max(ys) - min(ys)
            if w <= 0 or h <= 0:
                raise GsrcParseError(f"degenerate hard block in {line!r}", no, "blocks")
            hard.append(BlockModule(tok[0], "hard", w * h, (w / h, w / h), dims=(w, h)))
        elif len(tok) == 2 and tok[1] == "terminal":
            terms.append(tok[0])
        else:
            raise GsrcParseError(f"unrecognised line {line!r}", no, "blocks")
    for key, got in (("NumSoftRectangularBlocks", len(soft)),
                     ("NumHardRectilinearBlocks", len(hard)),
                     ("NumTerminals", len(terms))):
        if key in declared and declared[key] != got:
            raise GsrcParseError(f"{key} declares {declared[key]} but file lists {got}", None, "blocks")
    names = [b.id for b in soft + hard] + terms
    if len(set(names)) != len(names):
        raise GsrcParseError("duplicate block/terminal names", None, "blocks")
    return soft + hard, terms


def _parse_nets(text, known):
    declared = {}
    nets = []
    cur = None
    want = 0
    dropped = 0
    pins_seen = 0
    for no, line in _content_lines(text):
        m = _COUNT_RE.match(line)
        if m and m.group(1) in ("NumNets", "NumPins"):
            declared[m.group(1)] = int(m.group(2))
            continue
        tok = line.split()
        if tok[0] == "NetDegree":
            if want:
                raise GsrcParseError(f"net ended with {want} pins missing", no, "nets")
            if len(tok) < 3 or tok[1] != ":":
                raise GsrcParseError("expected 'NetDegree : k'", no, "nets")
            try:
                want = int(tok[2])
            except ValueError:
                raise GsrcParseError(f"bad net degree {tok[2]!r}", no, "nets") from None
            if want < 1:
                raise GsrcParseError("net degree must be >= 1", no, "nets")
            name = tok[3] if len(tok) > 3 else f"n{len(nets) + dropped}"
            cur = (name, [])
            continue
        if cur is None or want == 0:
            raise GsrcParseError(f"pin line outside a net stanza: {line!r}", no, "nets")
        pin = tok[0]
        if pin not in known:
            raise UndeclaredPinError(f"pin {pin!r} is not a declared block or terminal", no, "nets")
        cur[1].append(pin)
        pins_seen += 1
        want -= 1
        if want == 0:
            if len(cur[1]) >= 2:
                nets.append(Net(cur[0], tuple(cur[1])))
            else:
                dropped += 1
            cur = None
    if want:
        raise GsrcParseError(f"file ended with {want} pins missing", None, "nets")
    if "NumNets" in declared and declared["NumNets"] != len(nets) + dropped:
        raise GsrcParseError(f"NumNets declares {declared['NumNets']} but file lists {len(nets) + dropped}", None, "nets")
    if "NumPins" in declared and declared["NumPins"] != pins_seen:
        raise GsrcParseError(f"NumPins declares {declared['NumPins']} but file lists {pins_seen}", None, "nets")
    return nets


def _parse_pl(text, known):
    pos = {}
    for no, line in _content_lines(text):
        tok = line.split()
        if len(tok) < 3:
            raise GsrcParseError(f"expected '<name> <x> <y>', got {line!r}", no, "pl")
        if tok[0] not in known:
            raise UndeclaredPinError(f"placement for undeclared object {tok[0]!r}", no, "pl")
        try:
            pos[tok[0]] = (float(tok[1]), float(tok[2]))
        except ValueError:
            raise GsrcParseError(f"non-numeric coordinate in {line!r}", no, "pl") from None
    return pos


def _parse_power(text, blocks):
    out = {}
    for no, line in _content_lines(text):
        tok = line.split()
        if len(tok) != 2:
            raise GsrcParseError(f"expected '<name> <watts>', got {line!r}", no, "power")
        if tok[0] not in blocks:
            raise UndeclaredPinError(f"power for undeclared block {tok[0]!r}", no, "power")
        try:
            p = float(tok[1])
        except ValueError:
            raise GsrcParseError(f"non-numeric power in {line!r}", no, "power") from None
        if p < 0:
            raise GsrcParseError("power must be >= 0", no, "power")
        out[tok[0]] = p
    missing = set(blocks) - set(out)
    if missing:
        raise GsrcParseError(f"power file misses {len(missing)} blocks, e.g. {sorted(missing)[0]!r}", None, "power")
    return out


def synthesize_powers(n: int, total_power: float, seed: int) -> np.ndarray:
    """Log-uniform powers over [0.2, 5] x the mean, rescaled to sum to ``total_power``."""
    rng = np.random.default_rng(seed)
    raw = np.exp(rng.uniform(math.log(0.2), math.log(5.0), size=n))
    return raw * (total_power / raw.sum())


def parse_gsrc(blocks_text: str, nets_text: str, power_text: str | None = None,
               pl_text: str | None = None, *, name: str = "bench",
               total_power: float = 8.0, seed: int = 0) -> BenchmarkBundle:
    if not blocks_text.strip():
        raise GsrcParseError("empty blocks text")
    if not nets_text.strip():
        raise GsrcParseError("empty nets text")
    blocks, term_names = _parse_blocks(blocks_text)
    known = {b.id for b in blocks} | set(term_names)
    nets = _parse_nets(nets_text, known)
    pos = _parse_pl(pl_text, known) if pl_text else {}
    if power_text:
        pw = _parse_power(power_text, [b.id for b in blocks])
        powers = [pw[b.id] for b in blocks]
    else:
        powers = synthesize_powers(len(blocks), total_power, seed)
    blocks = tuple(b.with_(nominal_power=float(p)) for b, p in zip(blocks, powers))
    terms = tuple(Terminal(t, pos.get(t, (0.0, 0.0))) for t in term_names)
    known_pos = bool(term_names) and all(t in pos for t in term_names)
    return BenchmarkBundle(name, blocks, terms, tuple(nets), 1.0, known_pos,
                           blocks_text, nets_text, pl_text, power_text)


def apply_scale(bundle: BenchmarkBundle, scale_factor: float) -> BenchmarkBundle:
    """Multiply every module footprint by ``scale_factor``; powers stay put."""
    if scale_factor < 1:
        raise ValueError("scale factor must be >= 1")
    if scale_factor == 1:
        return bundle
    lin = math.sqrt(scale_factor)
    blocks = []
    for b in bundle.blocks:
        if b.kind == "hard":
            w, h = b.dims
            blocks.append(b.with_(area=b.area * scale_factor, dims=(w * lin, h * lin)))
        else:
            blocks.append(b.with_(area=b.area * scale_factor))
    terms = tuple(t.__class__(t.id, (t.pos[0] * lin, t.pos[1] * lin), t.die) for t in bundle.terminals)
    return dataclasses.replace(bundle, blocks=tuple(blocks), terminals=terms,
                               scale_factor=bundle.scale_factor * scale_factor)


def read_gsrc(blocks_path, nets_path, power_path=None, pl_path=None, **kw) -> BenchmarkBundle:
    rd = lambda p: Path(p).read_text() if p else None  # noqa: E731
    kw.setdefault("name", Path(blocks_path).stem)
    return parse_gsrc(rd(blocks_path), rd(nets_path), rd(power_path), rd(pl_path), **kw)


def format_blocks(bundle: BenchmarkBundle) -> str:
    soft = [b for b in bundle.blocks if b.kind == "soft"]
    hard = [b for b in bundle.blocks if b.kind == "hard"]
    out = ["UCSC blocks 1.0", "",
           f"NumSoftRectangularBlocks : {len(soft)}",
           f"NumHardRectilinearBlocks : {len(hard)}",
           f"NumTerminals : {len(bundle.terminals)}", ""]
    for b in soft:
        out.append(f"{b.id} softrectangular {b.area!r} {b.aspect_limits[0]!r} {b.aspect_limits[1]!r}")
    for b in hard:
        w, h = b.dims
        out.append(f"{b.id} hardrectilinear 4 (0, 0) (0, {h!r}) ({w!r}, {h!r}) ({w!r}, 0)")
    out += [""] + [f"{t.id} terminal" for t in bundle.terminals]
    return "\n".join(out) + "\n"


def format_nets(bundle: BenchmarkBundle) -> str:
    npins = sum(len(n.pins) for n in bundle.nets)
    out = ["UCLA nets 1.0", "", f"NumNets : {len(bundle.nets)}", f"NumPins : {npins}"]
    for n in bundle.nets:
        out.append(f"NetDegree : {len(n.pins)} {n.id}")
        out += [f"{p} B" for p in n.pins]
    return "\n".join(out) + "\n"


def format_pl(bundle: BenchmarkBundle) -> str:
    out = ["UCLA pl 1.0", ""]
    out += [f"{t.id} {t.pos[0]!r} {t.pos[1]!r}" for t in bundle.terminals]
    return "\n".join(out) + "\n"


def format_power(bundle: BenchmarkBundle) -> str:
    return "".join(f"{b.id} {b.nominal_power!r}\n" for b in bundle.blocks)


# ----------------------------------------------------------------------------
# synthetic benchmarks

def make_synthetic(n_soft=100, n_nets=885, n_terminals=334, outline=(4000.0, 4000.0),
                   utilization=0.6, scale_factor=10.0, seed=1):
    """GSRC-format texts for a clustered random netlist of soft modules.

    Areas are written unscaled; ``apply_scale(bundle, scale_factor)`` brings
    the total module area to ``utilization`` of both dies.
    """
    rng = np.random.default_rng(seed)
    W, H = outline
    target = utilization * 2 * W * H / scale_factor
    raw = rng.lognormal(0.0, 0.6, n_soft)
    areas = np.round(raw * target / raw.sum(), 0)
    names = [f"sb{i}" for i in range(n_soft)]
    tnames = [f"p{i + 1}" for i in range(n_terminals)]
    blk = ["UCSC blocks 1.0", "# synthetic", "",
           f"NumSoftRectangularBlocks : {n_soft}", "NumHardRectilinearBlocks : 0",
           f"NumTerminals : {n_terminals}", ""]
    for nm, a in zip(names, areas):
        blk.append(f"{nm} softrectangular {int(a)} 0.333 3.0")
    blk.append("")
    blk += [f"{t} terminal" for t in tnames]

    # terminals spread evenly on the perimeter, modules get virtual positions
    per = 2 * (W + H)
    s = (np.arange(n_terminals) + 0.5) * per / n_terminals
    tpos = []
    for v in s:
        if v < W:
            tpos.append((v, 0.0))
        elif v < W + H:
            tpos.append((W, v - W))
        elif v < 2 * W + H:
            tpos.append((2 * W + H - v, H))
        else:
            tpos.append((0.0, per - v))
    tpos = np.array(tpos) / math.sqrt(scale_factor)
    vpos = rng.uniform(0, 1, size=(n_soft, 2)) * np.array([W, H])
    tvirt = tpos * math.sqrt(scale_factor)

    nets_out = []
    npins = 0
    for k in range(n_nets):
        deg = int(min(2 + rng.geometric(0.55) - 1, 6))
        src = int(rng.integers(n_soft))
        d = np.abs(vpos - vpos[src]).sum(axis=1)
        near = np.argsort(d, kind="stable")[1:9]
        mods = [src] + [int(m) for m in rng.choice(near, size=min(deg - 1, len(near)), replace=False)]
        pins = [names[m] for m in mods]
        if k < n_terminals:
            # each terminal appears in at least one net, attached to a nearby module
            t = k
            td = np.abs(vpos - tvirt[t]).sum(axis=1)
            m = int(np.argmin(td))
            pins = [tnames[t], names[m]] + [p for p in pins if p != names[m]][: max(deg - 2, 0)]
        nets_out.append(pins)
        npins += len(pins)
    nl = ["UCLA nets 1.0", "# synthetic", "", f"NumNets : {n_nets}", f"NumPins : {npins}"]
    for k, pins in enumerate(nets_out):
        nl.append(f"NetDegree : {len(pins)} n{k}")
        nl += [f"{p} B" for p in pins]
    pl = ["UCLA pl 1.0", ""] + [f"{t} {x:.3f} {y:.3f}" for t, (x, y) in zip(tnames, tpos)]
    return "\n".join(blk) + "\n", "\n".join(nl) + "\n", "\n".join(pl) + "\n"


BUNDLED = {
    # name: (scale factor, total power W)
    "n100s": (10.0, 8.0),
    "toy30": (10.0, 3.0),
}


def load_bundled(name: str = "n100s", *, total_power: float | None = None, seed: int = 0,
                 scaled: bool = True) -> BenchmarkBundle:
    """Load one of the shipped synthetic benchmarks (already scaled by default)."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled benchmark {name!r}; have {sorted(BUNDLED)}")
    factor, power = BUNDLED[name]
    base = resources.files("tsvshield") / "data"
    texts = [(base / f"{name}.{ext}").read_text() for ext in ("blocks", "nets", "pl")]
    b = parse_gsrc(texts[0], texts[1], None, texts[2], name=name,
                   total_power=power if total_power is None else total_power, seed=seed)
    return apply_scale(b, factor) if scaled else b


# ----------------------------------------------------------------------------
# writers

def _fmt(v: float) -> str:
    mant, exp = f"{v:.6e}".split("e")
    return f"{mant}e{int(exp)}"


def write_grid_csv(grid: Grid2D, path) -> None:
    """Rows are y (row 0 = bottom), columns are x; ``%.6e`` with a bare exponent."""
    lines = [",".join(_fmt(v) for v in row) for row in grid.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path, pitch=(1.0, 1.0)) -> Grid2D:
    rows = [r for r in Path(path).read_text().splitlines() if r.strip()]
    vals = np.array([[float(x) for x in r.split(",")] for r in rows])
    return Grid2D(vals, tuple(pitch))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _clean(dataclasses.asdict(obj))
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps_report(report) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report_json(report, path) -> None:
    Path(path).write_text(dumps_report(report))


def write_floorplan(fp: Floorplan, path) -> None:
    """Floorplan dump: one ``name die x y w h voltage`` line per block, plus
    dotted directives for the outline, powers, TSV islands, terminals and nets."""
    W, H = fp.outline
    out = ["# tsvshield floorplan", f".outline {W!r} {H!r}"]
    for b in fp.blocks:
        x, y = b.pos
        w, h = b.dims
        out.append(f"{b.id} {b.die} {x!r} {y!r} {w!r} {h!r} {b.voltage.volts}")
    for b in fp.blocks:
        out.append(f".power {b.id} {b.nominal_power!r}")
    for t in fp.tsvs:
        out.append(f".tsv {t.center[0]!r} {t.center[1]!r} {t.count} {t.kind} {t.pitch!r}")
    for t in fp.terminals:
        out.append(f".terminal {t.id} {t.pos[0]!r} {t.pos[1]!r}")
    for n in fp.nets:
        out.append(f".net {n.id} " + " ".join(n.pins))
    Path(path).write_text("\n".join(out) + "\n")


def parse_floorplan(text: str) -> Floorplan:
    outline = None
    blocks, tsvs, terms, nets = [], [], [], []
    powers = {}
    for no, line in _content_lines(text):
        tok = line.split()
        try:
            if tok[0] == ".outline":
                outline = (float(tok[1]), float(tok[2]))
            elif tok[0] == ".power":
                powers[tok[1]] = float(tok[2])
            elif tok[0] == ".tsv":
                pitch = float(tok[5]) if len(tok) > 5 else 20.0
                tsvs.append(TsvIsland((float(tok[1]), float(tok[2])), int(tok[3]), tok[4], pitch))
            elif tok[0] == ".terminal":
                terms.append(Terminal(tok[1], (float(tok[2]), float(tok[3]))))
            elif tok[0] == ".net":
                nets.append(Net(tok[1], tuple(tok[2:])))
            elif tok[0].startswith("."):
                raise GsrcParseError(f"unknown directive {tok[0]!r}", no, "floorplan")
            else:
                if len(tok) != 7:
                    raise GsrcParseError("block line needs 'name die x y w h voltage'", no, "floorplan")
                die = int(tok[1])
                if die not in (1, 2):
                    raise GsrcParseError(f"die must be 1 or 2, got {die}", no, "floorplan")
                x, y, w, h = (float(v) for v in tok[2:6])
                if w <= 0 or h <= 0:
                    raise GsrcParseError("block dims must be positive", no, "floorplan")
                blocks.append(BlockModule(tok[0], "soft", w * h, (w / h, w / h), (x, y), (w, h), die,
                                          0.0, level(float(tok[6]))))
        except GsrcParseError:
            raise
        except (ValueError, IndexError) as exc:
            raise GsrcParseError(f"malformed line {line!r} ({exc})", no, "floorplan") from None
    if outline is None:
        raise GsrcParseError("missing .outline directive", None, "floorplan")
    if not blocks:
        raise GsrcParseError("no blocks in floorplan dump", None, "floorplan")
    blocks = [b.with_(nominal_power=powers.get(b.id, 0.0)) for b in blocks]
    return Floorplan(outline, tuple(blocks), tuple(nets), tuple(tsvs), (), tuple(terms))


def read_floorplan(path) -> Floorplan:
    return parse_floorplan(Path(path).read_text())
