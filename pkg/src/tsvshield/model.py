"""Domain types for a two-die face-to-back 3D IC and the grid rasterizers.

Coordinates are micrometres with the origin at the lower-left corner of the
shared die outline. Die 1 is the bottom die (package side), die 2 the top die
(heatsink side). Signal and dummy TSVs pass through die 1, so TSV islands
occupy die-1 whitespace.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

DIES = (1, 2)


class DomainError(ValueError):
    """An argument outside the operation's domain (bad die id, bad dims...)."""


@dataclass(frozen=True)
class VoltageLevel:
    volts: float
    power_scale: float
    delay_scale: float


V08 = VoltageLevel(0.8, 0.817, 1.56)
V10 = VoltageLevel(1.0, 1.0, 1.0)
V12 = VoltageLevel(1.2, 1.496, 0.83)
VOLTAGE_LEVELS = (V08, V10, V12)
LEVEL_BY_VOLTS = {lv.volts: lv for lv in VOLTAGE_LEVELS}


def level(volts: float) -> VoltageLevel:
    try:
        return LEVEL_BY_VOLTS[round(float(volts), 3)]
    except KeyError:
        raise DomainError(f"unsupported supply voltage {volts!r} V") from None


@dataclass(frozen=True)
class BlockModule:
    id: str
    kind: str = "soft"
    area: float = 0.0
    aspect_limits: tuple[float, float] = (1.0, 1.0)
    pos: tuple[float, float] = (0.0, 0.0)
    dims: tuple[float, float] = (0.0, 0.0)
    die: int = 1
    nominal_power: float = 0.0
    voltage: VoltageLevel = V10

    @property
    def effective_power(self) -> float:
        return self.nominal_power * self.voltage.power_scale

    @property
    def rect(self) -> tuple[float, float, float, float]:
        x, y = self.pos
        w, h = self.dims
        return (x, y, x + w, y + h)

    @property
    def center(self) -> tuple[float, float]:
        x, y = self.pos
        w, h = self.dims
        return (x + 0.5 * w, y + 0.5 * h)

    def reshape(self, aspect: float) -> "BlockModule":
        """Soft blocks take dims with ``w/h == aspect`` (clamped to the limits)."""
        if self.kind != "soft":
            raise DomainError(f"block {self.id} is hard and cannot be reshaped")
        w, h = soft_dims(self.area, aspect, self.aspect_limits)
        return dataclasses.replace(self, dims=(w, h))

    def with_(self, **changes) -> "BlockModule":
        return dataclasses.replace(self, **changes)


def soft_dims(area: float, aspect: float, limits: tuple[float, float]) -> tuple[float, float]:
    """Width/height for a soft block, quantized to 0.1 um.

    The smaller side is rounded first and the larger side derived from the
    area, which bounds the area error by 0.05 / larger_side.
    """
    lo, hi = limits
    aspect = min(max(aspect, lo), hi)
    w = math.sqrt(area * aspect)
    h = area / w
    if w <= h:
        w = round(w, 1)
        h = round(area / w, 1)
    else:
        h = round(h, 1)
        w = round(area / h, 1)
    # rounding may push the ratio a hair outside the limits
    for _ in range(8):
        r = w / h
        if r > hi * (1 + 1e-12):
            w, h = _nudge(area, w, h, wider=False)
        elif r < lo * (1 - 1e-12):
            w, h = _nudge(area, w, h, wider=True)
        else:
            break
    return w, h


def _nudge(area, w, h, wider):
    if w <= h:
        w = round(w + (0.1 if wider else -0.1), 1)
        h = round(area / w, 1)
    else:
        h = round(h + (-0.1 if wider else 0.1), 1)
        w = round(area / h, 1)
    return w, h


@dataclass(frozen=True)
class Terminal:
    id: str
    pos: tuple[float, float] = (0.0, 0.0)
    die: int = 1


@dataclass(frozen=True)
class Net:
    id: str
    pins: tuple[str, ...]

    def __post_init__(self):
        if len(self.pins) < 2:
            raise DomainError(f"net {self.id} has fewer than two pins")

    @property
    def driver(self) -> str:
        return self.pins[0]

    @property
    def sinks(self) -> tuple[str, ...]:
        return self.pins[1:]


TSV_SIGNAL = "signal"
TSV_DUMMY = "dummy"


@dataclass(frozen=True)
class TsvIsland:
    """A square group of ``count`` TSVs; ``pitch`` is the per-TSV footprint side
    including the keep-out annulus."""

    center: tuple[float, float]
    count: int = 1
    kind: str = TSV_SIGNAL
    pitch: float = 20.0

    def __post_init__(self):
        if self.count < 1:
            raise DomainError("TSV island needs at least one TSV")
        if self.kind not in (TSV_SIGNAL, TSV_DUMMY):
            raise DomainError(f"unknown TSV kind {self.kind!r}")

    @property
    def footprint(self) -> float:
        return self.count * self.pitch * self.pitch

    @property
    def side(self) -> float:
        return math.sqrt(self.footprint)

    @property
    def rect(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        s = 0.5 * self.side
        return (cx - s, cy - s, cx + s, cy + s)


@dataclass(frozen=True)
class VoltageVolume:
    members: tuple[str, ...]
    feasible: frozenset = frozenset()
    voltage: VoltageLevel = V10
    power: float = 0.0
    forced: bool = False


@dataclass(frozen=True)
class Floorplan:
    outline: tuple[float, float]
    blocks: tuple[BlockModule, ...] = ()
    nets: tuple[Net, ...] = ()
    tsvs: tuple[TsvIsland, ...] = ()
    volumes: tuple[VoltageVolume, ...] = ()
    terminals: tuple[Terminal, ...] = ()

    def block(self, bid: str) -> BlockModule:
        for b in self.blocks:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def on_die(self, die: int) -> list[BlockModule]:
        return [b for b in self.blocks if b.die == die]

    def replace(self, **changes) -> "Floorplan":
        return dataclasses.replace(self, **changes)

    def signal_tsv_count(self) -> int:
        return sum(t.count for t in self.tsvs if t.kind == TSV_SIGNAL)

    def dummy_tsv_count(self) -> int:
        return sum(t.count for t in self.tsvs if t.kind == TSV_DUMMY)

    def is_legal(self, tol: float = 1e-6) -> bool:
        W, H = self.outline
        for b in self.blocks:
            if b.die not in DIES:
                return False
            x0, y0, x1, y1 = b.rect
            if x0 < -tol or y0 < -tol or x1 > W + tol or y1 > H + tol:
                return False
        for d in DIES:
            bl = self.on_die(d)
            for i in range(len(bl)):
                for j in range(i + 1, len(bl)):
                    if overlap_area(bl[i].rect, bl[j].rect) > tol:
                        return False
        return True


def overlap_area(a, b) -> float:
    """Intersection area of two (x0, y0, x1, y1) rectangles; symmetric in a, b."""
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


@dataclass(frozen=True, eq=False)
class Grid2D:
    """An equidistant scalar field; ``values[iy, ix]`` with (0, 0) at lower-left."""

    values: np.ndarray
    pitch: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise DomainError(f"grid needs at least 2x2 bins, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.values.shape
        return (nx, ny)

    @property
    def bin_area(self) -> float:
        return self.pitch[0] * self.pitch[1]

    def __eq__(self, other):
        if not isinstance(other, Grid2D):
            return NotImplemented
        return self.pitch == other.pitch and np.array_equal(self.values, other.values)

    __hash__ = None


def _check_dims(dims):
    nx, ny = int(dims[0]), int(dims[1])
    if nx < 2 or ny < 2:
        raise DomainError(f"grid dims must be at least (2, 2), got {dims}")
    return nx, ny


def grid_pitch(outline, dims) -> tuple[float, float]:
    nx, ny = _check_dims(dims)
    return (outline[0] / nx, outline[1] / ny)


def rasterize_power_arrays(rects, powers, outline, dims) -> np.ndarray:
    """Power density (W/um^2) from (k, 4) rectangles and per-rectangle watts."""
    nx, ny = _check_dims(dims)
    px, py = outline[0] / nx, outline[1] / ny
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    powers = np.asarray(powers, dtype=float)
    if len(rects) == 0:
        return np.zeros((ny, nx))
    area = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
    dens = np.where(area > 0, powers / np.where(area > 0, area, 1.0), 0.0)
    acc = kernels.rasterize_rects(
        np.ascontiguousarray(rects[:, 0]), np.ascontiguousarray(rects[:, 1]),
        np.ascontiguousarray(rects[:, 2]), np.ascontiguousarray(rects[:, 3]),
        dens, nx, ny, px, py,
    )
    return acc / (px * py)


def rasterize_power(fp: Floorplan, die: int, dims=(64, 64)) -> Grid2D:
    """Per-bin power density (W/um^2) of ``die`` using voltage-scaled block power."""
    if die not in DIES:
        raise DomainError(f"die must be 1 or 2, got {die!r}")
    nx, ny = _check_dims(dims)
    blocks = fp.on_die(die)
    rects = [b.rect for b in blocks]
    powers = [b.effective_power for b in blocks]
    vals = rasterize_power_arrays(rects, powers, fp.outline, (nx, ny))
    return Grid2D(vals, grid_pitch(fp.outline, (nx, ny)))


def rasterize_coverage_arrays(rects, outline, dims) -> np.ndarray:
    """Covered fraction of each bin by the union-agnostic sum of rectangles, clamped to 1."""
    nx, ny = _check_dims(dims)
    px, py = outline[0] / nx, outline[1] / ny
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    if len(rects) == 0:
        return np.zeros((ny, nx))
    acc = kernels.rasterize_rects(
        np.ascontiguousarray(rects[:, 0]), np.ascontiguousarray(rects[:, 1]),
        np.ascontiguousarray(rects[:, 2]), np.ascontiguousarray(rects[:, 3]),
        np.ones(len(rects)), nx, ny, px, py,
    )
    return np.minimum(acc / (px * py), 1.0)


def rasterize_tsv_density(fp: Floorplan, dims=(64, 64)) -> Grid2D:
    """Fraction of each bin covered by TSV footprints (keep-out included)."""
    nx, ny = _check_dims(dims)
    vals = rasterize_coverage_arrays([t.rect for t in fp.tsvs], fp.outline, (nx, ny))
    return Grid2D(vals, grid_pitch(fp.outline, (nx, ny)))
