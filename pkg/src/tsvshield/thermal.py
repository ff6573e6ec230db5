"""Steady-state thermal analysis of the two-die stack.

The stack is a resistive network with one node per bin and die. Lateral
conductances come from the silicon slab, the vertical link between the dies
runs through half of each die plus the bond layer whose conductivity is
blended with the TSV fill by local TSV density, and the dies sink into
ambient through the heatsink (die 2) and the package path (die 1). All solves
work on the temperature rise above ambient.

``solve_steady`` is the detailed solver; ``estimate_fast`` is a power-blurring
estimate built from impulse responses of that solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import irfft2, rfft2

from . import kernels
from .model import DomainError, Grid2D


class ThermalSolverError(RuntimeError):
    def __init__(self, msg, residual=float("nan"), iterations=0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{msg} (residual {residual:.3e} W after {iterations} iterations)")


class CalibrationError(RuntimeError):
    """``estimate_fast`` was called before the blurring masks were calibrated."""


@dataclass(frozen=True)
class StackModel:
    k_si: float = 150.0
    k_bond: float = 2.0
    k_tsv: float = 385.0
    t_die: float = 100.0      # um
    t_bond: float = 10.0      # um
    h_sink: float = 3.9e4     # W / (m^2 K), heatsink side
    pkg_ratio: float = 0.1    # package path relative to heatsink path
    ambient: float = 293.0

    def __post_init__(self):
        for name in ("k_si", "k_bond", "k_tsv", "t_die", "t_bond", "h_sink", "pkg_ratio"):
            if not getattr(self, name) > 0:
                raise DomainError(f"stack parameter {name} must be > 0")

    @classmethod
    def from_config(cls, cfg) -> "StackModel":
        return cls(cfg.k_si, cfg.k_bond, cfg.k_tsv, cfg.t_die, cfg.t_bond, cfg.h_sink,
                   cfg.pkg_ratio, cfg.ambient)

    def conductances(self, pitch, tsv_density):
        """(gx, gy, gv[ny, nx], (g_pkg, g_sink)) in W/K for bins of ``pitch`` um."""
        px, py = pitch[0] * 1e-6, pitch[1] * 1e-6
        t = self.t_die * 1e-6
        gx = self.k_si * t * py / px
        gy = self.k_si * t * px / py
        area = px * py
        d = np.clip(np.asarray(tsv_density, dtype=float), 0.0, 1.0)
        k_eff = (1.0 - d) * self.k_bond + d * self.k_tsv
        r_v = t / self.k_si + self.t_bond * 1e-6 / k_eff
        gv = area / r_v
        g_sink = self.h_sink * area
        return gx, gy, gv, (self.pkg_ratio * g_sink, g_sink)


@dataclass(frozen=True)
class ThermalResult:
    t1: Grid2D
    t2: Grid2D
    peak: float
    residual: float
    iterations: int

    def die(self, d: int) -> Grid2D:
        if d == 1:
            return self.t1
        if d == 2:
            return self.t2
        raise DomainError(f"die must be 1 or 2, got {d!r}")


def _grid_values(g):
    return g.values if isinstance(g, Grid2D) else np.asarray(g, dtype=float)


def _common_grid(power1, power2, tsv_density):
    grids = [g for g in (power1, power2, tsv_density) if isinstance(g, Grid2D)]
    if not grids:
        raise DomainError("at least one input must be a Grid2D to fix the bin pitch")
    pitch = grids[0].pitch
    vals = [_grid_values(g) for g in (power1, power2, tsv_density)]
    shape = vals[0].shape
    if any(v.shape != shape for v in vals):
        raise DomainError(f"grid dims differ: {[v.shape for v in vals]}")
    if any(g.pitch != pitch for g in grids):
        raise DomainError("grid pitches differ")
    if (vals[0] < 0).any() or (vals[1] < 0).any():
        raise DomainError("power densities must be >= 0")
    return vals, pitch


class ThermalNetwork:
    """Assembled network for one (stack, bin pitch, TSV density) combination.

    The sparse factorization is computed once and reused for any number of
    power inputs, which is what activity sampling needs.
    """

    def __init__(self, stack: StackModel, pitch, tsv_density):
        d = _grid_values(tsv_density)
        self.stack = stack
        self.pitch = tuple(pitch)
        self.shape = d.shape
        self.gx, self.gy, self.gv, self.ga = stack.conductances(self.pitch, d)
        self._lu = None
        self._matrix = None

    @property
    def matrix(self) -> sp.csc_matrix:
        if self._matrix is None:
            self._matrix = _assemble(self.shape, self.gx, self.gy, self.gv, self.ga)
        return self._matrix

    def _factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu

    def _rhs(self, w1, w2):
        return np.concatenate([np.ravel(w1), np.ravel(w2)])

    def residual(self, rise, w1, w2) -> float:
        b = self._rhs(w1, w2)
        return float(np.abs(b - self.matrix @ rise.ravel()).sum())

    def solve_watts(self, w1, w2, method="direct", tol=1e-6, max_iter=50000):
        """Solve for per-bin watts ``w1``, ``w2``; returns (rise[2, ny, nx], residual, iterations)."""
        ny, nx = self.shape
        total = float(np.sum(w1) + np.sum(w2))
        if total == 0.0:
            return np.zeros((2, ny, nx)), 0.0, 0
        tol_abs = tol * total
        if method == "direct":
            rise = self._factor().solve(self._rhs(w1, w2)).reshape(2, ny, nx)
            res = self.residual(rise, w1, w2)
            it = 1
        elif method == "sor":
            p = np.ascontiguousarray(np.stack([w1, w2]).astype(float))
            omega = 2.0 / (1.0 + math.sin(math.pi / (max(nx, ny) + 1)))
            rise, res, it = kernels.sor_solve(p, float(self.gx), float(self.gy),
                                              np.ascontiguousarray(self.gv), np.array(self.ga, dtype=float),
                                              omega, tol_abs, int(max_iter), 10)
            res = float(res)
        else:
            raise DomainError(f"unknown solver method {method!r}")
        if not res <= tol_abs:
            raise ThermalSolverError("steady-state solve did not converge", res, int(it))
        return rise, res, int(it)

    def solve_many(self, w1s, w2s):
        """Direct solve for a batch of per-bin watt maps, shape (m, ny, nx) each."""
        m = len(w1s)
        ny, nx = self.shape
        b = np.concatenate([np.reshape(w1s, (m, -1)), np.reshape(w2s, (m, -1))], axis=1).T
        x = self._factor().solve(np.ascontiguousarray(b))
        return x.T.reshape(m, 2, ny, nx)

    def result(self, rise, res, it) -> ThermalResult:
        amb = self.stack.ambient
        t1 = Grid2D(amb + rise[0], self.pitch)
        t2 = Grid2D(amb + rise[1], self.pitch)
        return ThermalResult(t1, t2, float(amb + rise.max()), float(res), int(it))


def _assemble(shape, gx, gy, gv, ga):
    ny, nx = shape
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)
    rows, cols, vals = [], [], []
    diag = np.zeros(2 * n)
    for layer in (0, 1):
        off = layer * n
        for a, b, g in ((idx[:, :-1], idx[:, 1:], gx), (idx[:-1, :], idx[1:, :], gy)):
            a = a.ravel() + off
            b = b.ravel() + off
            rows += [a, b]
            cols += [b, a]
            vals += [np.full(a.size, -g), np.full(a.size, -g)]
            np.add.at(diag, a, g)
            np.add.at(diag, b, g)
    v = np.ravel(gv)
    a = np.arange(n)
    rows += [a, a + n]
    cols += [a + n, a]
    vals += [-v, -v]
    diag[:n] += v + ga[0]
    diag[n:] += v + ga[1]
    rows.append(np.arange(2 * n))
    cols.append(np.arange(2 * n))
    vals.append(diag)
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * n, 2 * n))
    return m.tocsc()


def solve_steady(power1, power2, tsv_density, stack: StackModel, *, method="direct",
                 tol=1e-6, max_iter=50000) -> ThermalResult:
    """Detailed steady-state temperatures for power densities in W/um^2."""
    (p1, p2, d), pitch = _common_grid(power1, power2, tsv_density)
    net = ThermalNetwork(stack, pitch, d)
    area = pitch[0] * pitch[1]
    rise, res, it = net.solve_watts(p1 * area, p2 * area, method, tol, max_iter)
    return net.result(rise, res, it)


# ---------------------------------------------------------------------------
# power blurring

@dataclass(frozen=True, eq=False)
class BlurMasks:
    """Impulse-response masks per (source die, observed die, TSV level).

    ``masks[(s, o, level)]`` is a (2R+1, 2R+1) array in K per watt with the
    source bin at the centre; level 0 is calibrated without TSVs, level 1 at
    full TSV density.
    """

    stack: StackModel
    pitch: tuple[float, float]
    shape: tuple[int, int]
    masks: dict
    _spectra: dict = field(default_factory=dict, repr=False)

    def radius(self, key) -> int:
        return self.masks[key].shape[0] // 2

    @property
    def max_radius(self) -> int:
        return max(m.shape[0] // 2 for m in self.masks.values())

    def spectrum(self, key) -> np.ndarray:
        """rfft2 of the mask zero-embedded at the common radius, on the padded grid.

        With every source padded by the common radius R, the circular
        convolution over the padded grid equals the linear one on the rows and
        columns from 2R onwards, which are exactly the die bins.
        """
        spec = self._spectra.get(key)
        if spec is None:
            R = self.max_radius
            m = self.masks[key]
            r = m.shape[0] // 2
            big = np.zeros((2 * R + 1, 2 * R + 1))
            big[R - r:R + r + 1, R - r:R + r + 1] = m
            ny, nx = self.shape
            spec = rfft2(big, s=(ny + 2 * R, nx + 2 * R))
            self._spectra[key] = spec
        return spec


_CALIBRATIONS: dict = {}


def _impulse_masks(stack, pitch, shape, level, cutoff):
    ny, nx = shape
    cy, cx = ny // 2, nx // 2
    rmax = min(cy, cx, ny - 1 - cy, nx - 1 - cx)
    net = ThermalNetwork(stack, pitch, np.full(shape, float(level)))
    out = {}
    for s in (1, 2):
        w = [np.zeros(shape), np.zeros(shape)]
        w[s - 1][cy, cx] = 1.0
        rise, _, _ = net.solve_watts(w[0], w[1])
        for o in (1, 2):
            resp = rise[o - 1]
            peak = resp.max()
            yy, xx = np.nonzero(resp >= cutoff * peak)
            r = int(max(np.abs(yy - cy).max(), np.abs(xx - cx).max()))
            r = min(r, rmax)
            out[(s, o, level)] = resp[cy - r:cy + r + 1, cx - r:cx + r + 1].copy()
    return out


def calibrate(stack: StackModel, pitch, dims, cutoff: float = 0.01) -> BlurMasks:
    """Impulse-solve the stack at the die centre and register the masks."""
    nx, ny = int(dims[0]), int(dims[1])
    key = (stack, tuple(float(p) for p in pitch), (ny, nx))
    hit = _CALIBRATIONS.get(key)
    if hit is not None:
        return hit
    masks = {}
    for level in (0, 1):
        masks.update(_impulse_masks(stack, key[1], (ny, nx), level, cutoff))
    bm = BlurMasks(stack, key[1], (ny, nx), masks)
    _CALIBRATIONS[key] = bm
    return bm


def lookup_calibration(stack: StackModel, pitch, dims) -> BlurMasks:
    nx, ny = int(dims[0]), int(dims[1])
    key = (stack, tuple(float(p) for p in pitch), (ny, nx))
    try:
        return _CALIBRATIONS[key]
    except KeyError:
        raise CalibrationError(
            f"no blurring masks for a {nx}x{ny} grid with pitch {pitch}; call calibrate() first"
        ) from None


def blur_rise(w1, w2, d, bm: BlurMasks):
    """Temperature rise (2, ny, nx) from per-bin watts via the registered masks.

    Each source map is padded symmetrically and transformed once; the
    observed-die responses for both TSV levels are summed in the frequency
    domain and blended by the local TSV density.
    """
    ws = (w1, w2)
    d = np.clip(d, 0.0, 1.0)
    has_tsv = bool(np.any(d > 0))
    R = bm.max_radius
    ny, nx = bm.shape
    pshape = (ny + 2 * R, nx + 2 * R)
    src = {s: rfft2(np.pad(ws[s - 1], R, mode="symmetric"))
           for s in (1, 2) if np.any(ws[s - 1])}
    out = np.zeros((2,) + bm.shape)
    if not src:
        return out
    for o in (1, 2):
        levels = (0, 1) if has_tsv else (0,)
        acc = []
        for level in levels:
            spec = sum(x * bm.spectrum((s, o, level)) for s, x in src.items())
            acc.append(irfft2(spec, s=pshape)[2 * R:, 2 * R:])
        out[o - 1] = (1.0 - d) * acc[0] + d * acc[1] if has_tsv else acc[0]
    np.maximum(out, 0.0, out=out)
    return out


def estimate_fast(power1, power2, tsv_density, stack: StackModel,
                  masks: BlurMasks | None = None) -> ThermalResult:
    """Power-blurring temperature estimate; needs ``calibrate`` for this grid first."""
    (p1, p2, d), pitch = _common_grid(power1, power2, tsv_density)
    ny, nx = p1.shape
    if masks is None:
        masks = lookup_calibration(stack, pitch, (nx, ny))
    elif masks.shape != (ny, nx) or masks.stack != stack:
        raise CalibrationError("blurring masks were calibrated for a different grid or stack")
    area = pitch[0] * pitch[1]
    rise = blur_rise(p1 * area, p2 * area, d, masks)
    amb = stack.ambient
    return ThermalResult(Grid2D(amb + rise[0], pitch), Grid2D(amb + rise[1], pitch),
                         float(amb + rise.max()), 0.0, 0)
