"""Thermal-leakage metrics: power/temperature correlation, its per-bin
stability across activity samples, and the spatial entropy of power maps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import DomainError, Grid2D

# relative threshold below which a variance counts as zero
ZERO_VAR_RTOL = 1e-12


@dataclass(frozen=True)
class CorrelationResult:
    r: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.r is not None


def _values(g):
    return g.values if isinstance(g, Grid2D) else np.asarray(g, dtype=float)


def _zero_var(ss, centred_scale, n):
    return ss <= n * (ZERO_VAR_RTOL * centred_scale) ** 2


def pearson(power, temp) -> CorrelationResult:
    """Pearson correlation over all bins; ``r`` is None when either map is constant."""
    p = _values(power)
    t = _values(temp)
    if p.shape != t.shape:
        raise DomainError(f"power grid {p.shape} and temperature grid {t.shape} differ")
    p = p.ravel()
    t = t.ravel()
    n = p.size
    dp = p - p.mean()
    dt = t - t.mean()
    spp = float(dp @ dp)
    stt = float(dt @ dt)
    if _zero_var(spp, np.abs(p).max(), n) or _zero_var(stt, np.abs(t).max(), n):
        return CorrelationResult(None, n)
    r = float(dp @ dt) / math.sqrt(spp * stt)
    return CorrelationResult(min(1.0, max(-1.0, r)), n)


@dataclass(frozen=True, eq=False)
class StabilityMap:
    """Per-bin correlation across ``m`` samples; ``defined`` flags bins with variance."""

    values: np.ndarray
    defined: np.ndarray
    m: int

    @property
    def n_defined(self) -> int:
        return int(self.defined.sum())

    def mean_abs(self) -> float | None:
        if not self.defined.any():
            return None
        return float(np.abs(self.values[self.defined]).mean())


def stability(power_samples, temp_samples) -> StabilityMap:
    """Per-bin Pearson correlation across aligned (power, temperature) samples."""
    ps = np.asarray([_values(g) for g in power_samples], dtype=float)
    ts = np.asarray([_values(g) for g in temp_samples], dtype=float)
    if ps.shape[0] != ts.shape[0]:
        raise DomainError(f"{ps.shape[0]} power samples vs {ts.shape[0]} temperature samples")
    if ps.shape != ts.shape:
        raise DomainError(f"sample grids differ: {ps.shape[1:]} vs {ts.shape[1:]}")
    m = ps.shape[0]
    if m < 2:
        raise DomainError("stability needs at least two samples")
    dp = ps - ps.mean(axis=0)
    dt = ts - ts.mean(axis=0)
    spp = np.einsum("i...,i...->...", dp, dp)
    stt = np.einsum("i...,i...->...", dt, dt)
    spt = np.einsum("i...,i...->...", dp, dt)
    sp_scale = np.abs(ps).max(axis=0)
    st_scale = np.abs(ts).max(axis=0)
    ok = ~(_zero_var(spp, sp_scale, m) | _zero_var(stt, st_scale, m))
    vals = np.zeros(spp.shape)
    vals[ok] = np.clip(spt[ok] / np.sqrt(spp[ok] * stt[ok]), -1.0, 1.0)
    return StabilityMap(vals, ok, m)


def nested_means_classify(values) -> np.ndarray:
    """Class label per value from nested-means bi-partitioning.

    Values are sorted and each class is split at its mean (``< mean`` versus
    ``>= mean``) until its standard deviation drops to 1e-9 of the overall
    value range or a split would leave one side empty. Labels count up with
    the value ranges they cover.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("nested-means classification needs at least one value")
    order = np.argsort(v, kind="stable")
    s = v[order]
    eps = 1e-9 * (s[-1] - s[0])
    bounds = kernels.nested_means_bounds(np.ascontiguousarray(s), float(eps))
    sorted_labels = np.zeros(s.size, dtype=np.int64)
    sorted_labels[bounds[1:]] = 1
    sorted_labels = np.cumsum(sorted_labels)
    labels = np.empty_like(sorted_labels)
    labels[order] = sorted_labels
    return labels


@dataclass(frozen=True)
class PowerClass:
    size: int
    mean_power: float
    d_intra: float
    d_inter: float


@dataclass(frozen=True)
class EntropyResult:
    s: float
    classes: tuple[PowerClass, ...]
    labels: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def spatial_entropy(power, singleton: float = 0.5, ratio: str = "inter/intra") -> EntropyResult:
    """Spatial entropy of a power map in bits.

    Each nested-means class contributes its Shannon term weighted by the ratio
    of average inter-class to intra-class Manhattan distance (bin units).
    ``ratio="intra/inter"`` flips the weight to Claramunt's original form.
    Singleton classes take ``d_intra = singleton`` and a lone class takes
    ``d_inter = singleton``.
    """
    vals = _values(power)
    if vals.ndim != 2 or vals.size < 2:
        raise DomainError("spatial entropy needs a 2-D map with at least two bins")
    labels = nested_means_classify(vals).reshape(vals.shape)
    k = int(labels.max()) + 1
    n = labels.size
    intra_sum, cross_sum = kernels.class_distance_sums(np.ascontiguousarray(labels), k)
    sizes = np.bincount(labels.ravel(), minlength=k)
    means = np.bincount(labels.ravel(), weights=vals.ravel(), minlength=k) / sizes
    classes = []
    s = 0.0
    for c in range(k):
        m = int(sizes[c])
        d_intra = intra_sum[c] / (m * (m - 1) / 2) if m > 1 else singleton
        d_inter = cross_sum[c] / (m * (n - m)) if m < n else singleton
        # coincident members only happen for a class of one bin
        d_intra = d_intra if d_intra > 0 else singleton
        classes.append(PowerClass(m, float(means[c]), float(d_intra), float(d_inter)))
        frac = m / n
        if frac < 1.0:
            w = d_inter / d_intra if ratio == "inter/intra" else d_intra / d_inter
            s -= w * frac * math.log2(frac)
    return EntropyResult(float(s), tuple(classes), labels)


def mean_defined(values) -> tuple[float | None, int]:
    """Mean of the non-None entries and how many there were."""
    vs = [v for v in values if v is not None]
    if not vs:
        return None, 0
    return float(sum(vs) / len(vs)), len(vs)
