import math

import numpy as np
import pytest

from oracles import entropy_oracle, labels_from_classes, nested_means_oracle, pearson_two_pass, stability_oracle
from tsvshield.leakage import (
    mean_defined, nested_means_classify, pearson, spatial_entropy, stability,
)
from tsvshield.model import DomainError, Grid2D


def classes_of(values, labels):
    v = np.ravel(values)
    return [sorted(v[labels == k].tolist()) for k in range(labels.max() + 1)]


# -- pearson

def test_affine_maps():
    p = np.random.default_rng(0).random((5, 5))
    assert pearson(p, 2 * p + 5).r == pytest.approx(1.0)
    assert pearson(p, -p).r == pytest.approx(-1.0)


def test_pearson_matches_two_pass_oracle():
    rng = np.random.default_rng(1)
    p, t = rng.random((2, 8, 8))
    assert pearson(Grid2D(p), Grid2D(t)).r == pytest.approx(pearson_two_pass(p, t), rel=1e-12)


def test_pearson_undefined_for_constant():
    res = pearson(np.full((3, 3), 0.2), np.random.default_rng(2).random((3, 3)))
    assert res.r is None and not res.defined and res.n == 9


def test_pearson_dim_mismatch():
    with pytest.raises(DomainError):
        pearson(np.zeros((2, 3)), np.zeros((3, 2)))


def test_pearson_affine_invariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, t = rng.random((2, 6, 6))
        a, b = rng.uniform(0.1, 10, 2)
        r = pearson(p, t).r
        assert pearson(a * p + 3, b * t - 1).r == pytest.approx(r, abs=1e-12)
        assert pearson(-a * p, t).r == pytest.approx(-r, abs=1e-12)


# -- stability

def test_stability_offset_samples_are_perfectly_correlated():
    rng = np.random.default_rng(4)
    ps = rng.random((10, 4, 4))
    sm = stability(ps, ps + 7.0)
    assert sm.defined.all()
    np.testing.assert_allclose(sm.values, 1.0)
    assert sm.m == 10


def test_stability_constant_temperature_is_undefined():
    rng = np.random.default_rng(5)
    ps = rng.random((6, 3, 3))
    sm = stability(ps, np.full((6, 3, 3), 300.0))
    assert not sm.defined.any() and sm.mean_abs() is None


def test_stability_repeated_samples_undefined():
    g = np.random.default_rng(6).random((4, 4))
    sm = stability([g] * 5, [g * 2] * 5)
    assert sm.n_defined == 0


def test_stability_matches_per_bin_oracle():
    rng = np.random.default_rng(7)
    base = rng.random((4, 4))
    ps = np.clip(base + 0.1 * rng.standard_normal((100, 4, 4)), 0, None)
    ts = 300 + 5 * ps + 0.05 * rng.standard_normal((100, 4, 4))
    sm = stability(ps, ts)
    ref = stability_oracle(ps, ts)
    for idx in np.ndindex(4, 4):
        assert sm.defined[idx] == (ref[idx] is not None)
        assert sm.values[idx] == pytest.approx(ref[idx], rel=1e-12)


def test_stability_errors():
    with pytest.raises(DomainError):
        stability(np.zeros((3, 2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(DomainError):
        stability(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)))


# -- nested means

def test_nested_means_examples():
    assert nested_means_classify([3.0] * 7).max() == 0
    lab = nested_means_classify([1, 9, 1, 9, 1, 9])
    assert classes_of([1, 9, 1, 9, 1, 9], lab) == [[1, 1, 1], [9, 9, 9]]


def test_nested_means_lognormal_matches_recursion():
    rng = np.random.default_rng(8)
    v = rng.lognormal(0, 1, 64)
    lab = nested_means_classify(v)
    assert classes_of(v, lab) == nested_means_oracle(v)
    np.testing.assert_array_equal(lab, labels_from_classes(v, nested_means_oracle(v)))


def test_nested_means_empty():
    with pytest.raises(DomainError):
        nested_means_classify([])


# -- spatial entropy

def test_entropy_uniform_is_zero():
    res = spatial_entropy(np.full((4, 4), 0.3))
    assert res.s == 0.0 and res.n_classes == 1
    assert res.classes[0].d_inter == 0.5


def test_checkerboard_vs_half_planes():
    yy, xx = np.mgrid[0:8, 0:8]
    checker = ((yy + xx) % 2).astype(float)
    halves = (xx >= 4).astype(float)
    # close different entities raise the entropy under the distance ratio of
    # the original spatial-entropy definition (intra over inter)
    assert spatial_entropy(checker, ratio="intra/inter").s > spatial_entropy(halves, ratio="intra/inter").s
    # the default inter-over-intra weighting ranks the two arrangements the other way
    assert spatial_entropy(checker).s < spatial_entropy(halves).s


def test_shannon_part_of_12_4_split():
    g = np.zeros((4, 4))
    g[0, :] = 1.0
    res = spatial_entropy(g)
    sizes = sorted(c.size for c in res.classes)
    assert sizes == [4, 12]
    shannon = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert shannon == pytest.approx(0.811, abs=5e-4)
    weighted = -sum((c.d_inter / c.d_intra) * (c.size / 16) * math.log2(c.size / 16) for c in res.classes)
    assert res.s == pytest.approx(weighted)
    flipped = spatial_entropy(g, ratio="intra/inter")
    assert flipped.s == pytest.approx(
        -sum((c.d_intra / c.d_inter) * (c.size / 16) * math.log2(c.size / 16) for c in res.classes))


def test_entropy_matches_pairwise_oracle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        g = rng.lognormal(0, 1, (int(rng.integers(2, 9)), int(rng.integers(2, 9))))
        assert spatial_entropy(g).s == pytest.approx(entropy_oracle(g), rel=1e-9)


def test_entropy_rotation_and_mirror_invariance():
    rng = np.random.default_rng(10)
    g = rng.lognormal(0, 1, (6, 9))
    s = spatial_entropy(g).s
    for k in (1, 2, 3):
        assert spatial_entropy(np.rot90(g, k)).s == pytest.approx(s, rel=1e-12)
    assert spatial_entropy(g[::-1]).s == pytest.approx(s, rel=1e-12)
    assert spatial_entropy(g[:, ::-1]).s == pytest.approx(s, rel=1e-12)


def test_entropy_measures_distance_in_bins():
    # physical bin pitch plays no part, only bin offsets do
    g = np.random.default_rng(12).lognormal(0, 1, (5, 5))
    assert spatial_entropy(Grid2D(g, (1.0, 1.0))).s == spatial_entropy(Grid2D(g, (250.0, 40.0))).s


def test_class_sizes_sum_and_positive_distances():
    g = np.random.default_rng(11).lognormal(0, 1, (5, 7))
    res = spatial_entropy(g)
    assert sum(c.size for c in res.classes) == 35
    assert all(c.d_intra > 0 and c.d_inter > 0 for c in res.classes)


def test_entropy_needs_two_bins():
    with pytest.raises(DomainError):
        spatial_entropy(np.zeros((1, 1)))


def test_mean_defined_skips_none():
    assert mean_defined([0.2, None, 0.4]) == (pytest.approx(0.3), 2)
    assert mean_defined([None]) == (None, 0)
