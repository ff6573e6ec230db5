import numpy as np
import pytest

from oracles import shapely_raster
from tsvshield.model import (
    V08, V10, V12, VOLTAGE_LEVELS, BlockModule, DomainError, Floorplan, Grid2D, Net,
    TsvIsland, level, overlap_area, rasterize_power, rasterize_tsv_density, soft_dims,
)


def random_layout(rng, outline=(100.0, 100.0), k=5):
    blocks = []
    for i in range(k):
        w, h = rng.uniform(3, 40, size=2)
        x = rng.uniform(0, outline[0] - w)
        y = rng.uniform(0, outline[1] - h)
        v = VOLTAGE_LEVELS[rng.integers(3)]
        blocks.append(BlockModule(f"b{i}", "hard", w * h, (0.1, 10), (x, y), (w, h), 1,
                                  float(rng.uniform(0.1, 2.0)), v))
    return Floorplan(outline, tuple(blocks))


def test_voltage_levels_carry_exact_scalings():
    assert (V08.volts, V08.power_scale, V08.delay_scale) == (0.8, 0.817, 1.56)
    assert (V10.volts, V10.power_scale, V10.delay_scale) == (1.0, 1.0, 1.0)
    assert (V12.volts, V12.power_scale, V12.delay_scale) == (1.2, 1.496, 0.83)
    assert level(0.8) is V08
    with pytest.raises(DomainError):
        level(0.9)


def test_exact_cover_single_bin():
    b = BlockModule("a", "hard", 100.0, pos=(0.0, 0.0), dims=(10.0, 10.0), die=1, nominal_power=1.0)
    g = rasterize_power(Floorplan((20.0, 20.0), (b,)), 1, (2, 2))
    assert g.values[0, 0] == pytest.approx(0.01, rel=1e-12)
    assert g.values[0, 1] == 0 and g.values[1, 0] == 0 and g.values[1, 1] == 0


def test_empty_die_is_zero():
    b = BlockModule("a", "hard", 100.0, dims=(10.0, 10.0), die=1, nominal_power=1.0)
    g = rasterize_power(Floorplan((20.0, 20.0), (b,)), 2, (4, 4))
    assert not g.values.any()


def test_bad_die_rejected():
    with pytest.raises(DomainError):
        rasterize_power(Floorplan((20.0, 20.0)), 3, (4, 4))


def test_straddling_block_splits_30_70():
    # 10 wide block starting at x=7 on a 2-bin-wide grid of 10 um bins
    b = BlockModule("a", "hard", 100.0, pos=(7.0, 0.0), dims=(10.0, 10.0), nominal_power=1.0)
    g = rasterize_power(Floorplan((20.0, 20.0), (b,)), 1, (2, 2))
    watts = g.values * g.bin_area
    assert watts[0, 0] == pytest.approx(0.3, rel=1e-12)
    assert watts[0, 1] == pytest.approx(0.7, rel=1e-12)


def test_raster_matches_clipping_oracle_on_random_layouts():
    rng = np.random.default_rng(1)
    for _ in range(100):
        fp = random_layout(rng)
        dims = (int(rng.integers(2, 9)), int(rng.integers(2, 9)))
        g = rasterize_power(fp, 1, dims)
        ref = shapely_raster([b.rect for b in fp.blocks], [b.effective_power for b in fp.blocks],
                             fp.outline, dims)
        np.testing.assert_allclose(g.values * g.bin_area, ref, rtol=1e-9, atol=1e-15)


def test_power_conservation():
    rng = np.random.default_rng(2)
    for _ in range(50):
        fp = random_layout(rng, k=8)
        g = rasterize_power(fp, 1, (16, 16))
        total = sum(b.effective_power for b in fp.blocks)
        assert abs(g.values.sum() * g.bin_area - total) < 1e-4 * total


def test_translation_consistency():
    b = BlockModule("a", "hard", 0, pos=(12.0, 17.0), dims=(23.0, 31.0), nominal_power=2.0)
    fp = Floorplan((100.0, 100.0), (b,))
    g0 = rasterize_power(fp, 1, (10, 10)).values
    g1 = rasterize_power(fp.replace(blocks=(b.with_(pos=(22.0, 17.0)),)), 1, (10, 10)).values
    np.testing.assert_allclose(g1[:, 1:], g0[:, :-1], rtol=1e-12, atol=1e-18)


def test_overlap_symmetric():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = tuple(np.sort(rng.uniform(0, 10, 2)).tolist())
        b = tuple(np.sort(rng.uniform(0, 10, 2)).tolist())
        ra = (a[0], b[0], a[1], b[1])
        c = tuple(np.sort(rng.uniform(0, 10, 2)).tolist())
        d = tuple(np.sort(rng.uniform(0, 10, 2)).tolist())
        rb = (c[0], d[0], c[1], d[1])
        assert overlap_area(ra, rb) == overlap_area(rb, ra)


def test_tsv_density():
    fp = Floorplan((40.0, 40.0))
    assert not rasterize_tsv_density(fp, (2, 2)).values.any()
    # a 2x2 island of 10 um pitch covers exactly one 20 um bin
    isl = TsvIsland((10.0, 10.0), count=4, pitch=10.0)
    g = rasterize_tsv_density(fp.replace(tsvs=(isl,)), (2, 2))
    assert g.values[0, 0] == pytest.approx(1.0)
    assert g.values[1, 1] == 0.0


def test_tsv_density_random_islands_match_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        isl = tuple(TsvIsland(tuple(rng.uniform(20, 80, 2)), int(rng.integers(1, 10)), pitch=5.0)
                    for _ in range(3))
        fp = Floorplan((100.0, 100.0), tsvs=isl)
        g = rasterize_tsv_density(fp, (8, 8))
        ref = shapely_raster([t.rect for t in isl], [t.footprint for t in isl], fp.outline, (8, 8))
        np.testing.assert_allclose(g.values, np.minimum(ref / g.bin_area, 1.0), atol=1e-9)


def test_soft_reshape_keeps_area_and_limits():
    rng = np.random.default_rng(5)
    for _ in range(300):
        area = float(rng.uniform(100, 1e6))
        lim = (float(rng.uniform(0.2, 1.0)), float(rng.uniform(1.0, 5.0)))
        b = BlockModule("s", "soft", area, lim)
        r = b.reshape(float(rng.uniform(0.05, 8.0)))
        w, h = r.dims
        assert abs(w * h - area) <= 1e-3 * area
        assert lim[0] * (1 - 1e-9) <= w / h <= lim[1] * (1 + 1e-9)
        assert round(w, 1) == w and round(h, 1) == h


def test_hard_block_refuses_reshape():
    with pytest.raises(DomainError):
        BlockModule("h", "hard", 100.0, dims=(10.0, 10.0)).reshape(2.0)


def test_soft_dims_square():
    assert soft_dims(400.0, 1.0, (0.5, 2.0)) == (20.0, 20.0)


def test_net_needs_two_pins():
    with pytest.raises(DomainError):
        Net("n", ("a",))
    assert Net("n", ("a", "b", "c")).driver == "a"


def test_island_footprint_and_validation():
    t = TsvIsland((0.0, 0.0), count=9, pitch=20.0)
    assert t.footprint == 9 * 400.0
    assert t.side == pytest.approx(60.0)
    with pytest.raises(DomainError):
        TsvIsland((0.0, 0.0), count=0)


def test_legality():
    a = BlockModule("a", dims=(10.0, 10.0), die=1)
    b = BlockModule("b", pos=(5.0, 5.0), dims=(10.0, 10.0), die=1)
    assert not Floorplan((30.0, 30.0), (a, b)).is_legal()
    assert Floorplan((30.0, 30.0), (a, b.with_(die=2))).is_legal()
    assert not Floorplan((12.0, 12.0), (a, b.with_(die=2))).is_legal()


def test_grid_needs_two_bins():
    with pytest.raises(DomainError):
        Grid2D(np.zeros((1, 4)))
    g = Grid2D(np.zeros((3, 4)), (2.0, 5.0))
    assert g.dims == (4, 3) and g.bin_area == 10.0
