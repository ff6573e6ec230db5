import numpy as np
import pytest

from tsvshield.config import EngineConfig
from tsvshield.harden import (
    draw_powers, harden, hotspot_floorplan, localize_attack, mean_correlation, place_island,
    sample_activities, stability_map,
)
from tsvshield.model import BlockModule, DomainError, Floorplan

CFG = EngineConfig(grid_nx=24, grid_ny=24, samples=20)


def hard(bid, x, y, w, h, die, p):
    return BlockModule(bid, "hard", w * h, (w / h, w / h), (x, y), (w, h), die, p)


def full_tiling(side=400.0):
    """No whitespace on die 1, so no island can be placed."""
    q = side / 2
    blocks = [hard(f"b{i}{j}", i * q, j * q, q, q, 1, 0.01 * (1 + i + 2 * j))
              for i in range(2) for j in range(2)]
    blocks.append(hard("top", 0, 0, side, side / 2, 2, 0.05))
    return Floorplan((side, side), tuple(blocks))


def dominant_source():
    blocks = (hard("hot", 100, 100, 200, 200, 1, 0.2),
              hard("cool", 600, 600, 200, 200, 1, 0.01),
              hard("lid", 0, 0, 1000, 1000, 2, 0.02))
    return Floorplan((1000.0, 1000.0), blocks)


# -- sampling

def test_zero_std_gives_identical_samples():
    fp = dominant_source()
    cfg = CFG.replace(sample_std=0.0)
    s = sample_activities(fp, 4, 1, cfg, (12, 12))
    for k in range(1, 4):
        np.testing.assert_array_equal(s[k].powers, s[0].powers)
        np.testing.assert_array_equal(s[k].thermal.t1.values, s[0].thermal.t1.values)
    # identical samples give no per-bin correlation at all
    assert stability_map(s).n_defined == 0


def test_zero_power_module_stays_zero():
    fp = dominant_source()
    fp = fp.replace(blocks=(fp.blocks[0], fp.blocks[1].with_(nominal_power=0.0), fp.blocks[2]))
    d = draw_powers(fp, 50, 3, 0.3)
    assert np.all(d[:, 1] == 0.0) and np.all(d >= 0)


def test_sample_mean_and_spread():
    fp = dominant_source()
    d = draw_powers(fp, 4000, 4, 0.1)
    mean = np.array([b.effective_power for b in fp.blocks])
    np.testing.assert_allclose(d.mean(axis=0), mean, rtol=0.01)
    np.testing.assert_allclose(d.std(axis=0), 0.1 * mean, rtol=0.05)


def test_sampling_needs_two_samples():
    with pytest.raises(DomainError):
        sample_activities(dominant_source(), 1, 0, CFG)


# -- hardening

def test_hotspot_trace_strictly_decreasing_with_five_percent():
    cfg = EngineConfig(grid_nx=32, grid_ny=32, samples=30)
    fp = hotspot_floorplan()
    out, trace = harden(fp, cfg)
    r = trace.r_values
    assert trace.accepted >= 1
    assert all(b < a for a, b in zip(r, r[1:]))
    # independent recomputation of the start and end points
    assert mean_correlation(fp, cfg) == pytest.approx(r[0], rel=1e-12)
    assert mean_correlation(out, cfg) == pytest.approx(r[-1], rel=1e-12)
    assert out.dummy_tsv_count() == trace.accepted * cfg.island_tsv_count
    assert out.is_legal()


def test_zero_whitespace_gives_empty_trace():
    fp = full_tiling()
    out, trace = harden(fp, CFG)
    assert trace.accepted == 0 and out == fp
    assert trace.stop_reason == "no whitespace for an island"


def test_single_step_limit():
    cfg = EngineConfig(grid_nx=24, grid_ny=24, samples=20, harden_max_steps=1)
    _, trace = harden(hotspot_floorplan(), cfg)
    assert trace.accepted <= 1
    assert trace.stop_reason in ("step limit", "mean correlation no longer decreasing")


def test_dummy_budget_stops_loop():
    _, trace = harden(hotspot_floorplan(), CFG, max_dummy=0)
    assert trace.accepted == 0 and trace.stop_reason == "dummy TSV budget"


def test_islands_avoid_die1_modules():
    fp = hotspot_floorplan()
    spot = place_island(fp, (500.0, 500.0), 400.0, CFG.island_tsv_count, CFG.tsv_pitch)
    assert spot is not None
    from tsvshield.model import TsvIsland, overlap_area
    isl = TsvIsland(spot, CFG.island_tsv_count, "dummy", CFG.tsv_pitch)
    assert all(overlap_area(isl.rect, b.rect) <= 1e-9 for b in fp.on_die(1))
    assert place_island(full_tiling(), (100.0, 100.0), 400.0, 9, 20.0) is None


def test_unknown_focus_module():
    with pytest.raises(DomainError):
        harden(hotspot_floorplan(), CFG, focus=["nope"])


# -- localization attack

def test_attack_finds_dominant_source():
    rep = localize_attack(dominant_source(), ["hot"], CFG)
    assert rep.success and rep.margin > 0
    assert rep.peak_bin[0] == 1


def test_attack_at_nominal_activity_detects_nothing():
    rep = localize_attack(dominant_source(), ["cool"], CFG.replace(attack_sigma=0.0))
    assert not rep.success and rep.peak_delta == 0.0 and rep.margin == 0.0
    assert set(rep.as_dict()) == {"targets", "success", "margin", "peak_delta", "peak_bin"}


def test_attack_localizes_weak_source_too():
    # the delta map is linear in the boost, so even a small one points at the target
    rep = localize_attack(dominant_source(), ["cool"], CFG.replace(attack_sigma=0.01))
    assert rep.success and rep.peak_delta > 0


def test_attack_input_errors():
    with pytest.raises(DomainError):
        localize_attack(dominant_source(), [], CFG)
    with pytest.raises(DomainError):
        localize_attack(dominant_source(), ["ghost"], CFG)


def test_attack_margin_before_and_after_hardening():
    cfg = EngineConfig(grid_nx=24, grid_ny=24, samples=20)
    fp = hotspot_floorplan()
    before = localize_attack(fp, ["corner0"], cfg)
    out, _ = harden(fp, cfg)
    after = localize_attack(out, ["corner0"], cfg)
    assert np.isfinite(before.margin) and np.isfinite(after.margin)
