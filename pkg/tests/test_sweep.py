import csv

import numpy as np
import pytest

from tsvshield.config import EngineConfig
from tsvshield.sweep import (
    POWER_PATTERNS, REGULAR_COLUMNS, TSV_PATTERNS, column_minimum, entropy_rank_correlation,
    power_maps, rank_key, secondary_experiment_sweep, table_maximum, tsv_density, write_sweep_csv,
)

OUTLINE = (4000.0, 4000.0)


@pytest.fixture(scope="module")
def report():
    return secondary_experiment_sweep(EngineConfig(), dims=(32, 32), keep_maps=True)


def test_thirty_unique_rows(report):
    assert len(report.rows) == 30
    assert {(r.power_pattern, r.tsv_pattern) for r in report.rows} == \
        {(p, t) for p in POWER_PATTERNS for t in TSV_PATTERNS}


def test_power_maps_hold_stack_power():
    dims = (32, 32)
    area = (OUTLINE[0] / 32) * (OUTLINE[1] / 32)
    for p in POWER_PATTERNS:
        m1, m2 = power_maps(p, OUTLINE, dims)
        assert (m1.sum() + m2.sum()) * area == pytest.approx(10.0)
    g1, _ = power_maps("globally_uniform", OUTLINE, dims)
    assert np.ptp(g1) == pytest.approx(0.0, abs=1e-18)


def test_tsv_patterns_bounded_and_ordered():
    dims = (32, 32)
    for t in TSV_PATTERNS:
        d = tsv_density(t, OUTLINE, dims)
        assert d.min() >= 0 and d.max() <= 1 + 1e-12
    assert tsv_density("none", OUTLINE, dims).sum() == 0
    assert np.all(tsv_density("maximal", OUTLINE, dims) == 1)
    assert tsv_density("irregular_regular", OUTLINE, dims).sum() > tsv_density("irregular", OUTLINE, dims).sum()


def test_globally_uniform_is_column_minimum(report):
    for t in TSV_PATTERNS:
        row = column_minimum(report, t)
        assert row.power_pattern == "globally_uniform"
        defined = [rank_key(r.r1) for r in report.column(t) if r.r1 is not None]
        assert rank_key(row.r1) <= min(defined)


def test_large_gradients_top_the_table(report):
    top = table_maximum(report)
    assert top.power_pattern == "large_gradients" and top.tsv_pattern in REGULAR_COLUMNS


def test_entropy_tracks_correlation(report):
    for t in TSV_PATTERNS:
        assert entropy_rank_correlation(report, t) >= 0.5


def test_csv_and_maps(report, tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv(report, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["power_pattern", "tsv_pattern", "r1", "r2", "S1", "S2"]
    assert len(rows) == 31
    assert len(report.maps) == 30
    assert set(report.maps[("small_gradients", "islands")]) == {"power1", "power2", "temp1", "temp2", "tsv"}
