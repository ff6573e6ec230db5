import pytest

from tsvshield.config import ConfigError, EngineConfig, format_config, load_config, parse_config


def test_defaults():
    cfg = EngineConfig()
    assert cfg.grid == (64, 64)
    assert cfg.outline == (4000.0, 4000.0)
    assert cfg.samples == 100 and cfg.sample_std == pytest.approx(0.10)
    assert cfg.solver_tol == 1e-6 and cfg.solver_max_iter == 50000


def test_parse_with_comments_and_types():
    cfg = parse_config("# comment\ngrid_nx = 16  # trailing\n\nk_si=120.5\nsolver = sor\n")
    assert cfg.grid_nx == 16 and cfg.k_si == 120.5 and cfg.solver == "sor"


def test_round_trip(tmp_path):
    cfg = EngineConfig(grid_nx=20, delta=0.1, focus_modules="a,b")
    p = tmp_path / "c.txt"
    p.write_text(format_config(cfg))
    assert load_config(p) == cfg


@pytest.mark.parametrize("text, line", [
    ("grid_nx = 4\nnonsense\n", 2),
    ("bogus_key = 1\n", 1),
    ("\n\ngrid_nx = many\n", 3),
])
def test_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line


@pytest.mark.parametrize("changes", [
    {"sa_cooling": 1.0}, {"sa_cooling": 0.0}, {"samples": 1}, {"w_temp": -1.0},
    {"grid_nx": 1}, {"solver": "cg"}, {"entropy_ratio": "x"}, {"harden_target": "top"},
])
def test_invariants(changes):
    with pytest.raises(ConfigError):
        EngineConfig(**changes)


def test_replace():
    cfg = EngineConfig().replace(grid_nx=8, grid_ny=4)
    assert cfg.grid == (8, 4)
