"""Engine configuration: a flat ``key = value`` text format mapped onto a dataclass."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class EngineConfig:
    # geometry (um) and grids
    outline_w: float = 4000.0
    outline_h: float = 4000.0
    grid_nx: int = 64
    grid_ny: int = 64
    est_grid: int = 32

    # stack materials; conductivities W/(m K), thicknesses um, sink coefficient W/(m^2 K)
    k_si: float = 150.0
    k_bond: float = 2.0
    k_tsv: float = 385.0
    t_die: float = 100.0
    t_bond: float = 10.0
    h_sink: float = 3.9e4
    pkg_ratio: float = 0.1
    ambient: float = 293.0

    # TSVs
    tsv_pitch: float = 20.0
    island_tsv_count: int = 9
    regular_tsv_pitch: float = 250.0

    # timing technology
    r_w: float = 0.1        # ohm / um
    c_w: float = 0.2        # fF / um
    r_drv: float = 100.0    # ohm
    c_sink: float = 5.0     # fF
    r_tsv: float = 0.5      # ohm
    c_tsv: float = 20.0     # fF
    clock_target: float = 0.0   # ns; 0 = 1.1x the 1.0 V critical delay of the initial layout
    k_d: float = 2.5e-4     # ns per sqrt(um^2)

    # voltage volumes
    adjacency_gap: float = 10.0
    overlap_min: float = 0.25
    tree_cap: int = 64
    exact_volume_limit: int = 8   # pa: components up to this size are partitioned exactly
    vs_alpha: float = 1.0
    vs_beta: float = 1.0
    vs_gamma: float = 1.0

    # simulated annealing
    sa_t0: float = 0.0      # 0 = auto (about half of uphill moves accepted)
    sa_cooling: float = 0.97
    sa_moves_per_temp: int = 100   # per module
    sa_stop_accept: float = 0.01
    sa_max_moves: int = 0   # 0 = schedule-driven
    sa_temp_steps: int = 150
    delta: float = 0.05
    design_rule_bias: float = 0.5

    # cost weights
    w_outline: float = 4.0
    w_packing: float = 1.0
    w_wirelength: float = 1.0
    w_delay: float = 1.0
    w_temp: float = 1.0
    w_power: float = 1.0
    w_corr: float = 1.0
    w_entropy: float = 1.0

    # leakage metrics
    entropy_singleton: float = 0.5
    entropy_ratio: str = "inter/intra"

    # activity sampling, hardening, attack
    samples: int = 100
    sample_std: float = 0.10
    harden_target: str = "bottom"   # bottom | stack
    harden_radius: int = 2
    harden_max_steps: int = 200
    harden_tsv_budget: float = 0.05   # dummy TSVs per signal TSV inside the annealing flow
    focus_modules: str = ""
    attack_sigma: float = 3.0

    # synthesis, RNG, solver
    seed: int = 0
    total_power: float = 8.0
    solver: str = "direct"          # direct | sor
    solver_tol: float = 1e-6
    solver_max_iter: int = 50000

    def __post_init__(self):
        problems = []
        for f in dataclasses.fields(self):
            if f.name.startswith("w_") and getattr(self, f.name) < 0:
                problems.append(f"{f.name} must be >= 0")
        if not 0.0 < self.sa_cooling < 1.0:
            problems.append("sa_cooling must lie in (0, 1)")
        if self.samples < 2:
            problems.append("samples must be >= 2")
        if self.grid_nx < 2 or self.grid_ny < 2 or self.est_grid < 2:
            problems.append("grid dims must be >= 2")
        if self.entropy_ratio not in ("inter/intra", "intra/inter"):
            problems.append("entropy_ratio must be inter/intra or intra/inter")
        if self.solver not in ("direct", "sor"):
            problems.append("solver must be direct or sor")
        if self.harden_target not in ("bottom", "stack"):
            problems.append("harden_target must be bottom or stack")
        if self.sample_std < 0:
            problems.append("sample_std must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def outline(self) -> tuple[float, float]:
        return (self.outline_w, self.outline_h)

    @property
    def grid(self) -> tuple[int, int]:
        return (self.grid_nx, self.grid_ny)

    def replace(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_HINTS = typing.get_type_hints(EngineConfig)


def _coerce(name, raw, line):
    typ = _HINTS[name]
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name} ({typ.__name__})", line) from None


def parse_config(text: str, base: EngineConfig | None = None) -> EngineConfig:
    values = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _HINTS:
            raise ConfigError(f"unknown key {key!r}", no)
        values[key] = _coerce(key, val, no)
    return dataclasses.replace(base or EngineConfig(), **values)


def load_config(path) -> EngineConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: EngineConfig) -> str:
    lines = [f"{k} = {v}" for k, v in cfg.as_dict().items()]
    return "\n".join(lines) + "\n"
