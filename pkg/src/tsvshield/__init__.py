"""tsvshield: thermal side-channel aware floorplanning for two-die 3D ICs.

The package estimates how strongly on-chip temperatures reveal module power
(per-die Pearson correlation and spatial entropy of the power maps), anneals
floorplans that trade that leakage against classical costs, and hardens
finished layouts with dummy thermal TSV islands.
"""
from .config import EngineConfig, load_config, parse_config
from .model import BlockModule, Floorplan, Grid2D, Net, Terminal, TsvIsland, VoltageVolume

__version__ = "0.1.0"

__all__ = [
    "BlockModule",
    "EngineConfig",
    "Floorplan",
    "Grid2D",
    "Net",
    "Terminal",
    "TsvIsland",
    "VoltageVolume",
    "load_config",
    "parse_config",
]
