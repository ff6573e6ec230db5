"""Command-line front end: floorplanning runs, the pattern sweep, hardening and
the localization attack, each writing its artifacts plus a run manifest.

Exit codes are 0 on success, 1 when the engine fails and 2 for usage or input
errors (argparse already exits with 2 on malformed flags).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bench_io
from .bench_io import GsrcParseError
from .config import ConfigError, EngineConfig, format_config, load_config
from .model import DomainError, Grid2D, grid_pitch

log = logging.getLogger("tsvshield")


class UsageError(Exception):
    """Bad flag values or unreadable inputs (exit code 2)."""


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)     # path -> sha256
    outputs: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def add(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, out_dir: Path, name: str = "manifest.json") -> None:
        path = out_dir / name
        self.outputs.append(str(path))
        path.write_text(json.dumps(bench_io._clean(self.__dict__), indent=2, sort_keys=True) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"--grid expects NX or NXxNY, got {text!r}") from None
    if len(dims) == 1:
        dims = (dims[0], dims[0])
    if len(dims) != 2 or min(dims) < 2:
        raise UsageError(f"--grid expects NX or NXxNY with sizes >= 2, got {text!r}")
    return dims


def _config(args) -> EngineConfig:
    cfg = EngineConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    changes = {}
    if getattr(args, "grid", None):
        changes["grid_nx"], changes["grid_ny"] = _parse_grid(args.grid)
    if getattr(args, "delta", None) is not None:
        if args.delta < 0:
            raise UsageError("--delta must be >= 0")
        changes["delta"] = args.delta
    if getattr(args, "moves", None) is not None:
        if args.moves < 0:
            raise UsageError("--moves must be >= 0")
        changes["sa_max_moves"] = args.moves
    return cfg.replace(**changes) if changes else cfg


def _require_files(*paths):
    for p in paths:
        if p and not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def _write_maps(out: Path, manifest: RunManifest, maps: dict) -> None:
    for name, grid in maps.items():
        path = manifest.add(out / f"{name}.csv")
        bench_io.write_grid_csv(grid, path)


def _thermal_maps(fp, cfg) -> dict:
    from .harden import correlations, tsv_density_values

    r1, r2, pmaps, res = correlations(fp, cfg)
    pitch = grid_pitch(fp.outline, cfg.grid)
    return {"power1": Grid2D(pmaps[0], pitch), "power2": Grid2D(pmaps[1], pitch),
            "temp1": res.t1, "temp2": res.t2,
            "tsv": Grid2D(tsv_density_values(fp, cfg.grid), pitch)}


def _threads() -> int:
    raw = os.environ.get("TSVSHIELD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"TSVSHIELD_THREADS must be an integer, got {raw!r}") from None


# ----------------------------------------------------------------------------
# floorplan

def _load_bundle(args):
    if args.blocks or args.nets:
        if not (args.blocks and args.nets):
            raise UsageError("--blocks and --nets must be given together")
        _require_files(args.blocks, args.nets, args.power, args.pl)
        bundle = bench_io.read_gsrc(args.blocks, args.nets, args.power, args.pl,
                                    total_power=args.total_power, seed=args.bench_seed)
        if args.scale != 1.0:
            bundle = bench_io.apply_scale(bundle, args.scale)
        inputs = {p: _sha256(p) for p in (args.blocks, args.nets, args.power, args.pl) if p}
        return bundle, inputs
    try:
        bundle = bench_io.load_bundled(args.bench, seed=args.bench_seed)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    return bundle, {f"bundled:{args.bench}": hashlib.sha256(
        (bundle.blocks_text + bundle.nets_text + (bundle.pl_text or "")).encode()).hexdigest()}


def report_json(report) -> str:
    """Report JSON without the wall-clock field, so reruns compare byte for byte."""
    d = report.as_dict()
    d.pop("runtime_s", None)
    return bench_io.dumps_report(d)


def _one_run(bundle, cfg, mode, seed):
    from .floorplan import anneal

    res = anneal(bundle, cfg, mode, seed=seed)
    return res.floorplan, res.report


AGGREGATE_FIELDS = ("r1", "r2", "r_mean", "s1", "s2", "power", "peak_temp", "wirelength_m",
                    "critical_delay", "volumes", "signal_tsvs", "dummy_tsvs")


def aggregate(reports) -> dict:
    out = {"runs": len(reports), "legal": sum(bool(r.legal) for r in reports)}
    for name in AGGREGATE_FIELDS:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[f"mean_{name}"] = float(np.mean(vals)) if vals else None
    return out


def cmd_floorplan(args) -> int:
    t0 = time.perf_counter()
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    cfg = _config(args)
    bundle, inputs = _load_bundle(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("floorplan", cfg.as_dict(), args.seed, inputs)
    seeds = [args.seed + k for k in range(args.runs)]
    workers = min(_threads(), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_run, [bundle] * len(seeds), [cfg] * len(seeds),
                                    [args.mode] * len(seeds), seeds))
    else:
        results = [_one_run(bundle, cfg, args.mode, s) for s in seeds]
    for seed, (fp, rep) in zip(seeds, results):
        run_dir = out / f"{args.mode}_seed{seed}"
        run_dir.mkdir(exist_ok=True)
        manifest.add(run_dir / "report.json").write_text(report_json(rep))
        bench_io.write_floorplan(fp, manifest.add(run_dir / "floorplan.fp"))
        _write_maps(run_dir, manifest, _thermal_maps(fp, cfg))
        log.info("%s seed %d: r1=%s r2=%s power=%.3f W legal=%s", args.mode, seed, rep.r1, rep.r2,
                 rep.power, rep.legal)
    agg = {"mode": args.mode, "seeds": seeds, **aggregate([r for _, r in results])}
    manifest.add(out / f"aggregate_{args.mode}.json").write_text(bench_io.dumps_report(agg))
    # the combined file keeps one entry per mode so pa and tsc runs can share a directory
    combined_path = out / "aggregate.json"
    combined = json.loads(combined_path.read_text()) if combined_path.is_file() else {}
    combined[args.mode] = agg
    manifest.add(combined_path).write_text(bench_io.dumps_report(combined))
    manifest.add(out / f"config_{args.mode}.txt").write_text(format_config(cfg))
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.write(out, f"manifest_{args.mode}.json")
    return 0


# ----------------------------------------------------------------------------
# sweep

def cmd_sweep(args) -> int:
    from .sweep import secondary_experiment_sweep, write_sweep_csv

    t0 = time.perf_counter()
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("sweep", cfg.as_dict(), None)
    report = secondary_experiment_sweep(cfg, keep_maps=not args.no_maps)
    write_sweep_csv(report, manifest.add(out / "sweep.csv"))
    for (pp, tp), maps in sorted(report.maps.items()):
        case = out / "maps" / f"{pp}__{tp}"
        case.mkdir(parents=True, exist_ok=True)
        _write_maps(case, manifest, maps)
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.write(out)
    return 0


# ----------------------------------------------------------------------------
# harden / attack

def _load_floorplan(args):
    if args.builtin:
        from .harden import hotspot_floorplan

        if args.builtin != "hotspot":
            raise UsageError(f"unknown built-in case {args.builtin!r}")
        return hotspot_floorplan(), {"builtin:hotspot": ""}
    if not args.floorplan:
        raise UsageError("give --floorplan PATH or --builtin hotspot")
    _require_files(args.floorplan)
    try:
        fp = bench_io.read_floorplan(args.floorplan)
    except GsrcParseError as exc:
        raise UsageError(f"cannot parse floorplan dump: {exc}") from None
    return fp, {args.floorplan: _sha256(args.floorplan)}


def _trace_dict(trace) -> dict:
    return {
        "start_r": trace.start_r,
        "steps": [{"x": isl.center[0], "y": isl.center[1], "count": isl.count, "r_mean": r}
                  for isl, r in trace.steps],
        "rejected": None if trace.rejected is None else {
            "x": trace.rejected[0].center[0], "y": trace.rejected[0].center[1],
            "r_mean": trace.rejected[1]},
        "stop_reason": trace.stop_reason,
        "r_values": trace.r_values,
    }


def cmd_harden(args) -> int:
    from .harden import stability_maps, harden

    t0 = time.perf_counter()
    cfg = _config(args)
    fp, inputs = _load_floorplan(args)
    focus = [s.strip() for s in args.focus.split(",") if s.strip()] if args.focus else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("harden", cfg.as_dict(), cfg.seed, inputs)
    before = _thermal_maps(fp, cfg)
    s1, _ = stability_maps(fp, cfg, cfg.grid)
    pitch = grid_pitch(fp.outline, cfg.grid)
    hardened, trace = harden(fp, cfg, focus)
    after = _thermal_maps(hardened, cfg)
    _write_maps(out, manifest, {f"before_{k}": v for k, v in before.items()})
    _write_maps(out, manifest, {f"after_{k}": v for k, v in after.items()})
    _write_maps(out, manifest, {"stability1": Grid2D(np.nan_to_num(s1.values), pitch)})
    manifest.add(out / "trace.json").write_text(bench_io.dumps_report(_trace_dict(trace)))
    bench_io.write_floorplan(hardened, manifest.add(out / "hardened.fp"))
    log.info("harden: %d islands, r_mean %s -> %s (%s)", trace.accepted, trace.start_r,
             trace.r_values[-1], trace.stop_reason)
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.write(out)
    return 0


def cmd_attack(args) -> int:
    from .harden import localize_attack

    t0 = time.perf_counter()
    targets = [s.strip() for s in (args.targets or "").split(",") if s.strip()]
    if not targets:
        raise UsageError("--targets needs at least one module id")
    cfg = _config(args)
    fp, inputs = _load_floorplan(args)
    known = {b.id for b in fp.blocks}
    missing = [t for t in targets if t not in known]
    if missing:
        raise UsageError(f"unknown target modules: {', '.join(missing)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("attack", cfg.as_dict(), cfg.seed, inputs)
    rep = localize_attack(fp, targets, cfg)
    pitch = grid_pitch(fp.outline, cfg.grid)
    manifest.add(out / "attack.json").write_text(bench_io.dumps_report(rep.as_dict()))
    _write_maps(out, manifest, {"delta1": Grid2D(rep.delta1, pitch),
                                "delta2": Grid2D(rep.delta2, pitch)})
    log.info("attack on %s: success=%s margin=%.4g K", ",".join(targets), rep.success, rep.margin)
    manifest.wall_time_s = time.perf_counter() - t0
    manifest.write(out)
    return 0


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsvshield",
                                description="Thermal side-channel aware 3D-IC floorplanning")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--grid", help="detailed grid, NX or NXxNY")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    f = sub.add_parser("floorplan", help="anneal a benchmark in pa or tsc mode")
    common(f)
    f.add_argument("--blocks")
    f.add_argument("--nets")
    f.add_argument("--power", help="optional per-module power file")
    f.add_argument("--pl", help="optional terminal placement file")
    f.add_argument("--scale", type=float, default=1.0, help="area scale factor for --blocks input")
    f.add_argument("--total-power", type=float, default=8.0,
                   help="total power when no power file is given (W)")
    f.add_argument("--bench", default="n100s", help="bundled benchmark when no files are given")
    f.add_argument("--bench-seed", type=int, default=0, help="seed for synthesized powers")
    f.add_argument("--mode", choices=("pa", "tsc"), required=True)
    f.add_argument("--runs", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--moves", type=int, help="SA move budget (0 = initial solution only)")
    f.add_argument("--delta", type=float, help="classical-cost slack of the final pick")
    f.set_defaults(func=cmd_floorplan)

    s = sub.add_parser("sweep", help="power x TSV pattern sweep")
    common(s)
    s.add_argument("--no-maps", action="store_true", help="skip the per-case map CSVs")
    s.set_defaults(func=cmd_sweep)

    for name, func, helptext in (("harden", cmd_harden, "insert dummy TSV islands"),
                                 ("attack", cmd_attack, "localization attack on target modules")):
        h = sub.add_parser(name, help=helptext)
        common(h)
        h.add_argument("--floorplan", help="floorplan dump")
        h.add_argument("--builtin", help="built-in case instead of a dump (hotspot)")
        if name == "harden":
            h.add_argument("--focus", help="restrict stability to these module ids")
        else:
            h.add_argument("--targets", required=True, help="comma-separated module ids")
        h.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, GsrcParseError) as exc:
        print(f"tsvshield: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"tsvshield: engine failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
