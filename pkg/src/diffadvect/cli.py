"""Command-line experiment runner.

Subcommands:

* ``run``           -- execute one configuration, write its artifacts
* ``sweep``         -- strong / weak / balance / param experiment families
* ``compare``       -- speedup table from summary.json files (CSV to stdout)
* ``export-curves`` -- re-emit a run's geometry file

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 round-cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .advect import export_curves, read_curves
from .balance import SCHEDULERS
from .config import RunConfig, apply_setting, load_config_file
from .errors import ConfigError, DiffAdvectError, InvariantError, RoundLimitError
from .field import AnalyticField
from .metrics import build_summary, speedup, write_lif_csv, write_rounds_csv, write_summary
from .runtime import RunResult, Simulator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_ROUND_CAP = 4

_STRONG_NODES = (2, 4, 8, 16)
_WEAK_LADDER = ((2, (8, 8, 8)), (4, (8, 8, 4)), (8, (8, 4, 4)), (16, (4, 4, 4)))
_PARAM_AXES = {
    "field": ("abc", "jets", "toroidal"),
    "aabb_scale": (0.25, 0.5, 1.0),
    "stride": ("8,8,8", "8,8,4", "8,4,4", "4,4,4"),
}


def _config_from_args(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        config = load_config_file(args.config, base=config)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        config = apply_setting(config, key, value)
    flag_keys = (
        "field", "resolution", "grid", "nodes", "scheduler", "aabb_scale",
        "stride", "step", "max_iterations", "particles_per_round", "alpha",
        "output", "export_curves",
    )
    for key in flag_keys:
        value = getattr(args, key, None)
        if value is not None:
            config = apply_setting(config, key, value)
    return config


def execute_run(config: RunConfig, out_dir: Path | None = None) -> tuple[RunResult, dict]:
    """Run one configuration and write its artifacts if a directory is given."""
    config.require_valid()
    field = AnalyticField(config.field, dict(config.field_params))
    sim = Simulator(
        field,
        config.resolution,
        config.grid_dims(),
        config.scheduler,
        step=config.step,
        max_iterations=config.max_iterations,
        particles_per_round=config.particles_per_round,
        aabb_scale=config.aabb_scale,
        stride=config.stride,
        alpha=config.alpha,
        collect_curves=config.export_curves,
    )
    result = sim.run()
    summary = build_summary(
        config.to_dict(),
        config.config_hash(),
        result.node_count,
        result.records,
        result.lif_rows,
        result.seed_count,
        result.terminated,
        result.exited,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rounds_csv(out_dir / "rounds.csv", result.records)
        write_lif_csv(out_dir / "lif.csv", result.lif_rows)
        write_summary(out_dir / "summary.json", summary)
        (out_dir / "config.txt").write_text(config.canonical_text(), encoding="utf-8")
        if config.export_curves and result.curves is not None:
            export_curves(out_dir / "curves.bin", result.curves, config_hash=config.config_hash())
    return result, summary


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    errors = config.validate()
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(config.output) if config.output else None
    result, summary = execute_run(config, out_dir)
    print(
        f"scheduler={config.scheduler} nodes={result.node_count} seeds={result.seed_count} "
        f"rounds={result.rounds} total_s={summary['total_advection_s']:.3f} "
        f"lockstep_steps={summary['lockstep_integrate_steps']}"
        + (f" -> {out_dir}" if out_dir else "")
    )
    return EXIT_OK


def _speedup_rows(summaries: list[dict]) -> list[str]:
    """CSV speedup table grouped by scheduler, baseline = fewest nodes."""
    groups: dict[str, dict[int, dict]] = {}
    for s in summaries:
        groups.setdefault(s["config"]["scheduler"], {})[int(s["node_count"])] = s
    lines = ["scheduler,node_count,total_advection_s,speedup"]
    for sched in sorted(groups):
        by_nodes = groups[sched]
        if len(by_nodes) >= 2:
            ratios = speedup({n: by_nodes[n]["total_advection_s"] for n in by_nodes})
        else:
            ratios = {n: 1.0 for n in by_nodes}
        for n in sorted(by_nodes):
            total = by_nodes[n]["total_advection_s"]
            lines.append(f"{sched},{n},{total:.6g},{ratios[n]:.6g}")
    return lines


def _cmd_compare(args) -> int:
    summaries = []
    for path in args.summaries:
        with open(path, "r", encoding="utf-8") as fh:
            summaries.append(json.load(fh))
    for line in _speedup_rows(summaries):
        print(line)
    return EXIT_OK


def _sweep_members(kind: str, base: RunConfig, axis: str | None):
    if kind == "strong":
        for nodes in _STRONG_NODES:
            for sched in SCHEDULERS:
                yield f"{sched}_n{nodes}", [("nodes", nodes), ("grid", None), ("scheduler", sched)]
    elif kind == "weak":
        for nodes, stride in _WEAK_LADDER:
            for sched in SCHEDULERS:
                yield (
                    f"{sched}_n{nodes}",
                    [("nodes", nodes), ("grid", None), ("scheduler", sched),
                     ("stride", ",".join(str(s) for s in stride))],
                )
    elif kind == "balance":
        for sched in SCHEDULERS:
            yield f"{sched}", [("scheduler", sched), ("aabb_scale", 0.5)]
    elif kind == "param":
        axis = axis or "aabb_scale"
        if axis not in _PARAM_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(_PARAM_AXES)}")
        for value in _PARAM_AXES[axis]:
            tag = str(value).replace(",", "x")
            for sched in SCHEDULERS:
                yield f"{sched}_{axis}-{tag}", [(axis, value), ("scheduler", sched)]
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")


def _cmd_sweep(args) -> int:
    base = _config_from_args(args)
    out_root = Path(base.output) if base.output else Path(f"sweep_{args.kind}")
    out_root.mkdir(parents=True, exist_ok=True)
    summaries = []
    for name, settings in _sweep_members(args.kind, base, getattr(args, "axis", None)):
        member = base
        for key, value in settings:
            if key == "grid" and value is None:
                member = replace(member, grid=None)
                continue
            member = apply_setting(member, key, value)
        errors = member.validate()
        if errors:
            for err in errors:
                print(f"config error [{name}]: {err}", file=sys.stderr)
            return EXIT_CONFIG
        run_dir = out_root / name
        print(f"[sweep {args.kind}] {name} ...", flush=True)
        _, summary = execute_run(member, run_dir)
        summaries.append(summary)
    table = _speedup_rows(summaries)
    table_path = out_root / ("speedup.csv" if args.kind in ("strong", "weak") else "comparison.csv")
    table_path.write_text("\n".join(table) + "\n", encoding="utf-8")
    for line in table:
        print(line)
    return EXIT_OK


def _cmd_export_curves(args) -> int:
    src = Path(args.run) / "curves.bin"
    if not src.exists():
        raise ConfigError(f"no curves.bin under {args.run}; run with export_curves = true")
    header, curves = read_curves(src)
    export_curves(args.out, {int(p): curves[int(p)] for p in header["particle_ids"]},
                  config_hash=header.get("config_hash"))
    print(f"wrote {args.out}: {header['particle_count']} curves")
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--field", choices=("abc", "jets", "toroidal"))
    parser.add_argument("--resolution", help="voxels per axis, e.g. 64 or 64,64,64")
    parser.add_argument("--grid", help="ranks per axis, e.g. 2,2,2")
    parser.add_argument("--nodes", type=int, help="rank count (factored into a near-cubic grid)")
    parser.add_argument("--scheduler", choices=SCHEDULERS)
    parser.add_argument("--aabb-scale", dest="aabb_scale", type=float)
    parser.add_argument("--stride", help="seed stride per axis, e.g. 4,4,4")
    parser.add_argument("--step", type=float)
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)
    parser.add_argument("--particles-per-round", dest="particles_per_round", type=int)
    parser.add_argument("--alpha", type=float, help="constant-diffusion parameter")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--export-curves", dest="export_curves", choices=("true", "false"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffadvect")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configuration")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run an experiment family")
    p_sweep.add_argument("--kind", required=True, choices=("strong", "weak", "balance", "param"))
    p_sweep.add_argument("--axis", choices=sorted(_PARAM_AXES), help="axis for --kind param")
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="speedup table from summary.json files")
    p_cmp.add_argument("summaries", nargs="+")
    p_cmp.set_defaults(func=_cmd_compare)

    p_exp = sub.add_parser("export-curves", help="re-emit a run's geometry file")
    p_exp.add_argument("--run", required=True, help="run output directory")
    p_exp.add_argument("--out", required=True, help="destination file")
    p_exp.set_defaults(func=_cmd_export_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RoundLimitError as exc:
        print(f"round cap exceeded: {exc}", file=sys.stderr)
        return EXIT_ROUND_CAP
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except DiffAdvectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
