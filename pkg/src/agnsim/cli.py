"""Command line entry point: single runs, sweep grids and trace comparison."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import GridSpec, parse_config
from .errors import ConfigError, DegenerateReport, ParseError
from .metrics import Trace, temporal_efficiency
from .sim import ExperimentConfig, RunResult, _fmt, run

log = logging.getLogger("agnsim")

SUMMARY_COLUMNS = (
    "n", "lambda", "strategy", "seed", "sim_time_to_finish", "final_train_accuracy",
    "final_train_loss", "mean_tau", "diverged", "halt_reason", "efficiency_vs_baseline", "run_id",
)


def manifest(config: ExperimentConfig) -> dict:
    return {"agnsim_version": __version__, "config": config.to_dict()}


def config_from_manifest(path) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    return ExperimentConfig.from_dict(doc["config"] if "config" in doc else doc)


def write_run(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(out_dir / "trace.csv")
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest(result.config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace_csv(path, metric: str = "train_accuracy") -> Trace:
    """Load ``(sim_time, metric)`` points from a trace CSV, skipping unevaluated rows."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "sim_time" not in reader.fieldnames or metric not in reader.fieldnames:
            raise ParseError(f"{path}: missing sim_time or {metric} column")
        for lineno, row in enumerate(reader, start=2):
            if row[metric] == "":
                continue
            try:
                points.append((float(row["sim_time"]), float(row[metric])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not points:
        raise ParseError(f"{path}: no {metric} samples")
    return Trace.from_points(points, metric)


def run_id(index: int, config: ExperimentConfig) -> str:
    return f"{index:03d}_n{config.n}_lam{config.strategy.lam}_{config.strategy.name}_seed{config.seed}"


def _execute(args):
    index, config, out_dir = args
    start = time.perf_counter()
    result = run(config)
    write_run(result, out_dir / "runs" / run_id(index, config))
    loss, acc = result.final_metrics()
    mean_tau = result.staleness()[0]
    return {
        "index": index,
        "n": config.n,
        "lambda": config.strategy.lam,
        "strategy": config.strategy.name,
        "seed": config.seed,
        "sim_time_to_finish": result.sim_time,
        "final_train_accuracy": acc,
        "final_train_loss": loss,
        "mean_tau": mean_tau,
        "diverged": result.diverged,
        "halt_reason": result.halt_reason,
        "run_id": run_id(index, config),
        "wall_clock_s": time.perf_counter() - start,
        "_traces": {m: _safe_trace(result, m) for m in ("train_accuracy", "train_loss")},
    }


def _safe_trace(result: RunResult, metric: str):
    try:
        tr = result.trace(metric)
    except ValueError:
        return None
    return tr if all(v == v for v in tr.values) else None


def run_grid(grid: GridSpec, out_dir, jobs: int = 1, wall_clock: bool = False) -> list[dict]:
    """Run every configuration of ``grid`` and write per-run CSVs plus ``summary.csv``.

    The summary is ordered by (n, lambda, strategy, seed) regardless of
    execution order. Agn rows carry E(agn, baseline) for the matching
    (n, lambda, seed) baseline run when one exists. Divergence is data, not
    an error.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(i, cfg, out_dir) for i, cfg in enumerate(grid.runs())]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_execute, tasks))
    else:
        rows = [_execute(t) for t in tasks]
    rows.sort(key=lambda r: (r["n"], r["lambda"], r["strategy"], r["seed"], r["index"]))

    for row in rows:
        row["efficiency_vs_baseline"] = None
        if row["strategy"] != "agn":
            continue
        mine = row["_traces"][grid.efficiency_metric]
        for other in rows:
            if (other is row or other["strategy"] != grid.baseline
                    or (other["n"], other["lambda"], other["seed"]) != (row["n"], row["lambda"], row["seed"])):
                continue
            theirs = other["_traces"][grid.efficiency_metric]
            if mine is not None and theirs is not None:
                try:
                    row["efficiency_vs_baseline"] = temporal_efficiency(mine, theirs).ratio
                except (DegenerateReport, ValueError) as exc:
                    log.warning("no efficiency for %s: %s", row["run_id"], exc)
            break

    columns = SUMMARY_COLUMNS + (("wall_clock_s",) if wall_clock else ())
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) if not isinstance(row[c], str) else row[c] for c in columns])
    for row in rows:
        row.pop("_traces")
    return rows


def _cmd_run(args) -> int:
    path = Path(args.config)
    if path.suffix == ".json":
        config = config_from_manifest(path)
        if args.seed is not None:
            config = config.__class__.from_dict({**config.to_dict(), "seed": args.seed})
    else:
        configs = parse_config(path, args.seed).runs()
        if len(configs) != 1:
            raise ConfigError(f"{path} defines {len(configs)} runs; use the grid subcommand")
        config = configs[0]
    result = run(config)
    out = Path(args.out)
    write_run(result, out)
    loss, acc = result.final_metrics()
    log.info("%d commits, sim time %g, final loss %.6g, accuracy %.4f, halt=%s",
             result.commits, result.sim_time, loss, acc, result.halt_reason)
    log.info("wrote %s", out / "trace.csv")
    return 0


def _cmd_grid(args) -> int:
    grid = parse_config(args.config, args.seed)
    rows = run_grid(grid, args.out, jobs=args.jobs, wall_clock=args.wall_clock)
    diverged = sum(bool(r["diverged"]) for r in rows)
    log.info("%d runs (%d diverged); summary in %s", len(rows), diverged, Path(args.out) / "summary.csv")
    return 0


def _cmd_validate(args) -> int:
    grid = parse_config(args.config, args.seed)
    runs = grid.runs()
    log.info("ok: %d run(s)", len(runs))
    if not args.quiet:
        print(json.dumps(manifest(runs[0]), indent=2, sort_keys=True))
    return 0


def _cmd_efficiency(args) -> int:
    a = read_trace_csv(args.trace_a, args.metric)
    b = read_trace_csv(args.trace_b, args.metric)
    report = temporal_efficiency(a, b)
    print(json.dumps({"m_shared": report.m_shared, "surface_a": report.surface_a,
                      "surface_b": report.surface_b, "ratio": report.ratio}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agnsim", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("config", help="YAML config (or, for run, a manifest.json)")
        p.add_argument("--seed", type=int, default=None, help="override the sweep seeds")
        if out:
            p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("run", help="execute a single-run config or a manifest")
    common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("grid", help="execute every run of a sweep")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.add_argument("--wall-clock", action="store_true", help="add a local wall_clock_s column to the summary")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("validate", help="check a config and print the first run's manifest")
    common(p, out=False)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("efficiency", help="temporal efficiency E(a, b) of two trace CSVs")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--metric", default="train_accuracy", choices=("train_accuracy", "train_loss"))
    p.set_defaults(func=_cmd_efficiency)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, DegenerateReport) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
