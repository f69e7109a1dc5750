"""Command-line harness: simulate, run, ablate, report.

Exit codes: 0 ok, 2 configuration error, 3 I/O error (including refusing to
overwrite existing outputs without --overwrite), 4 numerical failure across
all seeds.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import (
    DEFAULT_CONFIG_TEXT,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .datagen import write_dataset
from .evalharness import (
    DeltaEstimate,
    HarnessError,
    SeedResult,
    run_ablation,
    run_experiment,
    summarize_results,
)

RESULTS_HEADER = "seed,model,mse,snr,correlation,delta_hat,theta1,theta2,lambda,gamma,wall_ms"


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def results_rows(results: list[SeedResult]) -> list[str]:
    rows = []
    for r in results:
        if r.error is not None:
            continue
        cells = [
            str(r.seed),
            r.model,
            _fmt_cell(r.mse),
            _fmt_cell(r.snr),
            _fmt_cell(r.correlation),
            _fmt_cell(r.delta.delta_hat if r.delta else None),
            _fmt_cell(r.params.get("theta1")),
            _fmt_cell(r.params.get("theta2")),
            _fmt_cell(r.params.get("lam")),
            _fmt_cell(r.params.get("gamma")),
            _fmt_cell(r.wall_ms),
        ]
        rows.append(",".join(cells))
    return rows


def write_results_csv(path: Path, results: list[SeedResult]) -> None:
    path.write_text(RESULTS_HEADER + "\n" + "".join(row + "\n" for row in results_rows(results)), encoding="utf-8")


def read_results_csv(path: Path) -> list[SeedResult]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise ValueError(f"{path} does not look like a results CSV")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        seed, model = int(cells[0]), cells[1]
        floats = [float(c) if c else None for c in cells[2:]]
        mse, snr, corr, delta_hat, theta1, theta2, lam, gamma, wall = floats
        params = {k: v for k, v in (("theta1", theta1), ("theta2", theta2), ("lam", lam), ("gamma", gamma)) if v is not None}
        delta = None
        if delta_hat is not None:
            delta = DeltaEstimate(delta_hat=delta_hat, standard_error=0.0, m=0, n_test=0)
        out.append(
            SeedResult(
                seed=seed, model=model, mse=mse, snr=snr, correlation=corr,
                delta=delta, wall_ms=wall, params=params,
            )
        )
    return out


def _print_summary_table(summary: dict) -> None:
    print(f"{'model':<20}{'mse':>12}{'snr':>12}{'corr':>12}{'seeds':>8}")
    for name, stats in summary["models"].items():
        mse, snr, corr = stats["mse"], stats["snr"], stats["correlation"]

        def cell(ms):
            return "-" if ms["mean"] is None else f"{ms['mean']:.4f}"

        print(f"{name:<20}{cell(mse):>12}{cell(snr):>12}{cell(corr):>12}{stats['n_seeds']:>8}")
    for name, stats in summary.get("delta", {}).items():
        mean = stats["mean"]
        print(f"{name:<20}{mean if mean is None else f'{mean:.5f}':>12}")
    if summary.get("n_failed"):
        print(f"failed rows: {summary['n_failed']}")


def _resolve_out(args, config: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.output.root()) / config.name


def _apply_global_flags(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed_offset", 0):
        config = replace(config, seeds=tuple(s + args.seed_offset for s in config.seeds))
    if getattr(args, "jobs", None) is not None:
        config = replace(config, jobs=args.jobs)
    return config


def _check_targets(paths: list[Path], overwrite: bool) -> None:
    if overwrite:
        return
    for p in paths:
        if p.exists():
            raise FileExistsError(f"output {p} exists; pass --overwrite to replace it")


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    config = _apply_global_flags(config, args)
    outdir = _resolve_out(args, config)
    from .evalharness import _build_dataset

    dataset = _build_dataset(config, config.seeds[0])
    outdir.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, outdir, overwrite=args.overwrite)
    print(f"wrote dataset for seed {config.seeds[0]} to {outdir}")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    config = _apply_global_flags(config, args)
    outdir = _resolve_out(args, config)
    csv_path = outdir / "results.csv"
    json_path = outdir / "summary.json"
    targets = [p for p, fmt in ((csv_path, "csv"), (json_path, "json")) if fmt in config.output.formats]
    _check_targets(targets, args.overwrite)
    results, summary = run_experiment(config)
    outdir.mkdir(parents=True, exist_ok=True)
    if "csv" in config.output.formats:
        write_results_csv(csv_path, results)
    if "json" in config.output.formats:
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_summary_table(summary)
    return 0


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    config = _apply_global_flags(config, args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be a comma list of integers, got {args.values!r}")
    if not values:
        raise ConfigError("--values is empty")
    outdir = _resolve_out(args, config)
    long_path = outdir / f"ablation_{args.axis}.csv"
    summary_paths = [outdir / f"summary_{args.axis}_{v}.json" for v in values]
    _check_targets([long_path] + summary_paths, args.overwrite)
    sweeps = run_ablation(config, args.axis, values)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["axis,value,model,metric,mean,std"]
    for value, _results, summary in sweeps:
        for model, stats in summary["models"].items():
            for metric in ("mse", "snr", "correlation"):
                ms = stats[metric]
                lines.append(
                    f"{args.axis},{value},{model},{metric},{_fmt_cell(ms['mean'])},{_fmt_cell(ms['std'])}"
                )
        for model, stats in summary.get("delta", {}).items():
            lines.append(
                f"{args.axis},{value},{model},delta_hat,{_fmt_cell(stats['mean'])},{_fmt_cell(stats['std'])}"
            )
    long_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    for (value, _results, summary), path in zip(sweeps, summary_paths):
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"{args.axis}={value}: wrote {path.name}")
    print(f"wrote {long_path}")
    return 0


def cmd_report(args) -> int:
    results_path = Path(args.results)
    if not results_path.exists():
        raise FileNotFoundError(f"no results file at {results_path}")
    results = read_results_csv(results_path)
    summary = summarize_results(results)
    out = Path(args.out) if args.out else results_path.parent
    json_path = out / "report.json"
    _check_targets([json_path], args.overwrite)
    out.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_summary_table(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colliderreg",
        description="Collider-constrained regression benchmark harness",
        epilog="Default configuration:\n\n" + DEFAULT_CONFIG_TEXT,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("config", help="path to an INI experiment configuration")
        p.add_argument("--out", default=None, help="output directory (default: <output root>/<name>)")
        p.add_argument("--overwrite", action="store_true", help="replace existing outputs")
        p.add_argument("--seed-offset", type=int, default=0, dest="seed_offset", help="shift every seed")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (overrides config)")

    p_sim = sub.add_parser("simulate", help="generate and write one dataset")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run the seeded experiment")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_abl = sub.add_parser("ablate", help="sweep one generator axis")
    common(p_abl)
    p_abl.add_argument("--axis", required=True, choices=("n_train", "n_semi", "d2"))
    p_abl.add_argument("--values", required=True, help="comma list of axis values")
    p_abl.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="re-summarize an existing results CSV")
    common(p_rep, needs_config=False)
    p_rep.add_argument("--results", required=True, help="path to results.csv")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileExistsError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except HarnessError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
