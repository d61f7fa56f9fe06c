"""Command-line entry points: run simulations, report metrics."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .harness import (
    MetricsSummary,
    ScenarioConfig,
    emit_results,
    run_monte_carlo,
    summarize,
)


def _load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path!r} is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.runs is not None or args.seed is not None:
        mc = cfg.monte_carlo
        runs = args.runs if args.runs is not None else mc.runs
        seed = args.seed if args.seed is not None else mc.base_seed
        overrides["monte_carlo"] = type(mc)(runs, seed)
    if overrides:
        cfg = cfg.replace(**overrides)
    results, summary = run_monte_carlo(cfg, n_workers=args.workers)
    csv_path = emit_results(results, summary, cfg, args.out)
    print(f"wrote {csv_path}")
    print(f"median error: {summary.median_error:.4f} m  "
          f"mean error: {summary.mean_error:.4f} m")
    return 0


def _read_runs(csv_path: str):
    try:
        data = np.genfromtxt(csv_path, delimiter=",", names=True)
    except OSError as exc:
        raise OSError(f"cannot read {csv_path!r}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"{csv_path!r} holds no rows")
    return np.atleast_1d(data)


def _cmd_report(args) -> int:
    csv_path = os.path.join(args.in_dir, "runs.csv")
    data = _read_runs(csv_path)
    quantiles = [float(q) for q in args.quantiles.split(",") if q]
    errors = np.sort(data["error_m"])
    run_ids = data["run_id"].astype(int)
    runs = np.unique(run_ids)
    entropy = np.vstack([data["entropy_nats"][run_ids == r] for r in runs])
    carrier = np.vstack([data["fc_hz"][run_ids == r] for r in runs])
    summary = MetricsSummary(
        errors,
        {f"{q:g}": float(np.quantile(errors, q)) for q in quantiles},
        float(errors.mean()),
        float(np.median(errors)),
        entropy.mean(axis=0),
        entropy.std(axis=0),
        carrier.mean(axis=0),
    )
    print(f"{len(runs)} runs, {errors.size} steps total")
    print(f"{'quantile':>10} {'error [m]':>12}")
    for name, value in summary.quantiles.items():
        print(f"{name:>10} {value:>12.4f}")
    print(f"{'mean':>10} {summary.mean_error:>12.4f}")
    with open(os.path.join(args.in_dir, "summary.json"), "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogmint",
        description="Cognitive multipath-assisted indoor positioning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run Monte Carlo simulations")
    sim.add_argument("--config", required=True, help="scenario JSON file")
    sim.add_argument("--runs", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None, help="base seed")
    sim.add_argument("--mode", choices=["fixed", "cognitive"], default=None)
    sim.add_argument("--out", default="results", help="output directory")
    sim.add_argument("--workers", type=int, default=1)
    sim.set_defaults(func=_cmd_simulate)

    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--quantiles", default="0.5,0.9,0.95")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as a clean diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
