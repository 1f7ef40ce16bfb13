"""Command-line entry point: ``relpose simulate | replay | selftest``.

Exit codes: 0 success, 1 configuration error (or a failed selftest),
2 divergence in at least one trial, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .config import ConfigError, ExperimentConfig, parse_config, write_resolved
from .replay import replay
from .simulation import DIVERGENCE_NEES, InitSigmas, run_monte_carlo, summarize_nees, trial_seed

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3

SUMMARY_NAME = "summary.json"

log = logging.getLogger("relpose")


def _clean(x):
    """JSON-safe floats (NaN and infinities become null)."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _overrides(args) -> list[str]:
    out = list(args.set or [])
    if getattr(args, "trials", None) is not None:
        out.append(f"trials={args.trials}")
    if getattr(args, "seed", None) is not None:
        out.append(f"seed={args.seed}")
    if getattr(args, "compare_bias", False):
        out.append("compare_bias=true")
    return out


def _trial_entry(j, res, seed, transient):
    m = res.post_transient(transient)
    return {
        "trial": j,
        "seed": list(seed),
        "position_rmse": res.position_rmse,
        "diverged": res.diverged,
        "nees_post_transient": float(np.mean(res.nees[m])),
        "ranges": dict(sorted(res.range_stats.items())),
    }


def run_simulate(cfg: ExperimentConfig, export_log: bool = False) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    sim = cfg.sim_config()
    transient = sim.transient_fraction
    results = run_monte_carlo(sim, cfg.trials, cfg.seed, cfg.workers)
    seeds = [trial_seed(cfg.seed, j) for j in range(cfg.trials)]
    for j, res in enumerate(results):
        rio.write_truth_csv(out / f"truth_{j:03d}.csv", res)
        rio.write_estimate_csv(out / f"estimate_{j:03d}.csv", res)
        if export_log:
            rio.write_log(out / f"log_{j:03d}.csv", rio.log_rows_from_trial(res))
    nees = summarize_nees(results, transient)
    rio.write_nees_csv(out / "nees.csv", results, nees)
    summary = {
        "mode": "simulate",
        "trials": [_trial_entry(j, r, s, transient) for j, (r, s) in enumerate(zip(results, seeds))],
        "divergences": sum(r.diverged for r in results),
        "nees": {
            "dof": results[0].nees_dims,
            "mean_post_transient": nees.mean_post_transient,
            "lower": nees.lower,
            "upper": nees.upper,
            "consistent": nees.consistent,
            "fraction_inside": nees.fraction_inside,
        },
    }
    if cfg.compare_bias:
        base = run_monte_carlo(cfg.sim_config(bias_estimation=False), cfg.trials, cfg.seed, cfg.workers)
        for j, res in enumerate(base):
            rio.write_estimate_csv(out / f"estimate_nobias_{j:03d}.csv", res)
        with_b = [r.position_rmse for r in results]
        without_b = [r.position_rmse for r in base]
        summary["comparison"] = {
            "with_bias_rmse": with_b,
            "without_bias_rmse": without_b,
            "mean_with_bias_rmse": float(np.mean(with_b)),
            "mean_without_bias_rmse": float(np.mean(without_b)),
            "baseline_divergences": sum(r.diverged for r in base),
        }
    _write_json(out / SUMMARY_NAME, summary)
    for entry in summary["trials"]:
        print(f"trial {entry['trial']}: position RMSE {entry['position_rmse']:.4f} m"
              f"{'  DIVERGED' if entry['diverged'] else ''}")
    n = summary["nees"]
    print(f"average NEES after transient {n['mean_post_transient']:.3f} "
          f"(95% interval {n['lower']:.3f}..{n['upper']:.3f})")
    if cfg.compare_bias:
        c = summary["comparison"]
        print(f"mean RMSE with bias estimation {c['mean_with_bias_rmse']:.4f} m, "
              f"without {c['mean_without_bias_rmse']:.4f} m")
    print(f"outputs in {out}")
    return EXIT_DIVERGED if summary["divergences"] else EXIT_OK


def run_replay(cfg: ExperimentConfig, log_path) -> int:
    streams = rio.ingest_log(log_path)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    if streams.empty:
        _write_json(out / SUMMARY_NAME, {"mode": "replay", "epochs": 0})
        print("log is empty; nothing to replay")
        return EXIT_OK
    r = cfg.raw
    init = {k: v for k, v in r["init"].items() if k != "mode"}
    res = replay(streams, cfg.sim_config().settings, InitSigmas(**init), r["replay"]["neighbour_id"],
                 r["replay"]["neighbour_bias_gyr"])
    rio.write_estimate_csv(out / "estimate_replay.csv", res)
    finite = res.nees[np.isfinite(res.nees)]
    diverged = bool(np.any(res.nees >= DIVERGENCE_NEES))
    summary = {
        "mode": "replay",
        "epochs": len(res.t),
        "position_rmse": res.position_rmse,
        "mean_nees": float(np.mean(finite)) if len(finite) else None,
        "diverged": diverged,
        "ranges": dict(sorted(res.range_stats.items())),
        "gaps": [list(g) for g in streams.gaps],
    }
    _write_json(out / SUMMARY_NAME, summary)
    print(f"replayed {len(res.t)} epochs, position RMSE {res.position_rmse:.4f} m")
    return EXIT_DIVERGED if diverged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relpose", description="Relative pose estimation with preintegrated RMIs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run Monte Carlo simulation trials")
    s.add_argument("--config", required=True)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--compare-bias", action="store_true", help="also run the bias-ignoring filter")
    s.add_argument("--export-log", action="store_true", help="write each trial's sensor log")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    r = sub.add_parser("replay", help="run the filter over a recorded log")
    r.add_argument("--config", required=True)
    r.add_argument("--log", required=True)
    r.add_argument("--set", action="append", metavar="KEY=VALUE")

    t = sub.add_parser("selftest", help="run quick oracle checks")
    t.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        from .selftest import run
        return EXIT_OK if run(args.seed) else EXIT_CONFIG
    try:
        cfg = parse_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return run_simulate(cfg, args.export_log)
        return run_replay(cfg, args.log)
    except (OSError, rio.LogFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
