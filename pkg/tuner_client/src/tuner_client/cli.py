"""Command line for the remote tuner: settings from flags or tuner.toml."""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:          # python 3.10
    import tomli as tomllib

from .client import ServiceUnavailable
from .tuning import run_remote_tuning, write_report

DEFAULTS = {"endpoint": "http://127.0.0.1:8080", "engine": "colstar",
            "budget": 50, "seed": 7, "strategy": "random",
            "workload_k": 8, "out": "."}


def load_settings(argv=None) -> dict:
    parser = argparse.ArgumentParser(prog="qoaas-tuner")
    parser.add_argument("--config", help="tuner.toml settings file")
    parser.add_argument("--endpoint")
    parser.add_argument("--engine")
    parser.add_argument("--budget", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--strategy", choices=["random", "simple-surrogate"])
    parser.add_argument("--workload-k", type=int, dest="workload_k")
    parser.add_argument("--out")
    args = parser.parse_args(argv)

    settings = dict(DEFAULTS)
    if args.config:
        with open(args.config, "rb") as f:
            settings.update(tomllib.load(f))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def main(argv=None) -> int:
    settings = load_settings(argv)
    try:
        run = run_remote_tuning(
            endpoint=settings["endpoint"], engine=settings["engine"],
            budget=int(settings["budget"]), strategy=settings["strategy"],
            seed=int(settings["seed"]), workload_k=int(settings["workload_k"]))
    except ServiceUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    path = write_report(run, settings["out"])
    print(json.dumps({"report": str(path),
                      "baseline_objective": run.baseline_objective,
                      "best_objective": run.best_objective,
                      "improvement_pct": round(100 * run.improvement, 2)},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
