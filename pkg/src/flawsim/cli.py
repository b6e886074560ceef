"""Command-line entry point: ``flawsim {gate,spectrum,shift,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, FlawSimError
from .experiment import RunConfig, run_gate_experiment, run_shift_scan, run_spectrum_scan, validate_gate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML (or JSON) run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="base seed, unsigned 64-bit")
    common.add_argument("--realizations", type=int, help="number of disorder realizations")
    common.add_argument("--threads", type=int, help="worker processes for gate cells")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="flawsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gate", parents=[common], help="purity and fidelity during the CNOT gate")
    sub.add_parser("spectrum", parents=[common], help="bath level-statistics scan")
    sub.add_parser("shift", parents=[common], help="canonical averages of the coupling operators")
    sub.add_parser("validate", parents=[common], help="check the pulse protocol")
    return p


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = RunConfig.from_file(args.config).to_dict()
    for key in ("seed", "realizations", "threads"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.out:
        data["output_dir"] = args.out
    return RunConfig.from_mapping(data)


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args)
    except (ConfigError, ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)

    try:
        if args.command == "gate":
            run = run_gate_experiment(cfg)
            summary = {"outputs": run.paths, "cells": len(run.cells), "failed": len(run.failures)}
            code = EXIT_PARTIAL if run.failures else EXIT_OK
        elif args.command == "spectrum":
            run = run_spectrum_scan(cfg)
            summary = {"outputs": run.paths,
                       "mean_r": {f"{J:g}": run.ensemble_mean(J) for J in run.mean_r if run.mean_r[J]}}
            code = EXIT_OK
        elif args.command == "shift":
            run = run_shift_scan(cfg)
            summary = {"outputs": run.paths,
                       "mean_abs": {f"{J:g}": {c: run.mean_abs(J, c) for c in ("bitflip", "phase")}
                                    for J, _ in run.sigma if run.sigma[J, "phase"]}}
            code = EXIT_OK
        else:
            summary = validate_gate(cfg, out_dir=cfg.output_dir)
            code = EXIT_OK if summary["ok"] else EXIT_RUNTIME
    except FlawSimError as exc:
        return _fail(EXIT_CONFIG if isinstance(exc, ValueError) else EXIT_RUNTIME, exc)
    except (OSError, MemoryError) as exc:
        return _fail(EXIT_RUNTIME, exc)
    print(json.dumps({"status": "ok" if code == EXIT_OK else "failed", **summary}, default=str))
    return code


if __name__ == "__main__":
    sys.exit(main())
