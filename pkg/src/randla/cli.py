"""Command-line harness.

Subcommands: gen (synthesize a matrix to Matrix Market), run (any driver
from a full config), and the per-family shortcuts leverage, trace, lowrank,
lstsq, qrcp, bootstrap, which default the driver and accept the same config
schema.

Exit codes: 0 on success, 2 on configuration errors, 3 if every trial of an
experiment failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import scipy.io

from . import bench
from .bench import ConfigError, DRIVERS, ExperimentConfig, MatrixSpec
from .rng import parse_seed_token

FAMILY_DEFAULTS = {
    "lstsq": ("spo1", ("spo1", "sps2", "sketch_and_solve", "nystrom_pcg",
                       "distortion", "precond_spectrum")),
    "lowrank": ("svd1", ("svd1", "qb2", "evd2", "osid1", "curd1")),
    "qrcp": ("sap_chol_qrcp", ("sap_chol_qrcp", "rand_chol_qr")),
    "trace": ("girard_hutchinson", ("girard_hutchinson", "hutch_pp", "slq")),
    "leverage": ("approx_leverage",
                 ("exact_leverage", "approx_leverage", "subspace_leverage",
                  "row_sample_embedding")),
    "bootstrap": ("bootstrap_ls", ("bootstrap_ls", "bootstrap_svd")),
}


def _add_common(parser):
    parser.add_argument("--config", required=True,
                        help="path to a JSON config file")
    parser.add_argument("--seed", default=None,
                        help="override the config seed (decimal or 0x-hex)")
    parser.add_argument("--out", default=None,
                        help="output path (base name for run reports)")
    parser.add_argument("--parallel", type=int, default=1, metavar="T",
                        help="run trials concurrently on T threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randla",
        description="randomized linear algebra benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic matrix")
    _add_common(gen)

    run = sub.add_parser("run", help="run an experiment config")
    _add_common(run)

    for name in FAMILY_DEFAULTS:
        p = sub.add_parser(name, help=f"run a {name} experiment")
        _add_common(p)
        p.add_argument("--driver", default=None,
                       help=f"driver within the {name} family")
    return parser


def _load_json(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path!r}: {err}") from err


def _experiment_from_args(args) -> ExperimentConfig:
    raw = _load_json(args.config)
    if args.command in FAMILY_DEFAULTS:
        default, allowed = FAMILY_DEFAULTS[args.command]
        driver = args.driver or raw.get("driver") or default
        if driver not in allowed:
            raise ConfigError(
                f"driver {driver!r} is not in the {args.command} family "
                f"{allowed}")
        raw = dict(raw, driver=driver)
    if args.seed is not None:
        raw = dict(raw, seed=parse_seed_token(args.seed))
    if args.out is not None:
        raw = dict(raw, out=args.out)
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            raw = _load_json(args.config)
            matrix = raw.get("matrix", raw)
            if args.seed is not None:
                matrix = dict(matrix, seed=parse_seed_token(args.seed))
            spec = MatrixSpec.from_dict(matrix)
            out = args.out or raw.get("out")
            if not out:
                raise ConfigError("gen needs --out (or 'out' in the config)")
            A = bench.gen_matrix(spec)
            scipy.io.mmwrite(out, A)
            print(f"wrote {spec.m}x{spec.n} matrix to {out}")
            return 0

        config = _experiment_from_args(args)
        rows, summary = bench.run_experiment(config, parallel=args.parallel)
        print(json.dumps(summary, indent=2, sort_keys=True))
        if config.trials > 0 and summary["completed"] == 0:
            return 3
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
