"""Command-line driver.

``otfs-lab run <config>`` executes a configured Monte Carlo experiment;
``otfs-lab analyze coding-gain|bounds`` evaluates the closed-form analysis
helpers; ``otfs-lab isac sense|fer <scenario>`` runs the sensing pipeline.
Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from otfs_lab.harness.config import ConfigError, ExperimentConfig
from otfs_lab.harness.runner import emit, run

logger = logging.getLogger("otfs_lab")


def _default_jobs() -> int:
    env = os.environ.get("OTFS_LAB_JOBS")
    return int(env) if env else 1


def _add_run(sub):
    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("config", help="YAML/JSON experiment file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=None)


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="closed-form analysis helpers")
    p.add_argument("what", choices=("coding-gain", "bounds"))
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--paths", type=int, default=2)
    p.add_argument("--l-max", type=int, default=2)
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--error-weight", type=int, default=3)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--es-n0-db", type=float, default=10.0)


def _add_isac(sub):
    p = sub.add_parser("isac", help="sensing / communication experiments")
    p.add_argument("what", choices=("sense", "fer"))
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--snr-db", type=float, nargs="+", default=[5.0])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--allocation", choices=("radar", "equal"), default="radar")
    p.add_argument("--no-precoding", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=None)


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.jobs is not None:
        config.jobs = args.jobs
    elif config.jobs == 1:  # env var supplies the default parallelism
        config.jobs = _default_jobs()
    table = run(config)
    text = emit(table, args.out, args.format)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _cmd_analyze(args) -> int:
    from otfs_lab.analysis import (
        average_coding_gain,
        codeword_difference_matrix,
        eigen_product_bounds,
    )
    from otfs_lab.transforms import FrameParams

    frame = FrameParams(args.m, args.n)
    rng = np.random.default_rng(args.seed)
    e = np.zeros(frame.mn, dtype=complex)
    e[: args.error_weight] = 2.0
    if args.what == "coding-gain":
        gain = average_coding_gain(
            e, frame, args.paths, args.l_max, args.k_max, args.trials, rng
        )
        print(
            json.dumps(
                {
                    "d_e2": 4.0 * args.error_weight,
                    "p": args.paths,
                    "avg_coding_gain_db": gain,
                    "bound_db": 10.0 * np.log10(4.0 * args.error_weight / args.paths),
                }
            )
        )
        return 0
    omega_tau = rng.integers(0, args.l_max + 1, size=args.paths)
    omega_nu = rng.integers(-args.k_max, args.k_max + 1, size=args.paths)
    cdm = codeword_difference_matrix(e, omega_tau, omega_nu, frame)
    record = eigen_product_bounds(cdm)
    record.update(
        d_e2=cdm.d_e2,
        rank=cdm.rank,
        eigenvalues=[float(v) for v in cdm.eigenvalues],
        delay_indices=[int(v) for v in omega_tau],
        doppler_indices=[int(v) for v in omega_nu],
    )
    print(json.dumps(record))
    return 0


def _cmd_isac(args) -> int:
    config = ExperimentConfig.from_dict(
        {
            "experiment": "isac_sensing" if args.what == "sense" else "isac_fer",
            "scenario": args.scenario,
            "snr_db": list(args.snr_db),
            "trials": args.trials,
            "seed": args.seed,
            "jobs": args.jobs if args.jobs is not None else _default_jobs(),
            "power_allocation": args.allocation,
            "precoding": not args.no_precoding,
            "detector": {"iterations": args.frames},
        }
    )
    table = run(config)
    text = emit(table, args.out, args.format)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("OTFS_LAB_LOG", "WARNING"))
    parser = argparse.ArgumentParser(prog="otfs-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_analyze(sub)
    _add_isac(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_isac(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
