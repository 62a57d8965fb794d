"""Command-line entry point.

    lowrank sense --m 40 --n 40 --k 2 --solver stage --out runs/sense
    lowrank complete --p 0.35 --T 15 --out runs/complete
    lowrank probe-rip --m 10 --n 10 --k 1 --d 4000 --trials 200
    lowrank report --trace runs/sense/trace.csv

Options may also come from ``--config FILE`` (JSON with the same names,
dashes replaced by underscores); command-line flags win. ``LOWRANK_SEED``
sets the default seed.
"""

import argparse
import json
import sys

from . import io as lrio
from .errors import ConfigInvalid, LowRankError
from .harness import (
    PARTITION_SCHEMES,
    SENSING_SOLVERS,
    CompletionConfig,
    SensingConfig,
    convergence_report,
    default_seed,
    derive_seeds,
    make_config,
    measurement_count,
    run_completion_experiment,
    run_sensing_experiment,
)
from .operators import PRNG_NAME, estimate_rip_constant, gaussian_ensemble


def _common(p):
    p.add_argument("--config", help="JSON file with default values for the flags")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="lowrank", description="Alternating minimization for low-rank recovery")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sense", help="run a matrix-sensing experiment")
    _common(p)
    p.add_argument("--kappa", type=float)
    p.add_argument("--d-mult", type=float, help="d = d_mult * k * n * ceil(ln n)")
    p.add_argument("--noise-ratio", type=float, help="||N||_F / sigma_k")
    p.add_argument("--T", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--solver", choices=SENSING_SOLVERS)
    p.add_argument("--threshold", type=float)
    p.add_argument("--timing", action="store_true", default=None, help="record wall-clock times")
    p.add_argument("--save-operator", action="store_true", help="also write operator.txt to --out")
    p.add_argument("--out")

    p = sub.add_parser("complete", help="run a matrix-completion experiment")
    _common(p)
    p.add_argument("--kappa", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--partition", choices=PARTITION_SCHEMES)
    p.add_argument("--threshold", type=float)
    p.add_argument("--timing", action="store_true", default=None, help="record wall-clock times")
    p.add_argument("--observations", help="complete this triplet file instead of a generated problem")
    p.add_argument("--out")

    p = sub.add_parser("probe-rip", help="Monte-Carlo lower bound on a Gaussian ensemble's RIP constant")
    _common(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("report", help="summarize a trace CSV")
    p.add_argument("--trace", required=True)
    return parser


_NOT_CONFIG = {"command", "config", "out", "observations", "save_operator", "trace", "d", "trials"}


def _merged(args):
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    for key, val in vars(args).items():
        if key not in _NOT_CONFIG and val is not None:
            values[key] = val
    values.setdefault("seed", default_seed())
    return values


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sense":
            cfg = make_config(SensingConfig, _merged(args))
            report = run_sensing_experiment(cfg, out=args.out)
            if args.out and args.save_operator:
                d = measurement_count(cfg.k, cfg.n, cfg.d_mult)
                op = gaussian_ensemble(cfg.m, cfg.n, d, derive_seeds(cfg.seed, 3)[1])
                lrio.write_operator(f"{args.out}/operator.txt", op)
            _emit(report.to_dict())
        elif args.command == "complete":
            observations = lrio.read_observations(args.observations) if args.observations else None
            values = _merged(args)
            if observations is not None:
                values.update(m=observations.m, n=observations.n)
            cfg = make_config(CompletionConfig, values)
            _emit(run_completion_experiment(cfg, out=args.out, observations=observations).to_dict())
        elif args.command == "probe-rip":
            values = _merged(args)
            m, n, k = values.get("m", 10), values.get("n", 10), values.get("k", 1)
            op = gaussian_ensemble(m, n, args.d, values["seed"])
            delta = estimate_rip_constant(op, k, args.trials, values["seed"] + 1)
            _emit(
                {
                    "m": m,
                    "n": n,
                    "k": k,
                    "d": args.d,
                    "trials": args.trials,
                    "seed": values["seed"],
                    "prng": PRNG_NAME,
                    "rip_lower_bound": delta,
                    "note": "Monte-Carlo estimate; a lower bound on the true RIP constant",
                }
            )
        elif args.command == "report":
            _emit(convergence_report(lrio.read_trace(args.trace)))
    except ConfigInvalid as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (LowRankError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
