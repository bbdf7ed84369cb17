"""Command-line front end: config parsing, experiment dispatch, CSV output.

Exit status: 0 on success, 1 on usage/config/validation errors, 2 when an
experiment requires a feasible bound condition and the model violates it.
Diagnostics (resolved config, summary line) go to stderr; results go to
--out or stdout.
"""

import argparse
import os
import sys
import time

from . import experiments as exp
from .config import describe, parse_config
from .errors import (
    ConfigError,
    CorollaryInapplicable,
    InfeasibleModel,
    NoisyPcaError,
    ValidationError,
)
from .bounds import general_bound, rank_delta
from .experiments import bound_inputs, realize_model, with_overrides
from .model import row_occupancy, support_sequence

SEED_ENV_VAR = "NOISYPCA_SEED"

COMMANDS = (
    "bound",
    "bound-tightness",
    "phase-transition",
    "concentration",
    "rank-estimation",
    "adversarial",
    "refine",
    "missing",
)


class _Parser(argparse.ArgumentParser):
    # Usage errors (including unknown subcommands) exit 1, not argparse's
    # default 2; 2 is reserved for infeasible-model conditions.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="noisypca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="|".join(COMMANDS))
    for name in COMMANDS:
        p = sub.add_parser(name, add_help=True)
        p.add_argument("--config", required=True, help="config file path or preset name")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (does not change output bytes)")
        p.add_argument("--c", type=float, default=None, help="override the bound constant c")
        p.add_argument("--trials", type=int, default=None, help="override the trial count")
        if name == "bound":
            p.add_argument("--alpha", type=int, default=None, help="sample count (default: first grid value)")
    return parser


def _resolve_seed(flag_seed, config_seed):
    if flag_seed is not None:
        return int(flag_seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return 0


def _print_bound(cfg, alpha, out_path):
    model = realize_model(cfg)
    b = 0.0
    if model.sddn is not None:
        b = row_occupancy(support_sequence(model.n, model.sddn, alpha), model.n)
    inputs = bound_inputs(cfg, model, alpha, b)
    report = general_bound(inputs)
    delta = rank_delta(inputs)
    s = model.spectra
    pairs = [
        ("n", model.n),
        ("r", model.r),
        ("r_v", inputs.r_v),
        ("alpha", alpha),
        ("c", inputs.c),
        ("eta", inputs.eta),
        ("regime", inputs.regime),
        ("q", inputs.q),
        ("b", inputs.b),
        ("lambda_minus", s.lambda_minus),
        ("lambda_plus", s.lambda_plus),
        ("f", s.f),
        ("lambda_v_plus", s.lambda_v_plus),
        ("lambda_vP_minus", s.lambda_vP_minus),
        ("lambda_vrest_plus", s.lambda_vrest_plus),
        ("lambda_vPPperp", s.lambda_vPPperp),
        ("g", s.g),
        ("eps_bnd", report.eps_bnd),
        ("eps_den", report.eps_den),
        ("condition_slack", report.condition_slack),
        ("feasible", int(report.feasible)),
        ("se_bound", report.se_bound),
        ("delta", delta),
    ]
    for key, value in pairs:
        sys.stdout.write(f"{key}={exp._format_cell(value)}\n")
    result = exp.GridResult(
        tuple(k for k, _ in pairs), [tuple(v for _, v in pairs)]
    )
    result.write(out_path)
    return result


def _dispatch(args):
    cfg, config_seed = parse_config(args.config)
    seed = _resolve_seed(args.seed, config_seed)
    cfg = with_overrides(cfg, seed=seed, c=args.c, trials=args.trials)
    sys.stderr.write("# resolved config\n")
    for line in describe(cfg).splitlines():
        sys.stderr.write(f"# {line}\n")
    start = time.time()
    command = args.command
    if command == "bound":
        alpha = args.alpha if args.alpha is not None else cfg.alpha_grid[0]
        result = _print_bound(cfg, alpha, args.out)
    elif command == "bound-tightness":
        result = exp.bound_tightness(cfg, workers=args.workers)
        result.write(args.out)
    elif command == "phase-transition":
        result = exp.phase_transition(cfg, workers=args.workers)
        result.write(args.out)
    elif command == "concentration":
        result = exp.concentration_check(cfg, workers=args.workers)
        result.write(args.out)
    elif command == "rank-estimation":
        result = exp.rank_estimation(cfg, workers=args.workers)
        result.write(args.out)
    elif command == "adversarial":
        result = exp.adversarial_experiment(cfg)
        result.write(args.out)
    elif command == "refine":
        result = exp.refinement_loop(cfg)
        result.write(args.out)
    elif command == "missing":
        result = exp.missing_data_experiment(cfg, workers=args.workers)
        result.write(args.out)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown subcommand {command!r}")
    wall = time.time() - start
    sys.stderr.write(
        f"# rows={len(result.rows)} trials={cfg.n_trials} seed={cfg.master_seed} "
        f"workers={args.workers} wall={wall:.2f}s\n"
    )
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except (ConfigError, ValidationError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 1
    except (InfeasibleModel, CorollaryInapplicable) as err:
        sys.stderr.write(f"infeasible: {err}\n")
        return 2
    except NoisyPcaError as err:
        sys.stderr.write(f"error: {err}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
