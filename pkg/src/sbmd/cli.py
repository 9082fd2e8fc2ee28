"""``sbmd`` command-line interface.

Exit codes: 0 success, 1 configuration or argument error, 2 failed check
(or failed trial), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .analysis import BOUND_KINDS, BoundSpec, bound_value
from .config import load_config
from .errors import ConfigError, SBMDError, TrialFailure
from .experiment import run_experiment
from .problems import ZOO
from .verify import run_checks

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sbmd", description="Stochastic block mirror descent experiments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a configured multi-trial experiment")
    run.add_argument("config", help="path to the experiment config (INI)")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--strict", action="store_true", help="exit 2 if a dominance or slope flag fails")

    ver = sub.add_parser("verify", help="run the oracle verification suite")
    ver.add_argument("--prox-cases", type=int, default=100)
    ver.add_argument("--draws", type=int, default=20_000, help="Monte Carlo draws per unbiasedness point")

    sub.add_parser("list-problems", help="list the test-problem zoo")

    bnd = sub.add_parser("bound", help="evaluate a theoretical bound")
    bnd.add_argument("kind", choices=BOUND_KINDS)
    bnd.add_argument("--n", type=int, required=True, dest="N", help="iteration count N")
    bnd.add_argument("--b", type=int)
    bnd.add_argument("--D", type=_floats, help="comma-separated per-block D_i")
    bnd.add_argument("--M", type=_floats, help="comma-separated per-block M_i")
    bnd.add_argument("--D-tilde", type=float, dest="D_tilde")
    bnd.add_argument("--Q", type=float)
    bnd.add_argument("--mu", type=float)
    bnd.add_argument("--L-bar", type=float, dest="L_bar")
    bnd.add_argument("--sigma", type=float, help="aggregate noise level sqrt(sum sigma_i^2)")
    bnd.add_argument("--k0", type=int)
    bnd.add_argument("--delta", type=float, dest="Delta", help="initial gap phi(x1) - phi*")
    bnd.add_argument("--V", type=float, help="sum_i V_i(x1, x*)")
    bnd.add_argument("--lam", type=float, help="tail parameter")
    bnd.add_argument("--T", type=int, help="minibatch size")
    return ap


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    env_seed = os.environ.get("SBMD_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            print(f"config error: SBMD_SEED must be an integer, got {env_seed!r}", file=sys.stderr)
            return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        csv_path, json_path = run_experiment(cfg, args.out, jobs=args.jobs)
    except TrialFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as e:
        print(f"error: cannot write results: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    with open(json_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    for e in summary["per_N"]:
        se = "n/a" if e["se"] is None else f"{e['se']:.4g}"
        bound = "n/a" if e["bound"] is None else f"{e['bound']:.4g}"
        print(f"N={e['N']:>6}  mean {e['metric']} {e['mean']:.4g} (se {se})  bound {bound}  ok={e['dominance_pass']}")
    if summary["rate_fit"]:
        print(f"slope {summary['rate_fit']['slope']:.3f} +/- {summary['rate_fit']['slope_se']:.3f}")
    checks = summary["checks"]
    if args.strict and (checks["dominance"] is False or checks["slope_in_range"] is False):
        return EXIT_CHECK
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(prox_cases=args.prox_cases, mc_draws=args.draws)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_list(_args) -> int:
    for name, (factory, desc) in ZOO.items():
        print(f"{name}  {desc}  ({factory.__name__})")
    return EXIT_OK


def cmd_bound(args) -> int:
    fields = ("b", "D", "M", "D_tilde", "Q", "mu", "L_bar", "sigma", "k0", "Delta", "V", "lam", "T")
    kw = {f: getattr(args, f) for f in fields if getattr(args, f) is not None}
    try:
        value = bound_value(BoundSpec(args.kind, **kw), args.N)
    except SBMDError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(repr(value))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "verify": cmd_verify, "list-problems": cmd_list, "bound": cmd_bound}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
