"""Command-line entry point: ``queuelearn <subcommand> [options]``.

Every subcommand accepts ``--seed``, ``--reps``, ``--out`` and ``--config``.
A config file holds ``key=value`` lines using the long option names
(dashes or underscores); options given on the command line take precedence.
Exit status is 0 on success, 2 for usage errors and 3 when a run trips one
of the library's runtime checks.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exceptions import InfeasibleThreshold, NonSeparable, NotApproachable, NotSupercritical
from .harness import ExperimentSpec, UsageError, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
RUNTIME_ERRORS = (NotApproachable, NonSeparable, InfeasibleThreshold, NotSupercritical,
                  AssertionError, ArithmeticError, OverflowError)

OPTIONS = {
    "blackwell": [
        ("--tensor", dict(help="payoff tensor file (default: rock-paper-scissors losses, 1-dim)")),
        ("--target", dict(help="orthant | singleton:x,.. | halfspace:n,..;v | box:lo,..;hi,.. | value")),
        ("--adversary", dict(default="random", help="constant | cyclic | best_response | random | counter_last")),
        ("--action", dict(type=int, default=0, help="start action for constant/cyclic adversaries")),
        ("--T", dict(type=int, default=1000, help="rounds per replication")),
    ],
    "regret": [
        ("--rewards", dict(help="reward matrix file (default: rock-paper-scissors)")),
        ("--adversary", dict(default="random", help="constant | cyclic | best_response | random | counter_last")),
        ("--action", dict(type=int, default=0)),
        ("--T", dict(type=int, default=10_000)),
    ],
    "maxweight": [
        ("--schedules", dict(help="schedule file, one vector per line (default: 2-queue crossbar)")),
        ("--arrivals", dict(default="bernoulli:0.4,0.4", help="bernoulli:r1,r2,...")),
        ("--policy", dict(default="mw", help="mw | wmw | fmw-square | fmw-log | random")),
        ("--mu", dict(help="service success probabilities, comma separated")),
        ("--T", dict(type=int, default=10_000)),
        ("--every", dict(type=int, default=1, help="write every k-th slot")),
    ],
    "lindley": [
        ("--p", dict(type=int, default=2, help="context dimension")),
        ("--D", dict(type=float, default=1.0, help="context norm bound")),
        ("--w-norm", dict(type=float, default=2.0, help="norm of the separating vector")),
        ("--tau-star", dict(type=float, default=0.5)),
        ("--tau-0", dict(type=float, default=1.0)),
        ("--rate", dict(type=float, default=1.2, help="arrival rate")),
        ("--alpha", dict(type=float, default=1.0, help="perceptron step size")),
        ("--T", dict(type=int, default=1000, help="customers")),
    ],
    "admission": [
        ("--lam", dict(help="arrival rate(s), comma separated")),
        ("--load", dict(help="normalized load(s) (lambda-p)/(1-p), used when --lam is absent")),
        ("--p", dict(type=float, default=0.3, help="diversion budget")),
        ("--L", dict(help="lookahead window, a number or 'inf' (default a*log(1/(1-load)))")),
        ("--a", dict(type=float, default=2.0, help="window coefficient when --L is absent")),
        ("--policy", dict(default="all", help="threshold | greedy | windowed | all")),
        ("--k", dict(type=int, help="threshold (default: smallest feasible)")),
        ("--horizon", dict(type=float, default=1e5)),
        ("--slack", dict(type=float, default=0.05)),
    ],
    "balance": [
        ("--n", dict(default="100", help="server count(s), comma separated")),
        ("--lam", dict(type=float, default=0.7, help="per-server load")),
        ("--r", dict(type=float, default=1.0, help="message rate per idle server")),
        ("--c", dict(type=int, default=2, help="memory slots")),
        ("--regime", dict(help="high_message | high_memory | constrained (overrides --r/--c)")),
        ("--arm", dict(default="above", help="high_memory arm: above | below")),
        ("--horizon", dict(type=float, default=1000.0)),
    ],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="queuelearn", description="Learning and information in queueing experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, options in OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--reps", type=int, default=1)
        sp.add_argument("--out", help="output CSV (default <subcommand>.csv)")
        sp.add_argument("--config", help="key=value file; command-line options win")
        for flag, kw in options:
            sp.add_argument(flag, **kw)
    return parser


def read_config(path):
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sp._actions}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for key, value in values.items():
            action = known[key]
            defaults[key] = action.type(value) if action.type else value
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse(argv)
        params = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "reps", "out", "config")}
        spec = ExperimentSpec(args.command, params, args.reps, args.seed, args.out)
        out, summary = run_experiment(spec)
    except RUNTIME_ERRORS as exc:
        print(f"queuelearn: runtime check failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ValueError, OSError) as exc:
        print(f"queuelearn: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {out} and {summary}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
