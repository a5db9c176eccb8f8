"""Command-line entry point.

    htssim run --scenario FILE --experiment NAME [--trials N] [--seed S] --out DIR
    htssim validate --scenario FILE

Exit status is 0 on success, 2 for usage errors, and the ``exit_code`` of the
raised :mod:`htssim.errors` class otherwise. Set ``HTSSIM_WORKERS`` to run
trials in a process pool.
"""

import argparse
import sys

from .errors import HtsError
from .experiments import Experiment
from .scenario import check_scenario, load_scenario


def _parser():
    p = argparse.ArgumentParser(prog="htssim", description="Multibeam HTS system/link simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--scenario", required=True)
    r.add_argument("--experiment", required=True, choices=[e.value for e in Experiment])
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, help="override HTSSIM_WORKERS")
    v = sub.add_parser("validate", help="list scenario problems without running")
    v.add_argument("--scenario", required=True)
    return p


def cmd_validate(args):
    issues = check_scenario(args.scenario)
    for issue in issues:
        print(f"{issue.kind.__name__}: {issue}")
    print(f"{len(issues)} issue{'s' if len(issues) != 1 else ''}")
    return 0 if not issues else 1


def cmd_run(args):
    from .results import run_to_dir

    if args.trials is not None and args.trials < 1:
        raise SystemExit("htssim: --trials must be positive")
    scenario = load_scenario(args.scenario)
    table, written = run_to_dir(scenario, args.experiment, args.out, args.trials, args.seed, args.workers)
    for path in written:
        print(path)
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return cmd_validate(args) if args.command == "validate" else cmd_run(args)
    except HtsError as exc:
        print(f"htssim: error [{exc.module}/{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
