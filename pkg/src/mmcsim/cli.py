"""Command-line entry point: ``run``, ``sweep`` and ``repro-table5``."""
from __future__ import annotations

import argparse
import sys

from .scenario import ConfigError, builtin, load_config, repro_table5, run_scenario, sweep_criteria

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_WRONG_SM = 4


def _fmt(v, spec=".1f"):
    return "-" if v is None else format(v, spec)


def _exit_code(summary, self_check=True):
    if summary["status"] == "diverged":
        return EXIT_DIVERGED
    if self_check and summary.get("self_check_passed") is False:
        return EXIT_WRONG_SM
    return EXIT_OK


def cmd_run(args):
    base = builtin(args.scenario) if args.scenario else None
    if args.config is None and base is None:
        raise ConfigError("run needs a config file, --scenario NAME, or both")
    cfg = base if args.config is None else load_config(args.config, base)
    summary = run_scenario(cfg, args.out)
    loc = summary["location"]
    print(f"{summary['scenario']}: status={summary['status']} "
          f"located_sm={loc['located_sm']} location_time_ms={_fmt(loc['location_time'] and 1e3 * loc['location_time'], '.2f')}")
    code = _exit_code(summary, cfg["run"]["self_check"])
    if code == EXIT_WRONG_SM:
        print(f"self-check failed: expected SM {summary['expected_sm']}, located {loc['located_sm']}",
              file=sys.stderr)
    elif code == EXIT_DIVERGED:
        print("simulation diverged", file=sys.stderr)
    return code


def _case_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"case list must be comma-separated integers, got {text!r}")


def cmd_sweep(args):
    try:
        tables = sweep_criteria(args.cases, args.out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for group, rows in tables.items():
        print(f"{group}: {len(rows)} rows")
    return EXIT_OK


def cmd_table5(args):
    rows, summaries = repro_table5(args.out)
    print(f"{'type':<5}{'no inj (ms)':>13}{'inj (ms)':>10}{'speedup':>9}{'ref no inj':>12}{'ref inj':>9}")
    for ft, a, b, s, ra, rb in rows:
        print(f"{ft:<5}{_fmt(a):>13}{_fmt(b):>10}{_fmt(s, '.2f'):>9}{ra:>12.0f}{rb:>9.0f}")
    return max(_exit_code(s) for s in summaries.values())


def build_parser():
    p = argparse.ArgumentParser(prog="mmcsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config", nargs="?", help="JSON scenario config")
    r.add_argument("--out", help="output directory for CSV and summary")
    r.add_argument("--scenario", help="built-in scenario used as the base (fig11..fig14, healthy)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="unipolarity threshold curves")
    s.add_argument("--cases", type=_case_list, help="comma-separated case ids (default: all nine)")
    s.add_argument("--out", default="sweep_out", help="output directory")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("repro-table5", help="run fig11..fig14 and print location times")
    t.add_argument("--out", default=None, help="output directory")
    t.set_defaults(func=cmd_table5)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
