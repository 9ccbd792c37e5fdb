"""Command line entry point: ``autoplatoon run|validate|replay-check``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .log import replay_check
from .runner import run
from .scenario import ScenarioError, load_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autoplatoon", description="Leader-follower platoon simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and check invariants")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--out", default="out", help="output directory for log.csv and summary.json")
    r.add_argument("--transport", choices=("sim", "http"), default="sim")

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")

    c = sub.add_parser("replay-check", help="re-verify invariants from a run CSV")
    c.add_argument("csv")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            s = load_scenario(args.scenario)
            print(f"ok: {s.name} ({len(s.agents)} robots, {len(s.obstacles)} obstacles, {s.duration} ticks)")
            return 0
        if args.command == "run":
            result = run(load_scenario(args.scenario), args.out, transport=args.transport, seed=args.seed)
            print(result.verdict.summary())
            print(f"wrote {result.csv_path} and {result.summary_path}")
            return 0 if result.verdict.ok else 1
        verdict = replay_check(args.csv)
        print(verdict.summary())
        return 0 if verdict.ok else 1
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
