"""Command line entry point: ``identiquad run | analyze | batch``."""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .actuation import UnderactuatedBeyondScope
from .assembly import AssemblyError
from .runner.output import write_outputs
from .runner.scenario import ScenarioError, load
from .runner.simulate import ScenarioInfeasible, analyze, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3

log = logging.getLogger("identiquad")


def setup_logging():
    level = os.environ.get("IDENTIQUAD_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def run_one(scenario_path, out_dir, force=False):
    """Load, simulate and write outputs; returns (exit code, message)."""
    try:
        scenario = load(scenario_path)
        result = simulate(scenario, force=force)
    except ScenarioInfeasible as exc:
        return EXIT_INVALID, f"{scenario_path}: {exc} (use --force to run anyway)"
    except (ScenarioError, AssemblyError, UnderactuatedBeyondScope, ValueError) as exc:
        return EXIT_INVALID, f"{scenario_path}: {exc}"
    write_outputs(result, scenario, out_dir)
    m = result.metrics
    msg = (f"{scenario.name}: {m['status']}, {m['ticks']} ticks, position RMSE {m['position_rmse']:.4f} m, "
           f"DOF timeline {m['dof_timeline']} -> {out_dir}")
    return (EXIT_DIVERGED if result.status == "diverged" else EXIT_OK), msg


def _batch_job(args):
    path, out_dir = args
    return str(path), *run_one(path, out_dir)


def cmd_run(args):
    code, msg = run_one(args.scenario, args.out, force=args.force)
    print(msg, file=sys.stderr if code else sys.stdout)
    return code


def cmd_analyze(args):
    try:
        report = analyze(load(args.scenario))
    except (ScenarioError, AssemblyError, UnderactuatedBeyondScope) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_batch(args):
    files = sorted(Path(args.dir).glob("*.yaml")) + sorted(Path(args.dir).glob("*.yml"))
    if not files:
        print(f"no scenario files in {args.dir}", file=sys.stderr)
        return EXIT_INVALID
    jobs = [(f, Path(args.out) / f.stem) for f in files]
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, code, msg in pool.map(_batch_job, jobs):
            print(msg, file=sys.stderr if code else sys.stdout)
            worst = max(worst, code)
    return worst


def build_parser():
    p = argparse.ArgumentParser(prog="identiquad", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write CSV, metrics and SVG plots")
    r.add_argument("--scenario", required=True, help="scenario YAML file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--force", action="store_true", help="run even if the feasibility checks fail")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="print the static assembly report, no simulation")
    a.add_argument("--scenario", required=True)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("batch", help="run every scenario in a directory")
    b.add_argument("--dir", required=True, help="directory with *.yaml scenarios")
    b.add_argument("--out", required=True, help="output root; one sub-directory per scenario")
    b.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    b.set_defaults(func=cmd_batch)
    return p


def main(argv=None):
    setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
