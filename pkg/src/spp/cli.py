"""Command-line entry point: ``spp solve | validate-schedule | bench | report``."""
import argparse
import csv
import glob
import io
import json
import os
import sys

from .errors import ConfigError, SppError
from . import harness
from .schedules import validate_schedule


def _cmd_solve(args):
    cfg = harness.ExperimentConfig.load(args.config)
    out = args.out or cfg.output.get("dir")
    res = harness.run_experiment(cfg, out)
    s = res.summary
    if res.exit_code == 2:
        print(f"schedule validation failed: {s['validation']}", file=sys.stderr)
    else:
        for c in s.get("checks", []):
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']:.6g} <= {c['limit']:.6g}")
        print(f"{s['name']}: {'pass' if s['pass'] else 'FAIL'}")
    return res.exit_code


def _cmd_validate(args):
    cfg = harness.ExperimentConfig.load(args.config)
    pspec = cfg.problem
    problem = harness.generate_problem(pspec["generator"], pspec.get("params", {}), pspec.get("seed", 0))
    sched = harness.build_schedule(cfg, problem)
    mode = harness.default_mode(cfg, sched)
    rep = validate_schedule(sched, t_max=max(2, cfg.N), mode=mode)
    print(json.dumps(rep.summary(), sort_keys=True, indent=2))
    return 0 if rep.passed else 2


def _cmd_bench(args):
    summary, code = harness.run_suite(args.suite, quick=args.quick, out_dir=args.out)
    for exp in summary["experiments"]:
        print(f"{exp['name']}: {'pass' if exp['pass'] else 'FAIL'}")
        for c in exp.get("checks", []):
            print(f"  {'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']:.6g} (limit {c['limit']:.6g})")
    for c in summary.get("checks", []):
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']:.6g} (limit {c['limit']:.6g})")
    return code


def _cmd_report(args):
    d = args.inp
    summary_path = os.path.join(d, "summary.json")
    if not os.path.isfile(summary_path):
        raise ConfigError(f"no summary.json in {d}")
    with open(summary_path) as f:
        summary = json.load(f)
    if args.format == "json":
        print(json.dumps(summary, sort_keys=True, indent=2))
        return 0
    # one row per replication with its final captured record
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = None
    for path in sorted(glob.glob(os.path.join(d, "traj_r*.csv"))):
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if len(rows) < 2:
            continue
        if header is None:
            header = ["replication"] + rows[0]
            w.writerow(header)
        w.writerow([os.path.basename(path)[6:9]] + rows[-1])
    sys.stdout.write(buf.getvalue())
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="spp", description="Primal-dual saddle-point solvers and rate checks.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run an experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_solve)
    v = sub.add_parser("validate-schedule", help="check the step-size conditions of a config's schedule")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_cmd_validate)
    b = sub.add_parser("bench", help="run a predefined benchmark suite")
    b.add_argument("--suite", required=True, choices=harness.SUITES)
    b.add_argument("--quick", action="store_true")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bench)
    r = sub.add_parser("report", help="print the results stored in an output directory")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", choices=("csv", "json"), default="json")
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return args.func(args)
    except (ConfigError, SppError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
