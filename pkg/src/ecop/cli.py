"""``ecop`` command-line interface."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .cmdp import save_cmdp
from .config import ConfigError, load_config
from .envs import ENV_NAMES, make_env
from .oracle import BudgetExceededError
from .runner import OUTPUT_ROOT_ENV, default_out_dir, evaluate_checkpoint, run_experiment
from .verify import SUITES, reports_to_csv, run_suites


def _overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        out[key] = yaml.safe_load(value)
    return out


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir or cfg.out_dir or default_out_dir(cfg, Path(args.config).stem))
    try:
        result = run_experiment(cfg, out_dir, args.seed_offset, args.jobs)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for res in result.results:
        last = res.records[-1] if res.records else None
        status = "aborted: " + res.error if res.error else "ok"
        summary = "" if last is None else f" final J={last.J:.4g} J_C={[round(c, 4) for c in last.JC]}"
        print(f"seed {res.seed}: {status}{summary}")
    print(f"wrote {len(result.files) + 1} files to {out_dir}")
    return 3 if result.failed else 0


def cmd_verify(args) -> int:
    reports = run_suites(args.suite)
    text = reports_to_csv(reports)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{args.suite}.csv").write_text(text)
    elif args.report:
        sys.stdout.write(text)
    for rep in reports:
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.suite}: {rep.summary}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_export(args) -> int:
    env = make_env(args.env, **_overrides(args.set))
    if not env.spec.tabular:
        print(f"error: {args.env} has a continuous state space and cannot be exported", file=sys.stderr)
        return 2
    save_cmdp(env.to_cmdp(), args.file)
    print(f"wrote {args.file}")
    return 0


def cmd_eval(args) -> int:
    result = evaluate_checkpoint(args.checkpoint, args.env, args.episodes, args.seed, _overrides(args.set))
    print(json.dumps(result, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecop", description="Episodic constrained policy optimization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train every seed listed in a YAML config")
    run.add_argument("config")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    run.add_argument("--out-dir", help=f"output directory (default: ${OUTPUT_ROOT_ENV} or ./runs)")
    run.add_argument("--jobs", type=int, default=1, help="seeds trained in parallel")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run oracle verification suites")
    ver.add_argument("suite", choices=SUITES + ("all",))
    ver.add_argument("--out-dir", help="write verify_<suite>.csv here")
    ver.add_argument("--report", action="store_true", help="print the CSV report to stdout")
    ver.set_defaults(func=cmd_verify)

    exp = sub.add_parser("export-cmdp", help="write a tabular environment as a JSON CMDP")
    exp.add_argument("env", choices=ENV_NAMES)
    exp.add_argument("file")
    exp.add_argument("--set", action="append", metavar="KEY=VALUE", help="environment override")
    exp.set_defaults(func=cmd_export)

    ev = sub.add_parser("eval", help="evaluate a saved policy checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("env", choices=ENV_NAMES)
    ev.add_argument("--episodes", type=int, default=1000, help="Monte Carlo episodes for continuous envs")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--set", action="append", metavar="KEY=VALUE", help="environment override")
    ev.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
