"""Command-line entry point: ``seqinfer {simulate,interval,quantiles,coverage}``.

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime or
numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .estimators import METHODS, build_interval, check_stopped_sample
from .exceptions import ConfigError, SeqInferError
from .harness import (
    load_config,
    load_dataset,
    parse_config,
    run_coverage,
    run_quantile_table,
    simulate_trials,
    write_quantile_tables,
    write_report,
)
from .intervals import default_grid
from .sampling import RandomStream
from .stopping import example1_rule, example2_rule, example4_rule

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

RULES = {
    "example1": example1_rule,
    "example2": example2_rule,
    "example4": example4_rule,
}


def resolve_rule(spec: str):
    """A built-in rule name, or a JSON file holding a ``scenario`` object."""
    if spec in RULES:
        return RULES[spec](), "known" if spec != "example4" else "estimated"
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown rule {spec!r}: not one of {sorted(RULES)} and no such file")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"rule file {spec} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "scenario" not in raw:
        raw = {"scenario": raw}
    if not isinstance(raw, dict) or set(raw) != {"scenario"}:
        raise ConfigError("rule file must hold a single scenario object")
    cfg = parse_config({**raw, "population": {"variant": "normal"}, "mu_list": [0.0]})
    return cfg.scenario.rule(), cfg.scenario.variance


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n = args.trials if args.trials is not None else cfg.n_sims
    if n < 1:
        raise ConfigError("--trials must be >= 1")
    print("mu,trial,T,mean")
    for mu in cfg.mu_list:
        batch = simulate_trials(replace(cfg, n_sims=n), mu)
        for i, (T, m) in enumerate(zip(batch.T, batch.means[:, 0])):
            print(f"{mu:g},{i},{T},{m:.6g}")


def cmd_interval(args):
    rule, variance = resolve_rule(args.rule)
    if args.variance:
        variance = args.variance
    elif args.method.startswith("boot_"):
        variance = None
    if not 0 < args.alpha < 0.5:
        raise ConfigError("--alpha must lie in (0, 0.5)")
    try:
        sample = check_stopped_sample(load_dataset(args.data), rule)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = default_grid(sample) if args.method in ("hybrid", "exact") else None
    res = build_interval(sample, rule, args.method, args.alpha, variance, args.bootstrap,
                         RandomStream(args.seed, 0), grid)
    print(json.dumps(res.to_dict(), indent=2, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def cmd_quantiles(args):
    cfgs = load_config(args.config, sweep_ok=True)
    cfgs = cfgs if isinstance(cfgs, list) else [cfgs]
    tables = [run_quantile_table(c) for c in cfgs]
    write_quantile_tables(tables, args.out, args.format)


def cmd_coverage(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = run_coverage(cfg, jobs=args.jobs)
    write_report(report, args.out, args.format)
    failed = sum(r.failures for r in report.rows)
    if failed:
        logging.getLogger(__name__).warning("%d replicate interval(s) failed and were excluded", failed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqinfer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="print stopped-sample summaries")
    s.add_argument("--config", required=True, help="JSON config file or preset name")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("interval", help="confidence interval for one stopped sample")
    s.add_argument("--data", required=True)
    s.add_argument("--rule", default="example2", help=f"one of {sorted(RULES)} or a scenario JSON file")
    s.add_argument("--method", default="hybrid", choices=METHODS)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--variance", choices=("known", "estimated"))
    s.add_argument("--bootstrap", type=int, metavar="B")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_interval)

    s = sub.add_parser("quantiles", help="quantile table of R, R0, R1 and studentized R1")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_quantiles)

    s = sub.add_parser("coverage", help="coverage errors of interval methods")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_coverage)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"seqinfer: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SeqInferError, ArithmeticError, ValueError, OSError) as exc:
        print(f"seqinfer: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
