"""Command line harness: bounds, verification suites, searches, one-shot runs.

Subcommands
-----------
bound      single- and multi-bidder revenue benchmarks for a configured market
verify     run one named suite (or all of them) and report PASS/FAIL checks
cc-search  smallest extra-bidder count whose VCG revenue clears a benchmark
simulate   one mechanism run on a supplied or sampled profile, as Outcome JSON
opt        LP-optimal revenue for a single-bidder market

Reports are printed as one line per check and can be mirrored to CSV with the
stable column schema ``experiment, parameter, value, stderr, samples, seed,
verdict``. Exit codes: 0 all checks passed, 1 at least one check failed, 2
usage or configuration error. The seed is taken from ``--seed``, else the
``BKLAB_SEED`` environment variable, else the config file.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .dist import ProductDist, product_from_json
from .duality import multi_bidder_bound, single_bidder_bound
from .mech import Profile, outcome_to_json, vcg_additive, vcg_constrained, vcg_ud
from .optrev import opt_rev_single
from .setsys import Full, SetSystem, system_from_json
from .stoch import Estimate, RandomStream, estimate_vcg_revenue, sample_profiles
from .suites import SUITE_NAMES, CheckRow, SuiteReport, run_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CSV_COLUMNS = ("experiment", "parameter", "value", "stderr", "samples", "seed", "verdict")


class ConfigError(Exception):
    """Anything wrong with a config file or the flags that amend it."""


@dataclass
class ExperimentConfig:
    """One experiment as described by a JSON config file."""

    product: ProductDist
    n: int = 1
    constraints: Optional[Tuple[SetSystem, ...]] = None
    mechanism: str = "additive"
    region_mode: str = "value"
    samples: int = 100_000
    seed: int = 0
    c_max: int = 5
    benchmark: Union[None, float, str] = None
    profile: Optional[np.ndarray] = None
    out: Optional[str] = None


def _env_seed() -> Optional[int]:
    raw = os.environ.get("BKLAB_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"BKLAB_SEED must be an integer, got {raw!r}") from exc


def load_experiment(path: str, seed: Optional[int] = None,
                    samples: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate an experiment config, applying flag overrides."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    if "product" not in obj:
        raise ConfigError("config needs a 'product' distribution descriptor")
    try:
        product = product_from_json(obj["product"])
        constraints = None
        if obj.get("constraints") is not None:
            constraints = tuple(system_from_json(c) for c in obj["constraints"])
        profile = None
        if obj.get("profile") is not None:
            profile = np.asarray(obj["profile"], dtype=float)
            if profile.ndim != 2 or profile.shape[1] != product.m:
                raise ValueError("profile must be an (n, m) value table")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    cfg = ExperimentConfig(
        product=product,
        n=int(obj.get("n", 1)),
        constraints=constraints,
        mechanism=str(obj.get("mechanism", "additive")),
        region_mode=str(obj.get("region_mode", "value")),
        samples=int(obj.get("samples", 100_000)),
        seed=int(obj.get("seed", 0)),
        c_max=int(obj.get("c_max", 5)),
        benchmark=obj.get("benchmark"),
        profile=profile,
        out=obj.get("out"),
    )
    env = _env_seed()
    if seed is not None:
        cfg.seed = int(seed)
    elif env is not None:
        cfg.seed = env
    if samples is not None:
        cfg.samples = int(samples)
    if cfg.n < 1:
        raise ConfigError("n must be at least 1")
    if cfg.samples < 1:
        raise ConfigError("samples must be at least 1")
    if cfg.mechanism not in ("additive", "constrained", "ud"):
        raise ConfigError(f"unknown mechanism {cfg.mechanism!r}")
    if cfg.region_mode not in ("value", "quantile"):
        raise ConfigError(f"unknown region mode {cfg.region_mode!r}")
    return cfg


def _emit(rows: Sequence[CheckRow], out: Optional[str]) -> None:
    for row in rows:
        print(row.line())
    if out:
        write_csv(rows, out)


def write_csv(rows: Sequence[CheckRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.experiment, r.parameter, repr(float(r.value)),
                             repr(float(r.stderr)), int(r.samples), int(r.seed),
                             r.verdict])


# ---------------------------------------------------------------------------
# subcommands


def cmd_bound(cfg: ExperimentConfig) -> int:
    """Emit the one-bidder benchmark in both region modes plus the n-bidder
    benchmark for the configured n."""
    rows = []
    for mode in ("value", "quantile"):
        rows.append(CheckRow("bound", f"single_bidder[{mode}]",
                             single_bidder_bound(cfg.product, mode), 0.0, 1,
                             cfg.seed, "info"))
    for mode in ("value", "quantile"):
        est = multi_bidder_bound(cfg.product, cfg.n, mode, budget=cfg.samples,
                                 seed=cfg.seed)
        rows.append(CheckRow("bound", f"multi_bidder[{mode},n={cfg.n}]", est.mean,
                             est.stderr, est.samples, cfg.seed, "info"))
    _emit(rows, cfg.out)
    return EXIT_OK


def _resolve_benchmark(cfg: ExperimentConfig) -> Union[float, Estimate]:
    bench = cfg.benchmark
    if bench is None:
        raise ConfigError("cc-search needs a 'benchmark' (number, 'lp-opt', "
                          "'bound-value' or 'bound-quantile')")
    if isinstance(bench, (int, float)):
        return float(bench)
    if bench == "lp-opt":
        value, _ = opt_rev_single(cfg.product.items)
        return value
    if bench in ("bound-value", "bound-quantile"):
        return multi_bidder_bound(cfg.product, cfg.n, bench.split("-")[1],
                                  budget=cfg.samples, seed=cfg.seed)
    raise ConfigError(f"unknown benchmark selector {bench!r}")


def cmd_cc_search(cfg: ExperimentConfig) -> int:
    """Ladder of (n+c)-bidder VCG revenue estimates against the benchmark.

    One row per c carries the revenue estimate and stderr; pass means the
    estimate clears the benchmark with the four-stderr guard band on both
    sides, exactly the acceptance rule of the underlying search. The
    benchmark and the smallest passing c get their own rows.
    """
    bench = _resolve_benchmark(cfg)
    if isinstance(bench, Estimate):
        target = bench.mean + 4.0 * bench.stderr
        bench_row = CheckRow("cc-search", "benchmark", bench.mean, bench.stderr,
                             bench.samples, cfg.seed, "info")
    else:
        target = float(bench)
        bench_row = CheckRow("cc-search", "benchmark", target, 0.0, 1, cfg.seed, "info")
    rows = [bench_row]
    found: Optional[int] = None
    for c in range(cfg.c_max + 1):
        bidders = cfg.n + c
        per_bidder = None
        if cfg.constraints is not None:
            per_bidder = (list(cfg.constraints) * bidders)[:bidders]
        est = estimate_vcg_revenue(cfg.product, bidders, per_bidder, cfg.mechanism,
                                   cfg.samples, cfg.seed)
        cleared = est.mean - 4.0 * est.stderr >= target
        if cleared and found is None:
            found = c
        rows.append(CheckRow("cc-search", f"c={c}", est.mean, est.stderr, est.samples,
                             cfg.seed, "pass" if cleared else "fail"))
    rows.append(CheckRow("cc-search", "found_c",
                         math.nan if found is None else float(found), 0.0, 1,
                         cfg.seed, "info"))
    _emit(rows, cfg.out)
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """Run the configured mechanism once and print the Outcome as JSON."""
    if cfg.profile is not None:
        values = cfg.profile
    else:
        rng = RandomStream(cfg.seed).generator()
        values = sample_profiles(cfg.product, rng, 1, cfg.n)[0]
    n, m = values.shape
    constraints = cfg.constraints or (Full(m),) * n
    if len(constraints) != n:
        raise ConfigError(f"need {n} constraint systems, got {len(constraints)}")
    p = Profile(values, constraints)
    if cfg.mechanism == "additive":
        outcome = vcg_additive(p)
    elif cfg.mechanism == "constrained":
        outcome = vcg_constrained(p)
    else:
        outcome = vcg_ud(p)
    text = json.dumps(outcome_to_json(outcome), indent=2, sort_keys=True)
    print(text)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_opt(cfg: ExperimentConfig) -> int:
    """LP-optimal revenue of the configured single-bidder market."""
    if cfg.n != 1:
        raise ConfigError("opt solves single-bidder markets; set n to 1")
    value, _ = opt_rev_single(cfg.product.items)
    rows = [CheckRow("opt", "lp_revenue", value, 0.0, 1, cfg.seed, "info")]
    _emit(rows, cfg.out)
    return EXIT_OK


def cmd_verify(suite: str, seed: Optional[int], samples: Optional[int],
               out: Optional[str], workers: int, config_path: Optional[str]) -> int:
    if suite != "all" and suite not in SUITE_NAMES:
        print(f"unknown suite {suite!r}; choose from: all, {', '.join(SUITE_NAMES)}",
              file=sys.stderr)
        return EXIT_USAGE
    override = None
    if config_path is not None:
        if suite == "all":
            raise ConfigError("--config override applies to a single suite")
        try:
            with open(config_path) as fh:
                override = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    names = list(SUITE_NAMES) if suite == "all" else [suite]
    env = _env_seed()
    if seed is None:
        seed = env
    reports: List[SuiteReport]
    if workers > 1 and len(names) > 1:
        # suites are pure functions of their configs, so any schedule returns
        # the same reports; submission order keeps the output deterministic
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_suite, name, seed, samples) for name in names]
            reports = [f.result() for f in futures]
    else:
        reports = [run_suite(name, seed, samples, config=override) for name in names]
    rows: List[CheckRow] = []
    for rep in reports:
        for line in rep.lines():
            print(line)
        counted = sum(r.verdict == "pass" for r in rep.rows)
        checked = sum(r.verdict != "info" for r in rep.rows)
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name}: {counted}/{checked} checks")
        rows.extend(rep.rows)
    if out:
        write_csv(rows, out)
    return EXIT_OK if all(rep.passed for rep in reports) else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config JSON")
    sub.add_argument("--seed", type=int, default=None, help="override the seed")
    sub.add_argument("--samples", type=int, default=None, help="override sample count")
    sub.add_argument("--out", default=None, help="mirror the report to this CSV file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bklab",
                                     description="mechanism-design laboratory")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_common(commands.add_parser("bound", help="revenue benchmarks"))
    _add_common(commands.add_parser("cc-search", help="extra-bidder search"))
    _add_common(commands.add_parser("simulate", help="one mechanism run"))
    _add_common(commands.add_parser("opt", help="single-bidder LP optimum"))

    verify = commands.add_parser("verify", help="run verification suites")
    verify.add_argument("suite", help=f"one of: all, {', '.join(SUITE_NAMES)}")
    verify.add_argument("--config", default=None,
                        help="override the suite's pinned config JSON")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--samples", type=int, default=None)
    verify.add_argument("--out", default=None)
    verify.add_argument("--workers", type=int, default=1,
                        help="worker processes when verifying several suites")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.samples, args.out,
                              args.workers, args.config)
        cfg = load_experiment(args.config, seed=args.seed, samples=args.samples)
        if args.out:
            cfg.out = args.out
        if args.command == "bound":
            return cmd_bound(cfg)
        if args.command == "cc-search":
            return cmd_cc_search(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_opt(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
