"""Command-line front end.

    auv-ftc run --scenario FILE --out DIR [--seed N] [--format csv|json]
    auv-ftc baseline-sweep --scenario FILE --intervals 0.1,1,5,10 --out DIR
    auv-ftc verify

Every written file is printed on its own line.  ``AUV_FTC_LOG`` sets the log
level (default WARNING).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import (
    FTCError,
    MissingLogError,
    OutputError,
    ScenarioParseError,
    ScenarioValidationError,
)
from .harness import Scenario, compute_metrics, hard_switch_baseline, run_scenario
from .scenario_io import (
    RunConfig,
    bundled_scenario_path,
    emit_plot_script,
    log_to_csv,
    parse_scenario,
    write_outputs,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_DIVERGENCE = 5
EXIT_IO = 6

log = logging.getLogger("auv_ftc")


def _simulate(s: Scenario, interval: float | None):
    """Run one scenario; returns ``(log, error message or None)``.

    Simulation failures keep the partial log so it can still be written.
    """
    try:
        out = run_scenario(s) if interval is None else hard_switch_baseline(s, interval)
        return out, None
    except FTCError as exc:
        partial = getattr(exc, "partial_log", None)
        if partial is None:
            raise
        return partial, f"{type(exc).__name__}: {exc}"


def _metrics(sim, s: Scenario, err) -> dict:
    out = compute_metrics(sim) if len(sim) else {"steps": 0, "events": []}
    out.update(scenario=s.name, seed=s.seed, diverged=err)
    return out


def _stem(interval: float | None) -> str:
    return "soft" if interval is None else f"hard_{interval:g}s"


def _load(cfg: RunConfig) -> Scenario:
    path = cfg.scenario_path or bundled_scenario_path("default")
    s = parse_scenario(path)
    if cfg.seed is not None:
        s = replace(s, seed=cfg.seed)
    return s


def cmd_run(cfg: RunConfig) -> int:
    s = _load(cfg)
    sim, err = _simulate(s, s.baseline)
    metrics = _metrics(sim, s, err)
    stem = s.name if s.baseline is None else f"{s.name}_{_stem(s.baseline)}"
    paths = write_outputs(sim, metrics, cfg, stem)
    if cfg.format == "csv":
        paths.append(emit_plot_script(paths[:1], cfg.output_dir, f"plot_{stem}.py"))
    for p in paths:
        print(p)
    if err:
        log.error("%s diverged: %s", stem, err)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    s = _load(cfg)
    runs = [None] + list(cfg.intervals)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_simulate, [s] * len(runs), runs))
    else:
        results = [_simulate(s, iv) for iv in runs]
    paths, summary, failed = [], {"scenario": s.name, "seed": s.seed, "runs": []}, False
    for iv, (sim, err) in zip(runs, results):
        stem = _stem(iv)
        metrics = _metrics(sim, s, err)
        written = write_outputs(sim, metrics, replace(cfg, format="csv"), stem)
        paths += written
        shifts = [e for e in metrics["events"] if e["time_s"] > 0]
        summary["runs"].append({
            "run": stem, "detection_interval_s": iv, "diverged": err,
            "peak_post_shift_planar_deviation_m":
                shifts[-1]["peak_planar_deviation_m"] if shifts and not err else None,
        })
        failed |= err is not None
    csvs = [p for p in paths if p.suffix == ".csv"]
    paths.append(emit_plot_script(csvs, cfg.output_dir, "plot_sweep.py"))
    summ = Path(cfg.output_dir) / "sweep_summary.json"
    try:
        summ.write_text(json.dumps(summary, indent=2) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write ({exc.strerror})", summ) from None
    paths.append(summ)
    for p in paths:
        print(p)
    return EXIT_DIVERGENCE if failed else EXIT_OK


def verify_checks() -> list[tuple[str, bool, str]]:
    """Deterministic oracle checks; ``(name, passed, detail)`` per check."""
    from .oracles import jacobian_relative_errors, lqt_oracle_errors

    out = []
    e = lqt_oracle_errors(25, seed=0)
    out.append(("lqt sweep vs dense QP (25 instances)", bool(e.max() <= 1e-8),
                f"max rel cost gap {e.max():.2e}"))
    j = jacobian_relative_errors(10, seed=0)
    out.append(("analytic vs finite-difference Jacobian (10 points)", bool(j.max() <= 1e-5),
                f"max rel error {j.max():.2e}"))
    s = parse_scenario(bundled_scenario_path("default"))
    s = replace(s, duration=5.0)
    a, b = run_scenario(s), run_scenario(s)
    ha, hb = (hashlib.sha256(log_to_csv(x).encode()).hexdigest() for x in (a, b))
    out.append(("determinism (5 s default scenario twice)", ha == hb, f"sha256 {ha[:12]}"))
    failed = sorted(s.fault_schedule[0][1])
    peak = float(np.abs(a.applied[:, [i - 1 for i in failed]]).max())
    out.append(("failed-thruster nullity", peak == 0.0, f"max |u| on {failed}: {peak:g} N"))
    post = a.posterior
    ok = bool(np.all(post >= 0) and np.all(np.abs(post.sum(axis=1) - 1) <= 1e-12))
    out.append(("posterior validity", ok, f"{len(post)} records"))
    return out


def cmd_verify(cfg: RunConfig) -> int:
    checks = verify_checks()
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(p for _, p, _ in checks) else EXIT_VERIFY_FAILED


def _intervals(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad interval list {text!r}") from None
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError("intervals must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="auv-ftc", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", type=Path, help="scenario YAML (default: bundled default)")
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--seed", type=int)
    run.add_argument("--format", choices=("csv", "json"), default="csv")

    sw = sub.add_parser("baseline-sweep", help="soft run plus hard-switch baselines")
    sw.add_argument("--scenario", type=Path, help="scenario YAML (default: bundled shift)")
    sw.add_argument("--intervals", type=_intervals, default=(0.1, 1.0, 5.0, 10.0))
    sw.add_argument("--out", type=Path, default=Path("out"))
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int, default=1, help="parallel runs")

    sub.add_parser("verify", help="run the deterministic oracle checks")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AUV_FTC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        cfg = RunConfig("verify")
    else:
        scen = args.scenario
        if scen is None and args.command == "baseline-sweep":
            scen = bundled_scenario_path("shift")
        cfg = RunConfig(args.command, scen, args.out, args.seed,
                        getattr(args, "format", "csv"),
                        getattr(args, "intervals", (0.1, 1.0, 5.0, 10.0)),
                        getattr(args, "jobs", 1))
    handlers = {"run": cmd_run, "baseline-sweep": cmd_sweep, "verify": cmd_verify}
    try:
        return handlers[args.command](cfg)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OutputError, MissingLogError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FTCError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
