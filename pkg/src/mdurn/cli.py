"""``mdurn`` command line: simulate / test / level / power / diagnose over one YAML config.

Exit codes: 0 success, 2 config error, 3 model violation, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import io as mio
from .config import config_to_dict, load_config, parse_delta_grid, with_overrides
from .errors import ConfigError, InsufficientData, ModelViolation
from .inference import approximate_power, run_test
from .montecarlo import (
    build_test_inputs,
    diagnose,
    power_curve,
    rejection_summary,
    run_replications,
    run_trajectory,
    stride_schedule,
)

log = logging.getLogger("mdurn")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_DATA = 0, 2, 3, 4
LEVEL_GRID = (0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.2)


def _config(args):
    cfg = load_config(args.config)
    horizon = args.horizon if args.horizon is not None else getattr(args, "steps", None)
    return with_overrides(
        cfg, seed=args.seed, horizon=horizon, replications=getattr(args, "reps", None),
        theta=args.theta, jobs=getattr(args, "jobs", None), out_dir=args.out_dir,
        stride=getattr(args, "stride", None),
        delta_grid=parse_delta_grid(args.delta_grid) if getattr(args, "delta_grid", None) else None,
    )


def cmd_simulate(args, cfg, manifest) -> int:
    snaps = stride_schedule(cfg.horizon, cfg.stride)
    traj = run_trajectory(cfg, args.replication, snapshots=snaps)
    out = Path(cfg.out_dir)
    manifest.add(mio.write_csv(out / "trajectory.csv", mio.TRAJECTORY_COLUMNS, mio.trajectory_rows(traj.snapshots, cfg)))
    print(f"simulated {cfg.horizon} steps: H={traj.state.H} K={traj.state.K} Z={traj.state.Z:.6f}")
    return EXIT_OK


def cmd_test(args, cfg, manifest) -> int:
    traj = run_trajectory(cfg, args.replication)
    opts = cfg.test
    inputs = build_test_inputs(traj.acc, opts)
    res = run_test(inputs, cfg.theta, opts.gamma_floor, opts.gamma_hard_error, opts.gamma_form)
    out = Path(cfg.out_dir)
    rec = res.to_dict()
    rec["replication"] = args.replication
    rec["approx_power_true"] = approximate_power(inputs, cfg.theta, opts.gamma_floor, delta=cfg.true_delta,
                                                 form=opts.gamma_form)
    manifest.add(mio.write_jsonl(out / "test.jsonl", [rec]))
    manifest.add(mio.write_csv(out / "test.csv", mio.TEST_COLUMNS, [mio.result_row(res)]))
    verdict = "reject" if res.reject else "do not reject"
    print(f"n={res.n} zeta0={res.zeta0:.4f} Gamma0={res.gamma0:.4f} p={res.p_value:.4g} "
          f"q={res.threshold:.4f} theta={cfg.theta}: {verdict} m_A = m_B"
          + (" (Gamma floored)" if res.floored else ""))
    return EXIT_OK


def cmd_level(args, cfg, manifest) -> int:
    results = run_replications(cfg)
    out = Path(cfg.out_dir)
    manifest.add(mio.write_csv(out / "aggregate.csv", mio.AGGREGATE_COLUMNS, [mio.aggregate_row(r) for r in results]))
    thetas = sorted(set(LEVEL_GRID) | {cfg.theta})
    reports = [rejection_summary(results, t) for t in thetas]
    manifest.add(mio.write_csv(out / "level.csv", mio.LEVEL_COLUMNS, [mio.level_row(r) for r in reports]))
    main = next(r for r in reports if r.theta == cfg.theta)
    if cfg.replications < 100:
        log.warning("only %d replications; rejection rate will be noisy", cfg.replications)
    print(f"theta={cfg.theta}: rejected {main.n_reject}/{main.n_valid} = {main.rate:.4f} "
          f"(95% CI {main.ci_lo:.4f}..{main.ci_hi:.4f}); insufficient data: {main.n_insufficient}")
    return EXIT_OK


def cmd_power(args, cfg, manifest) -> int:
    points = power_curve(cfg)
    out = Path(cfg.out_dir)
    manifest.add(mio.write_csv(out / "power.csv", mio.POWER_COLUMNS, [mio.power_row(p) for p in points]))
    for p in points:
        print(f"delta={p.delta:.4f} emp={p.emp_power:.3f} [{p.ci_lo:.3f},{p.ci_hi:.3f}] approx={p.approx_power:.3f}")
    return EXIT_OK


def cmd_diagnose(args, cfg, manifest) -> int:
    series, summary = [], []
    for rep in range(cfg.replications):
        report = diagnose(cfg, rep)
        s, row = mio.rate_rows(rep, report)
        series.extend(s)
        summary.append(row)
        print(f"replication {rep}: slope={report.slope:.4f} target={report.target:.4f} "
              f"K-ratio spread={report.spread['K_ratio']:.4f} allocation={row['allocation_final']:.4f}")
    out = Path(cfg.out_dir)
    manifest.add(mio.write_csv(out / "rate_series.csv", mio.RATE_SERIES_COLUMNS, series))
    manifest.add(mio.write_csv(out / "rate_summary.csv", mio.RATE_SUMMARY_COLUMNS, summary))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "test": cmd_test,
    "level": cmd_level,
    "power": cmd_power,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdurn", description="Two-color multidrawing urn experiments.")
    p.add_argument("--version", action="version", version=f"mdurn {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int, help="number of steps n")
        sp.add_argument("--theta", type=float, help="test level")
        sp.add_argument("--out-dir")

    for name in ("simulate", "test"):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--replication", type=int, default=0, help="replication index (selects the substream)")
        if name == "simulate":
            sp.add_argument("--steps", type=int, help="alias of --horizon")
            sp.add_argument("--stride", type=int, help="write every stride-th step")
    for name in ("level", "power", "diagnose"):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--reps", type=int, help="replications")
        sp.add_argument("--jobs", type=int, help="worker processes")
        if name == "power":
            sp.add_argument("--delta-grid", help="start:stop:step or comma-separated values")
    return p


def _fail(kind: str, code: int, exc: Exception) -> int:
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = _config(args)
        manifest = mio.RunManifest(command=args.command, config=config_to_dict(cfg), seed=cfg.seed)
        code = COMMANDS[args.command](args, cfg, manifest)
        manifest.write(cfg.out_dir, time.perf_counter() - t0)
        return code
    except ConfigError as exc:
        return _fail("config_error", EXIT_CONFIG, exc)
    except ModelViolation as exc:
        return _fail("model_violation", EXIT_MODEL, exc)
    except InsufficientData as exc:
        return _fail("insufficient_data", EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
