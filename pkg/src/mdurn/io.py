"""Versioned CSV / JSON-lines writers, the run manifest, and trajectory replay."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__
from .errors import ConfigError
from .estimators import Accumulators, estimate_all
from .inference import TestResult, normal_quantile
from .urn import StepRecord, UrnState, new_urn, replay_step

SCHEMA_VERSION = 1

TRAJECTORY_COLUMNS = (
    "n", "N", "X", "A", "B", "H", "K", "S", "Z",
    "m_hat_A", "m_hat_B", "var_hat_A", "var_hat_B", "rho_hat", "mu_hat", "q_hat_N", "M_n",
    "gamma0", "zeta0", "band_lo", "band_hi",
)
TEST_COLUMNS = ("n", "zeta0", "gamma0", "lambda", "p_value", "reject", "approx_power", "floored_flag")
AGGREGATE_COLUMNS = (
    "replication", "status", "n", "H", "K", "Z", "N_A", "N_B",
    "m_hat_A", "m_hat_B", "var_hat_A", "var_hat_B", "rho_raw", "q_hat_AB", "mu_hat", "q_hat_N", "M_n",
    "zeta0", "gamma0", "gamma0_raw", "lambda", "p_value", "reject", "approx_power", "approx_power_true",
    "floored_flag",
)
LEVEL_COLUMNS = ("theta", "rate", "ci_lo", "ci_hi", "n_reject", "n_valid", "n_insufficient")
POWER_COLUMNS = (
    "delta", "emp_power", "approx_power", "ci_lo", "ci_hi",
    "p_a", "approx_power_se", "approx_power_true", "n_valid", "n_insufficient",
)
RATE_SERIES_COLUMNS = (
    "replication", "n", "H", "K", "K_ratio", "residual_ratio", "NB_ratio", "H_over_K_power", "allocation",
)
RATE_SUMMARY_COLUMNS = (
    "replication", "target", "slope", "allocation_final",
    "spread_K_ratio", "spread_residual_ratio", "spread_NB_ratio", "spread_H_over_K_power",
)


def fmt(v) -> str:
    """Deterministic cell text: ``repr`` for floats, blank for missing, 0/1 for flags."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------- rows


def result_row(res: TestResult) -> dict:
    return {
        "n": res.n, "zeta0": res.zeta0, "gamma0": res.gamma0, "lambda": res.lam,
        "p_value": res.p_value, "reject": res.reject, "approx_power": res.approx_power,
        "floored_flag": res.floored,
    }


def trajectory_rows(snapshots, config) -> list[dict]:
    """One row per snapshot; test columns blank while the statistic is undefined."""
    from .montecarlo import evaluate

    half = normal_quantile(1.0 - config.theta / 2)
    rows = []
    for s in snapshots:
        est = estimate_all(s.acc)
        _, res, _ = evaluate(s.acc, config)
        rows.append({
            "n": s.n, "N": s.N, "X": s.X, "A": s.A, "B": s.B, "H": s.H, "K": s.K, "S": s.S, "Z": s.Z,
            "m_hat_A": est.m_a, "m_hat_B": est.m_b, "var_hat_A": est.var_a, "var_hat_B": est.var_b,
            "rho_hat": est.rho, "mu_hat": est.mu_N, "q_hat_N": est.q_N, "M_n": est.M,
            "gamma0": res.gamma0 if res else None, "zeta0": res.zeta0 if res else None,
            "band_lo": -half, "band_hi": half,
        })
    return rows


def aggregate_row(r) -> dict:
    e, res = r.estimates, r.result
    row = {
        "replication": r.replication, "status": r.status, "n": r.n, "H": r.H, "K": r.K, "Z": r.Z,
        "N_A": e.N_A, "N_B": e.N_B, "m_hat_A": e.m_a, "m_hat_B": e.m_b,
        "var_hat_A": e.var_a, "var_hat_B": e.var_b, "rho_raw": e.rho_raw, "q_hat_AB": e.q_ab,
        "mu_hat": e.mu_N, "q_hat_N": e.q_N, "M_n": e.M, "approx_power_true": r.approx_power_true,
    }
    if res is not None:
        row.update(result_row(res))
        row["gamma0_raw"] = res.gamma0_raw
    return row


def level_row(rep) -> dict:
    return {c: getattr(rep, c) for c in LEVEL_COLUMNS}


def power_row(pt) -> dict:
    return {c: getattr(pt, c) for c in POWER_COLUMNS}


def rate_rows(replication: int, rep) -> tuple[list[dict], dict]:
    series = [
        {"replication": replication, "n": int(rep.n[i]), "H": int(rep.H[i]), "K": int(rep.K[i]),
         "K_ratio": float(rep.K_ratio[i]), "residual_ratio": float(rep.residual_ratio[i]),
         "NB_ratio": float(rep.NB_ratio[i]), "H_over_K_power": float(rep.H_over_K_power[i]),
         "allocation": float(rep.allocation[i])}
        for i in range(len(rep.n))
    ]
    summary = {"replication": replication, "target": rep.target, "slope": rep.slope,
               "allocation_final": float(rep.allocation[-1])}
    for key, v in rep.spread.items():
        summary[f"spread_{key}"] = v
    return series, summary


# --------------------------------------------------------------- json lines


def write_jsonl(path, records: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ----------------------------------------------------------------- manifest


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str = __version__
    schema_version: int = SCHEMA_VERSION
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    wall_time_s: Optional[float] = None
    outputs: list[str] = field(default_factory=list)
    exit_status: str = "ok"

    def add(self, path) -> None:
        self.outputs.append(os.fspath(path))

    def write(self, out_dir, wall_time_s: float) -> Path:
        """Written last: its presence marks a completed run."""
        self.finished = _now()
        self.wall_time_s = round(wall_time_s, 6)
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = dict(self.__dict__)
        payload["outputs"] = list(self.outputs) + [os.fspath(path)]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


# ------------------------------------------------------------------- replay


def read_step_records(path) -> list[StepRecord]:
    """Step records from a trajectory CSV written with stride 1."""
    recs = []
    for i, row in enumerate(read_csv(path)):
        try:
            rec = StepRecord(int(row["n"]), int(row["N"]), int(row["X"]), int(row["A"]), int(row["B"]),
                             int(row["H"]), int(row["K"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: row {i + 1} is not a trajectory record: {exc}") from exc
        if rec.n != i + 1:
            raise ConfigError(f"{path}: replay needs every step; row {i + 1} has n={rec.n}")
        recs.append(rec)
    return recs


def replay(records: Sequence[StepRecord], a: int, b: int) -> tuple[UrnState, Accumulators]:
    """Rebuild the urn and accumulators from recorded draws, checking each recorded composition."""
    state = new_urn(a, b)
    acc = Accumulators()
    for rec in records:
        got = replay_step(state, rec.N, rec.X, rec.A, rec.B)
        if (got.H_after, got.K_after) != (rec.H_after, rec.K_after):
            raise ValueError(f"step {rec.n}: recorded (H, K)=({rec.H_after}, {rec.K_after}) "
                             f"but replay gives ({got.H_after}, {got.K_after})")
        state = state.advanced(got)
        acc.update(got)
    return state, acc
