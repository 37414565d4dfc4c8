"""Replication harness: trajectories, empirical level and power, growth-rate diagnostics."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernel
from .errors import ConfigError, InsufficientData, ModelViolation
from .estimators import Accumulators, Estimates, INT_FIELDS, estimate_all
from .inference import GAMMA_FLOOR, NULL, NULL_PUBLISHED, TestInputs, TestResult, approximate_power, normal_quantile, run_test
from .models import A_GREATER, ModelSpec, PastSummary, ShiftedMultinomial
from .rng import BLOCK, TrajectoryStreams
from .urn import StepRecord, UrnState, new_urn, step

log = logging.getLogger(__name__)

DEFAULT_DELTA_GRID = tuple(round(0.005 * i, 3) for i in range(21))
INT64_HEADROOM = 2**62


@dataclass(frozen=True)
class TestOptions:
    __test__ = False

    min_count: int = 30
    require_mixed: bool = True
    gamma_floor: float = GAMMA_FLOOR
    gamma_hard_error: bool = False
    z_plugin: str = "proportion_mean"
    known_N: Optional[float] = None
    known_Q: Optional[float] = None
    gamma_form: str = "null"

    def __post_init__(self):
        if self.gamma_form not in (NULL, NULL_PUBLISHED):
            raise ConfigError(f"gamma_form must be {NULL!r} or {NULL_PUBLISHED!r}, got {self.gamma_form!r}")
        if self.z_plugin not in ("proportion_mean", "allocation"):
            raise ConfigError(f"z_plugin must be proportion_mean or allocation, got {self.z_plugin!r}")
        if self.gamma_floor <= 0:
            raise ConfigError(f"gamma_floor must be > 0, got {self.gamma_floor}")
        if (self.known_N is None) != (self.known_Q is None):
            raise ConfigError("give both known_N and known_Q or neither")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    a: int = 5
    b: int = 5
    horizon: int = 10_000
    replications: int = 1
    seed: int = 0
    theta: float = 0.05
    stride: int = 1
    test: TestOptions = field(default_factory=TestOptions)
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    slope_window: float = 0.5
    log_ratio: float = 1.1
    jobs: int = 1
    out_dir: str = "out"
    engine: str = "auto"

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.a < 1 or self.b < 1:
            raise ConfigError(f"initial composition needs a, b >= 1, got a={self.a}, b={self.b}")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if not 0.0 < self.slope_window <= 1.0:
            raise ConfigError(f"slope_window must lie in (0, 1], got {self.slope_window}")
        if self.log_ratio <= 1.0:
            raise ConfigError(f"log_ratio must exceed 1, got {self.log_ratio}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.engine not in ("auto", "kernel", "python"):
            raise ConfigError(f"engine must be auto, kernel or python, got {self.engine!r}")

    @property
    def true_delta(self) -> float:
        m = self.model.reinforcement.moments()
        return m.m_a - m.m_b


# ------------------------------------------------------------------ trajectory


@dataclass
class Snapshot:
    n: int
    N: int
    X: int
    A: int
    B: int
    H: int
    K: int
    acc: Accumulators

    @property
    def S(self) -> int:
        return self.H + self.K

    @property
    def Z(self) -> float:
        return self.H / (self.H + self.K)


@dataclass
class Trajectory:
    replication: int
    state: UrnState
    acc: Accumulators
    snapshots: list[Snapshot]
    records: Optional[dict[str, np.ndarray]] = None

    def step_records(self) -> list[StepRecord]:
        """Rebuild per-step records (needs ``keep_records=True``)."""
        if self.records is None:
            raise ValueError("trajectory was run without keep_records")
        r = self.records
        H = self.state.a + np.cumsum(r["A"] * r["X"])
        K = self.state.b + np.cumsum(r["B"] * (r["N"] - r["X"]))
        return [
            StepRecord(i + 1, int(r["N"][i]), int(r["X"][i]), int(r["A"][i]), int(r["B"][i]), int(H[i]), int(K[i]))
            for i in range(len(r["N"]))
        ]


def stride_schedule(horizon: int, stride: int) -> np.ndarray:
    pts = np.arange(stride, horizon + 1, stride, dtype=np.int64)
    if len(pts) == 0 or pts[-1] != horizon:
        pts = np.append(pts, horizon)
    return pts


def log_schedule(horizon: int, ratio: float = 1.1) -> np.ndarray:
    """Roughly geometric step indices from 1 to ``horizon``; O(log horizon) points."""
    k = int(math.floor(math.log(horizon) / math.log(ratio))) + 1
    pts = np.unique(np.round(ratio ** np.arange(k + 1)).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= horizon)]
    if pts[-1] != horizon:
        pts = np.append(pts, horizon)
    return pts


def _fits_int64(config: ExperimentConfig) -> bool:
    cn = config.model.sample_size.bound
    cr = config.model.reinforcement.bound
    n = config.horizon
    worst = max(n * cr * cr * cn * cn, n * cr * cr * cn, config.a + config.b + n * cr * cn)
    return worst < INT64_HEADROOM


def _engine(config: ExperimentConfig) -> str:
    if config.engine != "auto":
        if config.engine == "kernel" and not config.model.sample_size.iid:
            raise ConfigError("the compiled engine needs a sample-size model independent of the past")
        if config.engine == "kernel" and not _fits_int64(config):
            raise ConfigError("horizon too long for 64-bit accumulators; use the python engine")
        return config.engine
    if config.model.sample_size.iid and _fits_int64(config):
        return "kernel"
    return "python"


def _acc_from_row(row, x_by_size) -> Accumulators:
    acc = Accumulators(n=int(row[kernel.SNAP_N]))
    for c, name in enumerate(INT_FIELDS):
        setattr(acc, name, int(row[kernel.SNAP_ACC0 + c]))
    acc.x_by_size = {d: int(x) for d, x in enumerate(x_by_size) if x}
    return acc


class _Row:
    """Feeds one pre-drawn row of uniforms to :func:`mdurn.urn.step`."""

    def __init__(self, row):
        self.row = row

    def random(self, size):
        return self.row[:size]


def run_trajectory(config: ExperimentConfig, replication: int = 0, *,
                   snapshots: Optional[Sequence[int]] = None,
                   keep_records: bool = False) -> Trajectory:
    """Simulate one replication to ``config.horizon``.

    Per step: draw ``N_n`` (may read the past), sample ``X_n``, take ``(A_n, B_n)``
    from the reinforcement stream, update urn and accumulators. Fully
    determined by ``(config.seed, replication)``.
    """
    snap_at = np.asarray(snapshots if snapshots is not None else [config.horizon], dtype=np.int64)
    if len(snap_at) and (np.any(np.diff(snap_at) <= 0) or snap_at[0] < 1 or snap_at[-1] > config.horizon):
        raise ValueError("snapshot steps must be strictly increasing within 1..horizon")
    if _engine(config) == "kernel":
        return _run_kernel(config, replication, snap_at, keep_records)
    return _run_python(config, replication, snap_at, keep_records)


def _run_kernel(config, replication, snap_at, keep_records) -> Trajectory:
    ss = config.model.sample_size
    rf = config.model.reinforcement
    cn = ss.bound
    streams = TrajectoryStreams(config.seed, replication)
    state = np.array([config.a, config.b], dtype=np.int64)
    acc = np.zeros(kernel.N_ACC, dtype=np.int64)
    x_by_size = np.zeros(cn + 1, dtype=np.int64)
    snap_rows = np.zeros((len(snap_at), kernel.SNAP_WIDTH), dtype=np.int64)
    snap_x = np.zeros((len(snap_at), cn + 1), dtype=np.int64)
    snap_pos = 0
    keep = {"N": [], "X": [], "A": [], "B": []} if keep_records else None
    x_out = np.zeros(BLOCK, dtype=np.int64)

    for start in range(1, config.horizon + 1, BLOCK):
        size = min(BLOCK, config.horizon - start + 1)
        sizes = ss.draw_block(streams.sample_size, BLOCK)
        unif = streams.draw.random((BLOCK, cn))
        a_vals, b_vals = rf.draw_block(streams.reinforcement, start, BLOCK)
        status, snap_pos = kernel.advance(
            state, acc, x_by_size, start, sizes[:size], a_vals[:size], b_vals[:size], unif,
            snap_at, snap_pos, snap_rows, snap_x, x_out,
        )
        if status:
            i = status - start
            raise ModelViolation(f"sample size {int(sizes[i])} outside 1..{int(state.sum())}", n=int(status))
        if keep is not None:
            keep["N"].append(sizes[:size].copy())
            keep["X"].append(x_out[:size].copy())
            keep["A"].append(a_vals[:size].copy())
            keep["B"].append(b_vals[:size].copy())

    final_row = np.zeros(kernel.SNAP_WIDTH, dtype=np.int64)
    final_row[kernel.SNAP_N] = config.horizon
    final_row[kernel.SNAP_ACC0:] = acc
    snaps = [
        Snapshot(*(int(v) for v in row[: kernel.SNAP_ACC0]), acc=_acc_from_row(row, sx))
        for row, sx in zip(snap_rows, snap_x)
    ]
    return Trajectory(
        replication=replication,
        state=UrnState(config.a, config.b, int(state[0]), int(state[1]), config.horizon),
        acc=_acc_from_row(final_row, x_by_size),
        snapshots=snaps,
        records={k: np.concatenate(v) for k, v in keep.items()} if keep is not None else None,
    )


def _run_python(config, replication, snap_at, keep_records) -> Trajectory:
    ss = config.model.sample_size
    rf = config.model.reinforcement
    cn = ss.bound
    streams = TrajectoryStreams(config.seed, replication)
    state = new_urn(config.a, config.b)
    acc = Accumulators()
    snaps: list[Snapshot] = []
    wanted = set(int(s) for s in snap_at)
    keep = {"N": [], "X": [], "A": [], "B": []} if keep_records else None
    last = None

    for start in range(1, config.horizon + 1, BLOCK):
        size = min(BLOCK, config.horizon - start + 1)
        sizes = ss.draw_block(streams.sample_size, BLOCK) if ss.iid else None
        unif = streams.draw.random((BLOCK, cn))
        a_vals, b_vals = rf.draw_block(streams.reinforcement, start, BLOCK)
        for i in range(size):
            n = start + i
            if sizes is not None:
                N = int(sizes[i])
            else:
                N = ss.propose(PastSummary(n, state.S, state.H, last), streams.sample_size)
            if N < 1 or N > state.S:
                raise ModelViolation(f"sample size {N} outside 1..{state.S}", n=n)
            rec = step(state, N, int(a_vals[i]), int(b_vals[i]), _Row(unif[i]))
            state = state.advanced(rec)
            acc.update(rec)
            last = rec
            if keep is not None:
                for k, v in (("N", rec.N), ("X", rec.X), ("A", rec.A), ("B", rec.B)):
                    keep[k].append(v)
            if n in wanted:
                snaps.append(Snapshot(n, rec.N, rec.X, rec.A, rec.B, rec.H_after, rec.K_after,
                                      acc=_copy_acc(acc)))

    return Trajectory(
        replication=replication,
        state=state,
        acc=acc,
        snapshots=snaps,
        records={k: np.asarray(v, dtype=np.int64) for k, v in keep.items()} if keep is not None else None,
    )


def _copy_acc(acc: Accumulators) -> Accumulators:
    return replace(acc, x_by_size=dict(acc.x_by_size))


# ---------------------------------------------------------------- replications


@dataclass
class ReplicationResult:
    replication: int
    n: int
    H: int
    K: int
    estimates: Estimates
    result: Optional[TestResult]
    status: str
    detail: str = ""
    approx_power_true: Optional[float] = None

    @property
    def Z(self) -> float:
        return self.H / (self.H + self.K)


def build_test_inputs(acc: Accumulators, opts: TestOptions) -> TestInputs:
    return TestInputs.from_accumulators(
        acc, min_count=opts.min_count, require_mixed=opts.require_mixed,
        z_plugin=opts.z_plugin, known_N=opts.known_N, known_Q=opts.known_Q,
    )


def evaluate(acc: Accumulators, config: ExperimentConfig, theta: Optional[float] = None):
    """Test result for the accumulated data, or ``(None, reason)`` when it cannot be formed."""
    opts = config.test
    theta = config.theta if theta is None else theta
    try:
        inputs = build_test_inputs(acc, opts)
        res = run_test(inputs, theta, opts.gamma_floor, opts.gamma_hard_error, opts.gamma_form)
    except InsufficientData as exc:
        return None, None, str(exc)
    return inputs, res, ""


def run_replication(config: ExperimentConfig, replication: int) -> ReplicationResult:
    traj = run_trajectory(config, replication)
    inputs, res, detail = evaluate(traj.acc, config)
    apt = None
    if res is not None:
        apt = approximate_power(inputs, config.theta, config.test.gamma_floor, delta=config.true_delta,
                                form=config.test.gamma_form)
    return ReplicationResult(
        replication=replication, n=traj.state.n, H=traj.state.H, K=traj.state.K,
        estimates=estimate_all(traj.acc), result=res,
        status="ok" if res is not None else "insufficient", detail=detail,
        approx_power_true=apt,
    )


def _run_one(args):
    config, rep = args
    return run_replication(config, rep)


def _map_tasks(tasks: list, jobs: int) -> list[ReplicationResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(tasks) // (8 * jobs))
        return list(pool.map(_run_one, tasks, chunksize=chunk))


def run_replications(config: ExperimentConfig, jobs: Optional[int] = None) -> list[ReplicationResult]:
    """All replications, ordered by replication index regardless of scheduling."""
    jobs = config.jobs if jobs is None else jobs
    out = _map_tasks([(config, r) for r in range(config.replications)], jobs)
    return sorted(out, key=lambda r: r.replication)


# ----------------------------------------------------------------- level/power


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    z = normal_quantile(0.5 + level / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class LevelReport:
    theta: float
    rate: float
    ci_lo: float
    ci_hi: float
    n_reject: int
    n_valid: int
    n_insufficient: int


def rejection_summary(results: Sequence[ReplicationResult], theta: float) -> LevelReport:
    """Rejection rate at level ``theta`` from stored statistics (nested regions across theta)."""
    q = normal_quantile(1.0 - theta)
    valid = [r for r in results if r.result is not None]
    k = sum(1 for r in valid if r.result.zeta0 > q)
    lo, hi = wilson_interval(k, len(valid))
    rate = k / len(valid) if valid else float("nan")
    return LevelReport(theta, rate, lo, hi, k, len(valid), len(results) - len(valid))


def empirical_rejection_rate(config: ExperimentConfig, theta: Optional[float] = None,
                             results: Optional[Sequence[ReplicationResult]] = None) -> LevelReport:
    if config.replications < 100:
        warnings.warn(f"only {config.replications} replications; rejection rate will be noisy", stacklevel=2)
    if results is None:
        results = run_replications(config)
    return rejection_summary(results, config.theta if theta is None else theta)


@dataclass(frozen=True)
class PowerPoint:
    delta: float
    p_a: float
    emp_power: float
    ci_lo: float
    ci_hi: float
    approx_power: float
    approx_power_se: float
    approx_power_true: float
    n_valid: int
    n_insufficient: int


def with_delta(config: ExperimentConfig, delta: float) -> ExperimentConfig:
    """Same experiment with ``p_A`` raised so that ``m_A - m_B = delta``."""
    rf = config.model.reinforcement
    if not isinstance(rf, ShiftedMultinomial):
        raise ConfigError("power curves vary p_A of a shifted_multinomial reinforcement")
    if rf.size == 0:
        raise ConfigError("multinomial size 0 cannot realize a mean difference")
    p_a = rf.p_b + delta / rf.size
    if p_a < 0 or p_a + rf.p_b > 1 + 1e-12:
        raise ConfigError(f"delta={delta} needs p_A={p_a:.6g}, infeasible with p_B={rf.p_b:.6g}")
    model = ModelSpec(config.model.sample_size, ShiftedMultinomial(rf.size, p_a, rf.p_b))
    return replace(config, model=model)


def power_curve(config: ExperimentConfig, deltas: Optional[Sequence[float]] = None,
                jobs: Optional[int] = None) -> list[PowerPoint]:
    """Empirical and approximate power along a grid of mean differences.

    Every grid point reuses the master seed, so points differ only through ``p_A``.
    """
    deltas = config.delta_grid if deltas is None else deltas
    configs = [with_delta(config, d) for d in deltas]
    jobs = config.jobs if jobs is None else jobs
    tasks = [(cfg, r) for cfg in configs for r in range(cfg.replications)]
    flat = _map_tasks(tasks, jobs)
    points = []
    for i, (d, cfg) in enumerate(zip(deltas, configs)):
        results = sorted(flat[i * cfg.replications:(i + 1) * cfg.replications], key=lambda r: r.replication)
        points.append(summarize_power(d, cfg, results))
        log.info("delta=%.4f emp=%.3f approx=%.3f", d, points[-1].emp_power, points[-1].approx_power)
    return points


def summarize_power(delta: float, config: ExperimentConfig, results: Sequence[ReplicationResult]) -> PowerPoint:
    lvl = rejection_summary(results, config.theta)
    ap = np.array([r.result.approx_power for r in results if r.result is not None])
    apt = np.array([r.approx_power_true for r in results if r.result is not None])
    se = float(ap.std(ddof=1) / math.sqrt(len(ap))) if len(ap) > 1 else float("nan")
    return PowerPoint(
        delta=float(delta), p_a=config.model.reinforcement.p_a,
        emp_power=lvl.rate, ci_lo=lvl.ci_lo, ci_hi=lvl.ci_hi,
        approx_power=float(ap.mean()) if len(ap) else float("nan"),
        approx_power_se=se,
        approx_power_true=float(apt.mean()) if len(apt) else float("nan"),
        n_valid=lvl.n_valid, n_insufficient=lvl.n_insufficient,
    )


# ----------------------------------------------------------------- growth rate


@dataclass
class RateReport:
    target: float
    slope: float
    n: np.ndarray
    K: np.ndarray
    H: np.ndarray
    K_ratio: np.ndarray
    residual_ratio: np.ndarray
    NB_ratio: np.ndarray
    H_over_K_power: np.ndarray
    allocation: np.ndarray
    NB_consistency: Optional[np.ndarray]
    spread: dict[str, float]


def relative_spread(n: np.ndarray, series: np.ndarray, decades: float = 1.0) -> float:
    """(max - min) / median of ``series`` over the last ``decades`` of ``n``."""
    tail = series[n >= n[-1] / 10**decades]
    return float((tail.max() - tail.min()) / np.median(tail))


def loglog_slope(n: np.ndarray, y: np.ndarray, window: float = 0.5) -> float:
    """Least-squares slope of ``log y`` on ``log n`` over the trailing ``window`` of ``log n``."""
    ln = np.log(n.astype(float))
    keep = ln >= (1.0 - window) * ln[-1]
    if keep.sum() < 2:
        raise ValueError("fewer than two points in the slope window")
    slope, _ = np.polyfit(ln[keep], np.log(y[keep].astype(float)), 1)
    return float(slope)


def rate_diagnostics(snapshots: Sequence[Snapshot], m_a: float, m_b: float,
                     N: Optional[float] = None, window: float = 0.5) -> RateReport:
    """Compare ``K_n`` and related series against the ``n**(m_B/m_A)`` growth law."""
    if not m_a > m_b:
        raise ConfigError(f"growth-rate diagnostics need m_A > m_B, got m_A={m_a}, m_B={m_b}")
    r = m_b / m_a
    n = np.array([s.n for s in snapshots], dtype=np.int64)
    K = np.array([s.K for s in snapshots], dtype=float)
    H = np.array([s.H for s in snapshots], dtype=float)
    NB = np.array([s.acc.N_B for s in snapshots], dtype=float)
    NA = np.array([s.acc.N_A for s in snapshots], dtype=float)
    sumN = np.array([s.acc.sum_N for s in snapshots], dtype=float)
    nf = n.astype(float)
    K_ratio = K / nf**r
    residual = nf ** (1 - r) * K / (H + K)
    NB_ratio = NB / nf**r
    # log form avoids overflow of K**(m_A/m_B)
    h_over = np.exp(np.log(H) - np.log(K) / r)
    consistency = None
    if N is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            consistency = NB_ratio / (residual * N / r)
    spread = {
        "K_ratio": relative_spread(n, K_ratio),
        "residual_ratio": relative_spread(n, residual),
        "H_over_K_power": relative_spread(n, h_over),
    }
    positive = NB_ratio > 0
    if positive.any():
        spread["NB_ratio"] = relative_spread(n[positive], NB_ratio[positive])
    return RateReport(
        target=r, slope=loglog_slope(n, K, window), n=n, K=K, H=H,
        K_ratio=K_ratio, residual_ratio=residual, NB_ratio=NB_ratio,
        H_over_K_power=h_over, allocation=NA / sumN, NB_consistency=consistency,
        spread=spread,
    )


def diagnose(config: ExperimentConfig, replication: int) -> RateReport:
    m = config.model.reinforcement.moments()
    if m.regime != A_GREATER:
        raise ConfigError(f"growth-rate diagnostics need m_A > m_B; model regime is {m.regime}")
    traj = run_trajectory(config, replication, snapshots=log_schedule(config.horizon, config.log_ratio))
    N = config.test.known_N if config.test.known_N is not None else config.model.sample_size.moments().N
    return rate_diagnostics(traj.snapshots, m.m_a, m.m_b, N, config.slope_window)
