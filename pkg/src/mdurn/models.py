"""Generators for the sample size ``N_n`` and the reinforcement pair ``(A_n, B_n)``.

Sample-size models may look at a :class:`PastSummary`; reinforcement models
only ever see the step index and their own random stream, which is what keeps
``(A_n, B_n)`` independent of the urn's history.

All models are immutable. Construction does not raise; call
:func:`validate_model` or build a :class:`ModelSpec`, which refuses invalid parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, ModelViolation
from .urn import StepRecord

NORMALIZATION_TOL = 1e-9

EQUAL = "equal"
A_GREATER = "a_greater"
B_GREATER = "b_greater"
UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, detail: str) -> None:
        self.violations.append(Violation(code, detail))

    def extend(self, other: "ValidationReport", prefix: str = "") -> None:
        for v in other.violations:
            self.violations.append(Violation(v.code, prefix + v.detail))

    def __str__(self) -> str:
        return "; ".join(f"[{v.code}] {v.detail}" for v in self.violations) or "ok"


class ModelValidationError(ConfigError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(f"invalid model: {report}")


@dataclass(frozen=True)
class PastSummary:
    """Read-only snapshot offered to past-dependent sample-size rules.

    ``n`` is the index of the step about to be taken; ``S``, ``H`` and ``Z``
    describe the urn after step ``n - 1``.
    """

    n: int
    S: int
    H: int
    last: Optional[StepRecord] = None

    @property
    def Z(self) -> float:
        return self.H / self.S


@dataclass(frozen=True)
class SizeMoments:
    N: Optional[float]
    Q: Optional[float]

    @property
    def known(self) -> bool:
        return self.N is not None and self.Q is not None


@dataclass(frozen=True)
class MomentReport:
    m_a: float
    m_b: float
    q_a: float
    q_b: float
    q_ab: float
    var_a: float
    var_b: float
    cov_ab: float
    rho_ab: Optional[float]
    regime: str
    ratio: float  # m_b / m_a


def _regime(m_a: float, m_b: float) -> str:
    if math.isclose(m_a, m_b, rel_tol=1e-12, abs_tol=0.0):
        return EQUAL
    return A_GREATER if m_a > m_b else B_GREATER


def _report(m_a, m_b, q_a, q_b, q_ab, regime=None) -> MomentReport:
    var_a = max(q_a - m_a * m_a, 0.0)
    var_b = max(q_b - m_b * m_b, 0.0)
    cov = q_ab - m_a * m_b
    rho = cov / math.sqrt(var_a * var_b) if var_a > 0 and var_b > 0 else None
    return MomentReport(
        m_a=m_a, m_b=m_b, q_a=q_a, q_b=q_b, q_ab=q_ab,
        var_a=var_a, var_b=var_b, cov_ab=cov, rho_ab=rho,
        regime=regime or _regime(m_a, m_b), ratio=m_b / m_a,
    )


def _check_pmf(values, probs, what: str) -> ValidationReport:
    rep = ValidationReport()
    if len(values) != len(probs) or not values:
        rep.add("shape", f"{what}: need equally many values and probabilities, at least one")
        return rep
    for v in values:
        if int(v) != v or v < 1:
            rep.add("support", f"{what}: value {v} not a positive integer")
    if any(p < 0 for p in probs):
        rep.add("negative-probability", f"{what}: probabilities must be >= 0")
    total = math.fsum(probs)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        rep.add("normalization", f"{what}: probabilities sum to {total!r}, not 1")
    return rep


def _pmf_moments(values, probs) -> tuple[float, float]:
    m = math.fsum(p * v for v, p in zip(values, probs))
    q = math.fsum(p * v * v for v, p in zip(values, probs))
    return m, q


# ---------------------------------------------------------------- sample sizes


@dataclass(frozen=True)
class ConstantSize:
    kappa: int
    kind = "constant"
    iid = True

    @property
    def bound(self) -> int:
        return int(self.kappa)

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if int(self.kappa) != self.kappa or self.kappa < 1:
            rep.add("support", f"constant sample size must be a positive integer, got {self.kappa}")
        return rep

    def moments(self) -> SizeMoments:
        return SizeMoments(float(self.kappa), float(self.kappa) ** 2)

    def draw_block(self, rng, size: int) -> np.ndarray:
        return np.full(size, self.kappa, dtype=np.int64)


@dataclass(frozen=True)
class UniformSize:
    """``N_n`` uniform on ``{1, ..., upper}``, independent of the past."""

    upper: int
    kind = "uniform"
    iid = True

    @property
    def bound(self) -> int:
        return int(self.upper)

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if int(self.upper) != self.upper or self.upper < 1:
            rep.add("support", f"uniform upper bound must be a positive integer, got {self.upper}")
        return rep

    def moments(self) -> SizeMoments:
        u = int(self.upper)
        return SizeMoments((u + 1) / 2, (u + 1) * (2 * u + 1) / 6)

    def draw_block(self, rng, size: int) -> np.ndarray:
        return rng.integers(1, self.upper + 1, size=size, dtype=np.int64)


@dataclass(frozen=True)
class TableSize:
    values: tuple[int, ...]
    probs: tuple[float, ...]
    kind = "table"
    iid = True

    @property
    def bound(self) -> int:
        return int(max(self.values))

    def check(self) -> ValidationReport:
        return _check_pmf(self.values, self.probs, "sample-size table")

    def moments(self) -> SizeMoments:
        return SizeMoments(*_pmf_moments(self.values, self.probs))

    def draw_block(self, rng, size: int) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)[
            rng.choice(len(self.values), size=size, p=np.asarray(self.probs, dtype=float))
        ]


PAST_RULES = ("z_threshold", "z_binomial")


@dataclass(frozen=True)
class PastDependentSize:
    """Sample size chosen from the current urn composition.

    ``z_threshold``: ``high`` when ``Z_{n-1} >= threshold``, else ``low``.
    ``z_binomial``: ``low + Binomial(high - low, Z_{n-1})``.

    Limits ``N`` and ``Q`` are not derivable in general; declare them via
    ``limit_N`` / ``limit_Q`` when they are known.
    """

    rule: str
    low: int
    high: int
    threshold: float = 0.5
    limit_N: Optional[float] = None
    limit_Q: Optional[float] = None
    kind = "past"
    iid = False

    @property
    def bound(self) -> int:
        return int(self.high)

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if self.rule not in PAST_RULES:
            rep.add("rule", f"unknown past-dependent rule {self.rule!r}; known: {', '.join(PAST_RULES)}")
        if int(self.low) != self.low or int(self.high) != self.high or not 1 <= self.low <= self.high:
            rep.add("support", f"need integers 1 <= low <= high, got low={self.low}, high={self.high}")
        if not 0.0 <= self.threshold <= 1.0:
            rep.add("threshold", f"threshold must lie in [0, 1], got {self.threshold}")
        if (self.limit_N is None) != (self.limit_Q is None):
            rep.add("limits", "declare both limit_N and limit_Q or neither")
        return rep

    def moments(self) -> SizeMoments:
        return SizeMoments(self.limit_N, self.limit_Q)

    def propose(self, past: PastSummary, rng) -> int:
        if self.rule == "z_threshold":
            return int(self.high if past.Z >= self.threshold else self.low)
        return int(self.low + rng.binomial(self.high - self.low, past.Z))


SampleSizeModel = Union[ConstantSize, UniformSize, TableSize, PastDependentSize]


def draw_sample_size(model: SampleSizeModel, past: PastSummary, rng) -> int:
    """One draw of ``N_n``; a value above ``S_{n-1}`` is a model error, never clamped."""
    if past.S < 1:
        raise ValueError("urn is empty")
    if model.iid:
        N = int(model.draw_block(rng, 1)[0])
    else:
        N = model.propose(past, rng)
    if N < 1 or N > past.S:
        raise ModelViolation(f"sample size {N} outside 1..{past.S}", n=past.n)
    return N


# -------------------------------------------------------------- reinforcements


@dataclass(frozen=True)
class ConstantPair:
    alpha: int
    beta: int
    kind = "constant"

    @property
    def bound(self) -> int:
        return int(max(self.alpha, self.beta))

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if int(v) != v or v < 1:
                rep.add("support", f"{name} must be a positive integer, got {v}")
        return rep

    def moments(self) -> MomentReport:
        a, b = float(self.alpha), float(self.beta)
        return _report(a, b, a * a, b * b, a * b)

    def mean_at(self, n: int) -> tuple[float, float]:
        return float(self.alpha), float(self.beta)

    def draw_block(self, rng, start_n: int, size: int) -> tuple[np.ndarray, np.ndarray]:
        return np.full(size, self.alpha, dtype=np.int64), np.full(size, self.beta, dtype=np.int64)


@dataclass(frozen=True)
class IndependentPair:
    values_a: tuple[int, ...]
    probs_a: tuple[float, ...]
    values_b: tuple[int, ...]
    probs_b: tuple[float, ...]
    kind = "independent"

    @property
    def bound(self) -> int:
        return int(max(max(self.values_a), max(self.values_b)))

    def check(self) -> ValidationReport:
        rep = _check_pmf(self.values_a, self.probs_a, "A marginal")
        rep.extend(_check_pmf(self.values_b, self.probs_b, "B marginal"))
        return rep

    def moments(self) -> MomentReport:
        m_a, q_a = _pmf_moments(self.values_a, self.probs_a)
        m_b, q_b = _pmf_moments(self.values_b, self.probs_b)
        return _report(m_a, m_b, q_a, q_b, m_a * m_b)

    def mean_at(self, n: int) -> tuple[float, float]:
        m = self.moments()
        return m.m_a, m.m_b

    def draw_block(self, rng, start_n: int, size: int):
        va = np.asarray(self.values_a, dtype=np.int64)
        vb = np.asarray(self.values_b, dtype=np.int64)
        A = va[rng.choice(len(va), size=size, p=np.asarray(self.probs_a, dtype=float))]
        B = vb[rng.choice(len(vb), size=size, p=np.asarray(self.probs_b, dtype=float))]
        return A, B


@dataclass(frozen=True)
class ShiftedMultinomial:
    """``A = 1 + Y1``, ``B = 1 + Y2`` with ``(Y1, Y2, Y3) ~ Multinomial(size; p_a, p_b, 1 - p_a - p_b)``."""

    size: int
    p_a: float
    p_b: float
    kind = "shifted_multinomial"

    @property
    def p_rest(self) -> float:
        return max(0.0, 1.0 - self.p_a - self.p_b)

    @property
    def bound(self) -> int:
        return int(self.size) + 1

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if int(self.size) != self.size or self.size < 0:
            rep.add("support", f"multinomial size must be a nonnegative integer, got {self.size}")
        if self.p_a < 0 or self.p_b < 0:
            rep.add("negative-probability", "p_a and p_b must be >= 0")
        if self.p_a + self.p_b > 1.0 + NORMALIZATION_TOL:
            rep.add("normalization", f"p_a + p_b = {self.p_a + self.p_b!r} exceeds 1")
        return rep

    def moments(self) -> MomentReport:
        s, pa, pb = self.size, self.p_a, self.p_b
        m_a, m_b = 1 + s * pa, 1 + s * pb
        var_a, var_b = s * pa * (1 - pa), s * pb * (1 - pb)
        cov = -s * pa * pb
        return _report(m_a, m_b, var_a + m_a * m_a, var_b + m_b * m_b, cov + m_a * m_b)

    def mean_at(self, n: int) -> tuple[float, float]:
        return 1 + self.size * self.p_a, 1 + self.size * self.p_b

    def draw_block(self, rng, start_n: int, size: int):
        y = rng.multinomial(self.size, [self.p_a, self.p_b, self.p_rest], size=size)
        return 1 + y[:, 0].astype(np.int64), 1 + y[:, 1].astype(np.int64)


@dataclass(frozen=True)
class JointTable:
    pairs: tuple[tuple[int, int], ...]
    probs: tuple[float, ...]
    kind = "joint"

    @property
    def bound(self) -> int:
        return int(max(max(p) for p in self.pairs))

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if len(self.pairs) != len(self.probs) or not self.pairs:
            rep.add("shape", "joint table: need equally many pairs and probabilities, at least one")
            return rep
        for a, b in self.pairs:
            if int(a) != a or int(b) != b or a < 1 or b < 1:
                rep.add("support", f"joint table: pair ({a}, {b}) not in positive integers")
        if any(p < 0 for p in self.probs):
            rep.add("negative-probability", "joint table: probabilities must be >= 0")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            rep.add("normalization", f"joint table: probabilities sum to {total!r}, not 1")
        return rep

    def moments(self) -> MomentReport:
        pr = self.probs
        m_a = math.fsum(p * a for (a, _), p in zip(self.pairs, pr))
        m_b = math.fsum(p * b for (_, b), p in zip(self.pairs, pr))
        q_a = math.fsum(p * a * a for (a, _), p in zip(self.pairs, pr))
        q_b = math.fsum(p * b * b for (_, b), p in zip(self.pairs, pr))
        q_ab = math.fsum(p * a * b for (a, b), p in zip(self.pairs, pr))
        return _report(m_a, m_b, q_a, q_b, q_ab)

    def mean_at(self, n: int) -> tuple[float, float]:
        m = self.moments()
        return m.m_a, m.m_b

    def draw_block(self, rng, start_n: int, size: int):
        table = np.asarray(self.pairs, dtype=np.int64)
        idx = rng.choice(len(table), size=size, p=np.asarray(self.probs, dtype=float))
        return table[idx, 0].copy(), table[idx, 1].copy()


@dataclass(frozen=True)
class PiecewiseSequence:
    """Step-dependent reinforcement: ``models[i]`` is used while ``n < breakpoints[i]``.

    The last model applies from ``breakpoints[-1]`` on and supplies the
    limiting moments. ``envelope = (c, eps)`` declares
    ``|m_{A,n} m_B - m_A m_{B,n}| <= c * n**-eps``.
    """

    models: tuple
    breakpoints: tuple[int, ...]
    envelope: Optional[tuple[float, float]] = None
    kind = "sequence"

    @property
    def bound(self) -> int:
        return max(m.bound for m in self.models)

    def index_at(self, n):
        return np.searchsorted(np.asarray(self.breakpoints, dtype=np.int64), n, side="right")

    def model_at(self, n: int):
        return self.models[int(self.index_at(n))]

    def mean_at(self, n: int) -> tuple[float, float]:
        return self.model_at(n).mean_at(n)

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if len(self.models) != len(self.breakpoints) + 1:
            rep.add("shape", "sequence: need exactly one more model than breakpoints")
            return rep
        for i, m in enumerate(self.models):
            if isinstance(m, PiecewiseSequence):
                rep.add("shape", "sequence: nested sequences are not supported")
                continue
            rep.extend(m.check(), prefix=f"sequence model {i}: ")
        bps = list(self.breakpoints)
        if any(b < 2 for b in bps) or any(x >= y for x, y in zip(bps, bps[1:])):
            rep.add("breakpoints", "sequence: breakpoints must be strictly increasing integers >= 2")
        if not rep.ok:
            return rep

        m_a, m_b = self.models[-1].mean_at(0)
        limit_equal = _regime(m_a, m_b) == EQUAL
        starts = [1] + bps[:-1]
        for i, (lo, hi) in enumerate(zip(starts, bps)):
            ma_n, mb_n = self.models[i].mean_at(lo)
            if limit_equal and _regime(ma_n, mb_n) != EQUAL:
                rep.add(
                    "mixed-regime",
                    f"limit means are equal but step {lo} has m_A={ma_n}, m_B={mb_n}",
                )
                continue
            gap = abs(ma_n * m_b - m_a * mb_n)
            if gap == 0.0:
                continue
            if self.envelope is None:
                rep.add("envelope", "sequence with varying mean ratio must declare envelope (c, eps)")
                break
            c, eps = self.envelope
            if eps <= 0:
                rep.add("envelope", f"envelope exponent must be > 0, got {eps}")
                break
            # envelope decreases in n, so the segment's last step is the binding one
            if gap > c * float(hi - 1) ** (-eps):
                rep.add(
                    "cond-medie",
                    f"|m_A,n m_B - m_A m_B,n| = {gap:.6g} exceeds {c}*n^-{eps} at n={hi - 1}",
                )
        return rep

    def moments(self) -> MomentReport:
        limit = self.models[-1].moments()
        regime = limit.regime
        if regime == EQUAL:
            for m in self.models[:-1]:
                ma, mb = m.mean_at(0)
                if _regime(ma, mb) != EQUAL:
                    regime = UNSUPPORTED
        return _report(limit.m_a, limit.m_b, limit.q_a, limit.q_b, limit.q_ab, regime)

    def draw_block(self, rng, start_n: int, size: int):
        ns = np.arange(start_n, start_n + size, dtype=np.int64)
        idx = self.index_at(ns)
        A = np.empty(size, dtype=np.int64)
        B = np.empty(size, dtype=np.int64)
        for i in np.unique(idx):
            where = idx == i
            a, b = self.models[int(i)].draw_block(rng, start_n, int(where.sum()))
            A[where], B[where] = a, b
        return A, B


ReinforcementModel = Union[ConstantPair, IndependentPair, ShiftedMultinomial, JointTable, PiecewiseSequence]


def draw_reinforcement_pair(model: ReinforcementModel, n: int, rng) -> tuple[int, int]:
    A, B = model.draw_block(rng, n, 1)
    return int(A[0]), int(B[0])


def model_moments(model) -> Union[MomentReport, SizeMoments]:
    return model.moments()


@dataclass(frozen=True)
class ModelSpec:
    """A validated pair of sample-size and reinforcement models."""

    sample_size: SampleSizeModel
    reinforcement: ReinforcementModel

    def __post_init__(self):
        report = validate_model(self)
        if not report.ok:
            raise ModelValidationError(report)

    @property
    def bound(self) -> int:
        return max(self.sample_size.bound, self.reinforcement.bound)


def validate_model(model) -> ValidationReport:
    if isinstance(model, ModelSpec):
        rep = ValidationReport()
        rep.extend(model.sample_size.check(), prefix="sample size: ")
        rep.extend(model.reinforcement.check(), prefix="reinforcement: ")
        return rep
    return model.check()
