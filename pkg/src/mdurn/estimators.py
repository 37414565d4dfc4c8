"""Streaming sums and the strongly consistent plug-in estimators built from them.

Every accumulator is an exact integer. The sum of sample proportions
``sum_j X_j / N_j`` is kept as integer totals of ``X`` per sample size, so it
is exact too and only rounded when read. Undefined estimates are ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Iterable, Optional

from .urn import StepRecord

INT_FIELDS = (
    "sum_N", "sum_N2", "N_A", "N_B", "sum_AX", "sum_B_NX",
    "sum_A2X", "sum_B2_NX", "sum_ABX_NX", "sum_X_NX",
)


@dataclass
class Accumulators:
    n: int = 0
    sum_N: int = 0
    sum_N2: int = 0
    N_A: int = 0
    N_B: int = 0
    sum_AX: int = 0
    sum_B_NX: int = 0
    sum_A2X: int = 0
    sum_B2_NX: int = 0
    sum_ABX_NX: int = 0
    sum_X_NX: int = 0
    x_by_size: dict[int, int] = field(default_factory=dict)

    def update(self, rec: StepRecord) -> "Accumulators":
        if rec.n != self.n + 1:
            raise ValueError(f"record for step {rec.n} cannot follow step {self.n}")
        N, X, A, B = rec.N, rec.X, rec.A, rec.B
        Y = N - X
        self.n += 1
        self.sum_N += N
        self.sum_N2 += N * N
        self.N_A += X
        self.N_B += Y
        self.sum_AX += A * X
        self.sum_B_NX += B * Y
        self.sum_A2X += A * A * X
        self.sum_B2_NX += B * B * Y
        self.sum_ABX_NX += A * B * X * Y
        self.sum_X_NX += X * Y
        self.x_by_size[N] = self.x_by_size.get(N, 0) + X
        return self

    @classmethod
    def from_records(cls, records: Iterable[StepRecord]) -> "Accumulators":
        acc = cls()
        for rec in records:
            acc.update(rec)
        return acc

    @property
    def sum_prop(self) -> float:
        # at most one term per sample size, so exact-then-round is cheap
        return float(self.sum_prop_exact)

    @property
    def sum_prop_exact(self) -> Fraction:
        return sum((Fraction(x, d) for d, x in self.x_by_size.items()), Fraction(0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Accumulators):
            return NotImplemented
        same = all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self) if f.name != "x_by_size")
        mine = {d: x for d, x in self.x_by_size.items() if x}
        theirs = {d: x for d, x in other.x_by_size.items() if x}
        return same and mine == theirs


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def estimate_means(acc: Accumulators) -> tuple[Optional[float], Optional[float]]:
    return _ratio(acc.sum_AX, acc.N_A), _ratio(acc.sum_B_NX, acc.N_B)


def estimate_second_moments(acc: Accumulators) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """``q_AB`` needs at least one mixed sample (0 < X < N)."""
    return (
        _ratio(acc.sum_A2X, acc.N_A),
        _ratio(acc.sum_B2_NX, acc.N_B),
        _ratio(acc.sum_ABX_NX, acc.sum_X_NX),
    )


def _weighted_variance(sq: int, lin: int, count: int) -> Optional[float]:
    # (sum w a^2 * sum w - (sum w a)^2) / (sum w)^2, exact numerator
    if count <= 0:
        return None
    return (sq * count - lin * lin) / (count * count)


@dataclass(frozen=True)
class VarianceEstimates:
    var_a: Optional[float]
    var_b: Optional[float]
    rho_raw: Optional[float]

    @property
    def rho(self) -> Optional[float]:
        """Correlation clamped to [-1, 1]; the raw value can stray outside in finite samples."""
        if self.rho_raw is None:
            return None
        return min(1.0, max(-1.0, self.rho_raw))


def estimate_variances_corr(acc: Accumulators) -> VarianceEstimates:
    var_a = _weighted_variance(acc.sum_A2X, acc.sum_AX, acc.N_A)
    var_b = _weighted_variance(acc.sum_B2_NX, acc.sum_B_NX, acc.N_B)
    m_a, m_b = estimate_means(acc)
    q_ab = _ratio(acc.sum_ABX_NX, acc.sum_X_NX)
    rho = None
    if var_a and var_b and q_ab is not None:
        rho = (q_ab - m_a * m_b) / math.sqrt(var_a * var_b)
    return VarianceEstimates(var_a, var_b, rho)


def estimate_sample_size_moments(acc: Accumulators) -> tuple[Optional[float], Optional[float]]:
    if acc.n == 0:
        return None, None
    return acc.sum_N / acc.n, acc.sum_N2 / acc.n


def empirical_proportion_mean(acc: Accumulators) -> Optional[float]:
    """Average of the per-step sample proportions ``X_j / N_j``."""
    if acc.n == 0:
        return None
    return acc.sum_prop / acc.n


def allocation_proportion(acc: Accumulators) -> Optional[float]:
    return _ratio(acc.N_A, acc.sum_N)


@dataclass(frozen=True)
class Estimates:
    n: int
    N_A: int
    N_B: int
    m_a: Optional[float]
    m_b: Optional[float]
    q_a: Optional[float]
    q_b: Optional[float]
    q_ab: Optional[float]
    var_a: Optional[float]
    var_b: Optional[float]
    rho_raw: Optional[float]
    rho: Optional[float]
    mu_N: Optional[float]
    q_N: Optional[float]
    M: Optional[float]
    allocation: Optional[float]


def estimate_all(acc: Accumulators) -> Estimates:
    m_a, m_b = estimate_means(acc)
    q_a, q_b, q_ab = estimate_second_moments(acc)
    v = estimate_variances_corr(acc)
    mu, qn = estimate_sample_size_moments(acc)
    return Estimates(
        n=acc.n, N_A=acc.N_A, N_B=acc.N_B,
        m_a=m_a, m_b=m_b, q_a=q_a, q_b=q_b, q_ab=q_ab,
        var_a=v.var_a, var_b=v.var_b, rho_raw=v.rho_raw, rho=v.rho,
        mu_N=mu, q_N=qn, M=empirical_proportion_mean(acc),
        allocation=allocation_proportion(acc),
    )
