"""One-sided test of ``m_A = m_B`` against ``m_A > m_B`` from a single trajectory."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Optional

from .errors import DegenerateNormalization, InsufficientData
from .estimators import Accumulators, estimate_all

NULL = "null"
NULL_PUBLISHED = "null_published"
ALT = "alt"
FORMS = (NULL, NULL_PUBLISHED, ALT)

GAMMA_FLOOR = 1e-3

_STD = NormalDist()


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    return _STD.inv_cdf(p)


def lambda_n(var_a: float, var_b: float, N_A: int, N_B: int) -> float:
    """Variance share of color A's mean estimate; the common ``1/n`` is dropped."""
    num = var_a * N_B
    den = num + var_b * N_A
    if N_A + N_B <= 0 or den <= 0:
        raise InsufficientData("lambda undefined: no draws or zero variances")
    return num / den


def gamma_hat(form: str, lam: float, z: float, qn: float, rho: float) -> float:
    """Normalization ``Gamma``; ``qn`` is ``Q/N`` and ``z`` the plug-in for ``Z``.

    ``null`` is the asymptotic variance of the standardized difference
    ``m_A - m_B`` when the means are equal: the covariance of the two mean
    estimates enters with a minus sign and carries a ``sqrt(z(1-z))`` factor.
    ``null_published`` is the variant with ``+2 rho sqrt(lam(1-lam))`` and no
    such factor; with negatively correlated reinforcements it understates the
    variance and inflates the level. ``alt`` applies when ``m_A > m_B``.

    Returned raw: it can dip below zero in finite samples (see ``normalization``).
    """
    if form == ALT:
        return 1.0 + (qn - 1.0) * lam
    base = (2.0 * z - 1.0) * lam - z
    cross = 2.0 * rho * math.sqrt(lam * (1.0 - lam))
    if form == NULL:
        return qn + (qn - 1.0) * (base - cross * math.sqrt(max(z * (1.0 - z), 0.0)))
    if form == NULL_PUBLISHED:
        return qn + (qn - 1.0) * (base + cross)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class TestInputs:
    __test__ = False

    n: int
    N_A: int
    N_B: int
    m_a: float
    m_b: float
    var_a: float
    var_b: float
    rho: float
    z: float
    mu_N: float
    q_N: float
    rho_raw: Optional[float] = None

    @property
    def qn(self) -> float:
        return self.q_N / self.mu_N

    @property
    def lam(self) -> float:
        return lambda_n(self.var_a, self.var_b, self.N_A, self.N_B)

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.var_a / self.N_A + self.var_b / self.N_B)

    def swapped(self) -> "TestInputs":
        """Same data with the color labels exchanged."""
        return TestInputs(
            n=self.n, N_A=self.N_B, N_B=self.N_A, m_a=self.m_b, m_b=self.m_a,
            var_a=self.var_b, var_b=self.var_a, rho=self.rho, z=1.0 - self.z,
            mu_N=self.mu_N, q_N=self.q_N, rho_raw=self.rho_raw,
        )

    @classmethod
    def from_accumulators(
        cls,
        acc: Accumulators,
        *,
        min_count: int = 30,
        require_mixed: bool = True,
        z_plugin: str = "proportion_mean",
        known_N: Optional[float] = None,
        known_Q: Optional[float] = None,
    ) -> "TestInputs":
        est = estimate_all(acc)
        if est.N_A < max(min_count, 1) or est.N_B < max(min_count, 1):
            raise InsufficientData(f"need N_A, N_B >= {min_count}, have {est.N_A}, {est.N_B}")
        if require_mixed and est.q_ab is None:
            raise InsufficientData("no mixed sample observed yet; q_AB undefined")
        if not est.var_a or not est.var_b:
            raise InsufficientData("a reinforcement variance estimate is zero")
        if z_plugin == "proportion_mean":
            z = est.M
        elif z_plugin == "allocation":
            z = est.allocation
        else:
            raise ValueError(f"unknown z_plugin {z_plugin!r}")
        # without a mixed sample rho is undefined; its term only matters when Q > N
        rho = est.rho if est.rho is not None else 0.0
        mu, qN = (known_N, known_Q) if known_N is not None and known_Q is not None else (est.mu_N, est.q_N)
        return cls(
            n=est.n, N_A=est.N_A, N_B=est.N_B, m_a=est.m_a, m_b=est.m_b,
            var_a=est.var_a, var_b=est.var_b, rho=rho, z=z, mu_N=mu, q_N=qN,
            rho_raw=est.rho_raw,
        )


@dataclass(frozen=True)
class Normalization:
    raw: float
    used: float
    floored: bool


def normalization(inputs: TestInputs, form: str = NULL, floor: float = GAMMA_FLOOR,
                  hard_error: bool = False) -> Normalization:
    raw = gamma_hat(form, inputs.lam, inputs.z, inputs.qn, inputs.rho)
    if raw > floor:
        return Normalization(raw, raw, False)
    if hard_error:
        raise DegenerateNormalization(f"degenerate normalization: Gamma = {raw:.6g} <= {floor}")
    return Normalization(raw, floor, True)


def zeta_statistic(inputs: TestInputs, mean_offset: float = 0.0, form: str = NULL,
                   floor: float = GAMMA_FLOOR, hard_error: bool = False) -> float:
    gamma = normalization(inputs, form, floor, hard_error).used
    return (inputs.m_a - inputs.m_b - mean_offset) / inputs.standard_error / math.sqrt(gamma)


def approximate_power(inputs: TestInputs, theta: float, floor: float = GAMMA_FLOOR,
                      hard_error: bool = False, delta: Optional[float] = None,
                      form: str = NULL) -> float:
    """Normal approximation of the power at level ``theta``.

    The noncentrality uses the estimated difference ``m_a - m_b`` unless a
    known ``delta`` is supplied.
    """
    gamma = normalization(inputs, form, floor, hard_error).used
    diff = inputs.m_a - inputs.m_b if delta is None else delta
    shift = diff / inputs.standard_error / math.sqrt(gamma)
    return normal_cdf(shift - normal_quantile(1.0 - theta))


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    n: int
    lam: float
    gamma0: float
    gamma0_raw: float
    zeta0: float
    p_value: float
    theta: float
    threshold: float
    reject: bool
    approx_power: float
    floored: bool
    rho_raw: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def run_test(inputs: TestInputs, theta: float, floor: float = GAMMA_FLOOR,
             hard_error: bool = False, form: str = NULL) -> TestResult:
    """Reject ``m_A = m_B`` when the null-normalized statistic exceeds ``q_{1-theta}``.

    ``form`` picks the null normalization (``null`` or ``null_published``).
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {theta}")
    if form not in (NULL, NULL_PUBLISHED):
        raise ValueError(f"the test statistic uses a null form, got {form!r}")
    norm = normalization(inputs, form, floor, hard_error)
    shift = (inputs.m_a - inputs.m_b) / inputs.standard_error / math.sqrt(norm.used)
    q = normal_quantile(1.0 - theta)
    return TestResult(
        n=inputs.n,
        lam=inputs.lam,
        gamma0=norm.used,
        gamma0_raw=norm.raw,
        zeta0=shift,
        p_value=normal_sf(shift),
        theta=theta,
        threshold=q,
        reject=shift > q,
        approx_power=normal_cdf(shift - q),
        floored=norm.floored,
        rho_raw=inputs.rho_raw,
    )
