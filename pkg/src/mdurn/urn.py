"""Two-color urn with random multidrawing and multiplicative reinforcement.

State is kept in exact integers. The proportion ``Z`` is derived on demand
from ``H`` and ``S`` and never accumulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ModelViolation

# Exact binomials for small urns or small samples; log-gamma only beyond both.
EXACT_PMF_LIMIT = 60
EXACT_SAMPLE_LIMIT = 1000


@dataclass(frozen=True)
class UrnState:
    a: int
    b: int
    H: int
    K: int
    n: int = 0

    @property
    def S(self) -> int:
        return self.H + self.K

    @property
    def Z(self) -> float:
        return self.H / self.S

    @property
    def Z_exact(self) -> Fraction:
        return Fraction(self.H, self.S)

    def advanced(self, rec: "StepRecord") -> "UrnState":
        """Return the state after ``rec`` has been applied."""
        if rec.n != self.n + 1:
            raise ValueError(f"record for step {rec.n} cannot follow step {self.n}")
        return UrnState(self.a, self.b, rec.H_after, rec.K_after, rec.n)


@dataclass(frozen=True)
class StepRecord:
    n: int
    N: int
    X: int
    A: int
    B: int
    H_after: int
    K_after: int

    @property
    def S_after(self) -> int:
        return self.H_after + self.K_after

    @property
    def Z_after(self) -> float:
        return self.H_after / self.S_after


def new_urn(a: int, b: int) -> UrnState:
    if int(a) != a or int(b) != b or a < 1 or b < 1:
        raise ValueError(f"both colors must be present initially, got a={a}, b={b}")
    return UrnState(int(a), int(b), int(a), int(b), 0)


def hypergeometric_support(N: int, S: int, H: int) -> range:
    """Possible numbers of color-A balls in a sample of ``N`` out of ``S`` balls, ``H`` of them A."""
    if not 0 <= H <= S:
        raise ValueError(f"need 0 <= H <= S, got H={H}, S={S}")
    if N < 1 or N > S:
        raise ValueError(f"sample size must lie in 1..{S}, got {N}")
    return range(max(0, N - (S - H)), min(N, H) + 1)


def hypergeometric_pmf(N: int, S: int, H: int, k: int) -> float:
    support = hypergeometric_support(N, S, H)
    if k not in support:
        raise ValueError(f"k={k} outside support [{support.start}, {support.stop - 1}]")
    if S <= EXACT_PMF_LIMIT or min(N, S - N) <= EXACT_SAMPLE_LIMIT:
        # int / int true division is correctly rounded
        return math.comb(H, k) * math.comb(S - H, N - k) / math.comb(S, N)
    return math.exp(_log_comb(H, k) + _log_comb(S - H, N - k) - _log_comb(S, N))


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def hypergeometric_from_uniforms(u, N: int, S: int, H: int) -> int:
    """Sequential draw without replacement driven by ``N`` uniforms in [0, 1).

    Ball ``t`` is color A when ``u[t] * remaining_total < remaining_A``.
    The numba kernel applies the identical rule, so both paths agree bit for bit.
    """
    h, s, x = H, S, 0
    for t in range(N):
        if u[t] * s < h:
            x += 1
            h -= 1
        s -= 1
    return x


def sample_hypergeometric(rng, N: int, S: int, H: int, size: int | None = None):
    """Number of color-A balls in a sample of ``N`` drawn without replacement.

    ``rng`` is anything with a numpy-style ``random(shape)`` method. With
    ``size`` given, returns an int64 array of independent draws; these are the
    same values ``size`` consecutive scalar calls would produce.
    """
    if N < 1 or N > S:
        raise ValueError(f"sample size must lie in 1..{S}, got {N}")
    if not 0 <= H <= S:
        raise ValueError(f"need 0 <= H <= S, got H={H}, S={S}")
    if size is None:
        return hypergeometric_from_uniforms(rng.random(N), N, S, H)

    u = rng.random((size, N))
    h = np.full(size, H, dtype=np.int64)
    x = np.zeros(size, dtype=np.int64)
    for t in range(N):
        hit = u[:, t] * (S - t) < h
        x += hit
        h -= hit
    return x


def step(state: UrnState, N: int, A: int, B: int, rng) -> StepRecord:
    """Draw ``N`` balls, then add ``A*X`` color-A and ``B*(N-X)`` color-B balls."""
    if A < 1 or B < 1:
        raise ModelViolation(f"reinforcements must be >= 1, got A={A}, B={B}", n=state.n + 1)
    if N < 1 or N > state.S:
        raise ModelViolation(
            f"sample size {N} outside 1..{state.S}", n=state.n + 1
        )
    X = sample_hypergeometric(rng, N, state.S, state.H)
    return _record(state, N, X, A, B)


def replay_step(state: UrnState, N: int, X: int, A: int, B: int) -> StepRecord:
    """Apply a recorded draw ``X`` instead of sampling it (trace tests only)."""
    if A < 1 or B < 1:
        raise ModelViolation(f"reinforcements must be >= 1, got A={A}, B={B}", n=state.n + 1)
    if X not in hypergeometric_support(N, state.S, state.H):
        raise ModelViolation(f"X={X} impossible for N={N}, H={state.H}, K={state.K}", n=state.n + 1)
    return _record(state, N, X, A, B)


def _record(state: UrnState, N: int, X: int, A: int, B: int) -> StepRecord:
    return StepRecord(
        n=state.n + 1,
        N=int(N),
        X=int(X),
        A=int(A),
        B=int(B),
        H_after=state.H + A * X,
        K_after=state.K + B * (N - X),
    )
