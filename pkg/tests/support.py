"""Shared builders for the test suite."""

from fractions import Fraction

from mdurn.models import ConstantPair, ConstantSize, ModelSpec, ShiftedMultinomial, UniformSize
from mdurn.montecarlo import ExperimentConfig

P_B = 4 / 15


def example_model(delta: float = 0.0) -> ModelSpec:
    """Uniform sizes on {1..5}, shifted multinomial (12; p_A, 4/15) with m_A - m_B = delta."""
    return ModelSpec(UniformSize(5), ShiftedMultinomial(12, P_B + delta / 12, P_B))


def example_config(**kw) -> ExperimentConfig:
    kw.setdefault("horizon", 10_000)
    return ExperimentConfig(model=example_model(kw.pop("delta", 0.0)), a=5, b=5, **kw)


def constant_config(alpha: int, beta: int, kappa: int = 1, **kw) -> ExperimentConfig:
    return ExperimentConfig(model=ModelSpec(ConstantSize(kappa), ConstantPair(alpha, beta)), **kw)


def multinomial_pmf(s: int, probs):
    """Exact joint pmf of a 3-cell multinomial as {(y1, y2): Fraction}."""
    from math import comb, factorial

    p1, p2, p3 = (Fraction(p) for p in probs)
    out = {}
    for y1 in range(s + 1):
        for y2 in range(s - y1 + 1):
            y3 = s - y1 - y2
            coef = factorial(s) // (factorial(y1) * factorial(y2) * factorial(y3))
            out[(y1, y2)] = coef * p1**y1 * p2**y2 * p3**y3
    return out


# acceptance results, printed by the terminal-summary hook in conftest
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
