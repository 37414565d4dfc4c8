"""YAML experiment files: parsing into :class:`ExperimentConfig` and echoing back.

Example::

    urn: {a: 5, b: 5}
    sample_size: {kind: uniform, upper: 5}
    reinforcement: {kind: shifted_multinomial, size: 12, p_a: 4/15, p_b: 4/15}
    experiment: {horizon: 10000, replications: 500, seed: 1, theta: 0.05}

Probabilities may be written as fractions (``"4/15"``). Unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import fields, replace
from fractions import Fraction
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .models import (
    ConstantPair,
    ConstantSize,
    IndependentPair,
    JointTable,
    ModelSpec,
    PastDependentSize,
    PiecewiseSequence,
    ShiftedMultinomial,
    TableSize,
    UniformSize,
)
from .montecarlo import DEFAULT_DELTA_GRID, ExperimentConfig, TestOptions

SECTIONS = {"urn", "sample_size", "reinforcement", "experiment", "test", "power", "diagnose", "output"}
EXPERIMENT_KEYS = {"horizon", "replications", "seed", "theta", "stride", "jobs", "engine"}


def _num(v, what: str) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"{what}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{what}: expected a number or fraction, got {v!r}")


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{what}: expected an integer, got {v!r}")
    return int(v)


def _ints(vs, what: str) -> tuple[int, ...]:
    if not isinstance(vs, (list, tuple)):
        raise ConfigError(f"{what}: expected a list")
    return tuple(_int(v, what) for v in vs)


def _nums(vs, what: str) -> tuple[float, ...]:
    if not isinstance(vs, (list, tuple)):
        raise ConfigError(f"{what}: expected a list")
    return tuple(_num(v, what) for v in vs)


def _section(d: Any, what: str, allowed: set[str]) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{what}: expected a mapping")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{what}: unknown keys {sorted(extra)}")
    return d


def _need(d: dict, key: str, what: str):
    if key not in d:
        raise ConfigError(f"{what}: missing {key!r}")
    return d[key]


def parse_sample_size(d: dict):
    what = "sample_size"
    kind = _need(_section(d, what, {"kind", "kappa", "upper", "values", "probs", "rule", "low", "high",
                                    "threshold", "limit_N", "limit_Q"}), "kind", what)
    if kind == "constant":
        return ConstantSize(_int(_need(d, "kappa", what), "kappa"))
    if kind == "uniform":
        return UniformSize(_int(_need(d, "upper", what), "upper"))
    if kind == "table":
        return TableSize(_ints(_need(d, "values", what), "values"), _nums(_need(d, "probs", what), "probs"))
    if kind == "past":
        lim_n, lim_q = d.get("limit_N"), d.get("limit_Q")
        return PastDependentSize(
            rule=str(_need(d, "rule", what)),
            low=_int(_need(d, "low", what), "low"),
            high=_int(_need(d, "high", what), "high"),
            threshold=_num(d.get("threshold", 0.5), "threshold"),
            limit_N=None if lim_n is None else _num(lim_n, "limit_N"),
            limit_Q=None if lim_q is None else _num(lim_q, "limit_Q"),
        )
    raise ConfigError(f"sample_size: unknown kind {kind!r}")


def parse_reinforcement(d: dict, what: str = "reinforcement"):
    kind = _need(_section(d, what, {"kind", "alpha", "beta", "a", "b", "size", "p_a", "p_b", "pairs", "probs",
                                    "models", "breakpoints", "envelope"}), "kind", what)
    if kind == "constant":
        return ConstantPair(_int(_need(d, "alpha", what), "alpha"), _int(_need(d, "beta", what), "beta"))
    if kind == "shifted_multinomial":
        return ShiftedMultinomial(_int(_need(d, "size", what), "size"),
                                  _num(_need(d, "p_a", what), "p_a"), _num(_need(d, "p_b", what), "p_b"))
    if kind == "independent":
        ma = _section(_need(d, "a", what), f"{what}.a", {"values", "probs"})
        mb = _section(_need(d, "b", what), f"{what}.b", {"values", "probs"})
        return IndependentPair(
            _ints(_need(ma, "values", what), "a.values"), _nums(_need(ma, "probs", what), "a.probs"),
            _ints(_need(mb, "values", what), "b.values"), _nums(_need(mb, "probs", what), "b.probs"),
        )
    if kind == "joint":
        pairs = _need(d, "pairs", what)
        if not isinstance(pairs, list) or any(not isinstance(p, (list, tuple)) or len(p) != 2 for p in pairs):
            raise ConfigError(f"{what}.pairs: expected a list of [A, B] pairs")
        return JointTable(tuple(_ints(p, "pairs") for p in pairs), _nums(_need(d, "probs", what), "probs"))
    if kind == "sequence":
        subs = _need(d, "models", what)
        if not isinstance(subs, list):
            raise ConfigError(f"{what}.models: expected a list")
        env = d.get("envelope")
        if env is not None:
            env = _nums(env, "envelope")
            if len(env) != 2:
                raise ConfigError(f"{what}.envelope: expected [c, eps]")
        return PiecewiseSequence(
            tuple(parse_reinforcement(m, f"{what}.models[{i}]") for i, m in enumerate(subs)),
            _ints(_need(d, "breakpoints", what), "breakpoints"),
            env,
        )
    raise ConfigError(f"{what}: unknown kind {kind!r}")


def parse_delta_grid(v) -> tuple[float, ...]:
    """A list of deltas, ``{start, stop, step}``, or the string ``"start:stop:step"``."""
    if isinstance(v, str):
        if ":" in v:
            parts = v.split(":")
            if len(parts) != 3:
                raise ConfigError(f"delta grid {v!r}: expected start:stop:step")
            v = dict(zip(("start", "stop", "step"), parts))
        else:
            v = [p for p in v.split(",") if p.strip()]
    if isinstance(v, dict):
        _section(v, "power.delta_grid", {"start", "stop", "step"})
        start, stop, st = (_num(_need(v, k, "delta_grid"), k) for k in ("start", "stop", "step"))
        if st <= 0:
            raise ConfigError("delta grid step must be > 0")
        count = int(round((stop - start) / st)) + 1
        return tuple(round(start + i * st, 12) for i in range(count))
    grid = _nums(v, "delta_grid")
    if not grid:
        raise ConfigError("delta grid is empty")
    return grid


def resolve_seed(seed) -> int:
    if seed is None:
        return int(np.random.SeedSequence().entropy)
    return _int(seed, "seed")


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a mapping")
    _section(d, "config", SECTIONS)
    urn = _section(d.get("urn"), "urn", {"a", "b"})
    exp = _section(d.get("experiment"), "experiment", EXPERIMENT_KEYS)
    test = _section(d.get("test"), "test", {f.name for f in fields(TestOptions)})
    power = _section(d.get("power"), "power", {"delta_grid"})
    diag = _section(d.get("diagnose"), "diagnose", {"slope_window", "log_ratio"})
    out = _section(d.get("output"), "output", {"dir"})

    model = ModelSpec(parse_sample_size(_need(d, "sample_size", "config")),
                      parse_reinforcement(_need(d, "reinforcement", "config")))
    opts = {}
    for f in fields(TestOptions):
        if f.name in test and test[f.name] is not None:
            v = test[f.name]
            if f.name in ("min_count",):
                v = _int(v, f.name)
            elif f.name in ("require_mixed", "gamma_hard_error"):
                if not isinstance(v, bool):
                    raise ConfigError(f"test.{f.name}: expected true/false")
            elif f.name in ("gamma_floor", "known_N", "known_Q"):
                v = _num(v, f.name)
            else:
                v = str(v)
            opts[f.name] = v
    kw = dict(
        model=model,
        a=_int(urn.get("a", 5), "urn.a"),
        b=_int(urn.get("b", 5), "urn.b"),
        test=TestOptions(**opts),
        delta_grid=parse_delta_grid(power["delta_grid"]) if "delta_grid" in power else DEFAULT_DELTA_GRID,
        seed=resolve_seed(exp.get("seed")),
    )
    for key in ("horizon", "replications", "stride", "jobs"):
        if key in exp:
            kw[key] = _int(exp[key], f"experiment.{key}")
    if "theta" in exp:
        kw["theta"] = _num(exp["theta"], "experiment.theta")
    if "engine" in exp:
        kw["engine"] = str(exp["engine"])
    for key in ("slope_window", "log_ratio"):
        if key in diag:
            kw[key] = _num(diag[key], f"diagnose.{key}")
    if "dir" in out:
        kw["out_dir"] = str(out["dir"])
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return config_from_dict(data)


def _sample_size_dict(m) -> dict:
    if isinstance(m, ConstantSize):
        return {"kind": "constant", "kappa": m.kappa}
    if isinstance(m, UniformSize):
        return {"kind": "uniform", "upper": m.upper}
    if isinstance(m, TableSize):
        return {"kind": "table", "values": list(m.values), "probs": list(m.probs)}
    d = {"kind": "past", "rule": m.rule, "low": m.low, "high": m.high, "threshold": m.threshold}
    if m.limit_N is not None:
        d.update(limit_N=m.limit_N, limit_Q=m.limit_Q)
    return d


def _reinforcement_dict(m) -> dict:
    if isinstance(m, ConstantPair):
        return {"kind": "constant", "alpha": m.alpha, "beta": m.beta}
    if isinstance(m, ShiftedMultinomial):
        return {"kind": "shifted_multinomial", "size": m.size, "p_a": m.p_a, "p_b": m.p_b}
    if isinstance(m, IndependentPair):
        return {"kind": "independent",
                "a": {"values": list(m.values_a), "probs": list(m.probs_a)},
                "b": {"values": list(m.values_b), "probs": list(m.probs_b)}}
    if isinstance(m, JointTable):
        return {"kind": "joint", "pairs": [list(p) for p in m.pairs], "probs": list(m.probs)}
    d = {"kind": "sequence", "models": [_reinforcement_dict(s) for s in m.models],
         "breakpoints": list(m.breakpoints)}
    if m.envelope is not None:
        d["envelope"] = list(m.envelope)
    return d


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical echo; ``config_from_dict(config_to_dict(c)) == c``."""
    test = {f.name: getattr(cfg.test, f.name) for f in fields(TestOptions)}
    return {
        "urn": {"a": cfg.a, "b": cfg.b},
        "sample_size": _sample_size_dict(cfg.model.sample_size),
        "reinforcement": _reinforcement_dict(cfg.model.reinforcement),
        "experiment": {"horizon": cfg.horizon, "replications": cfg.replications, "seed": cfg.seed,
                       "theta": cfg.theta, "stride": cfg.stride, "jobs": cfg.jobs, "engine": cfg.engine},
        "test": test,
        "power": {"delta_grid": list(cfg.delta_grid)},
        "diagnose": {"slope_window": cfg.slope_window, "log_ratio": cfg.log_ratio},
        "output": {"dir": cfg.out_dir},
    }


def with_overrides(cfg: ExperimentConfig, **overrides: Optional[Any]) -> ExperimentConfig:
    """Apply command-line overrides; ``None`` means "not given"."""
    kw = {k: v for k, v in overrides.items() if v is not None}
    if not kw:
        return cfg
    try:
        return replace(cfg, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
