"""Experiment configuration: a TOML file with validated sections.

Sections
--------
``[market]``      type = "constant" | "periodic" | "ou" plus coefficients
``[constraint]``  optional; kind var|tvar|lel, scope absolute|relative,
                  limit, alpha, and tau (years) or tau_days (/252)
``[sim]``         horizon, dt, paths, seed, initial_wealth, record_stride
``strategies``    list of tags: merton, projected_current,
                  projected_limiting, relative_projected, fixed:<c>
``[output]``      format csv|json and destination path
``[checks]``      names of verification suites run by `simulate`
``[risk_grid]`` / ``[delta_grid]`` / ``[project_instances]``
                  inputs for the corresponding subcommands

Every validation failure carries the offending key in the message; the CLI
maps those to exit code 2.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import List, Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from .constraints import ConstraintPair
from .market import ConstantMarket, MarketModel, MarketPoint, OUStochVolMarket, PeriodicMarket
from .risk import RiskKind, RiskParams
from .simulate import (
    FixedFraction,
    MertonUnconstrained,
    ProjectedCurrent,
    ProjectedLimiting,
    RelativeProjected,
    SimConfig,
    StrategyRule,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "KNOWN_CHECKS"]

KNOWN_CHECKS = (
    "growth_vs_target",
    "coalescence",
    "supermartingale",
    "log_dominance",
    "ergodic",
)

TRADING_DAYS = 252.0


class ConfigError(ValueError):
    """Invalid or missing configuration field; message names the key."""


def _need(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"[{section}] is missing required key '{key}'")
    return table[key]


def _number(table: dict, key: str, section: str, lo=None, hi=None, default=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"[{section}] is missing required key '{key}'")
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{section}].{key} must be a number, got {val!r}")
    val = float(val)
    if lo is not None and val < lo:
        raise ConfigError(f"[{section}].{key} must be >= {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"[{section}].{key} must be <= {hi}, got {val}")
    return val


@dataclass
class ExperimentConfig:
    market: MarketModel
    pair: Optional[ConstraintPair]
    strategies: List[StrategyRule]
    sim: SimConfig
    out_format: str
    out_path: Optional[str]
    checks: List[str]
    risk_grid: dict
    delta_grid: dict
    project_instances: dict
    config_hash: str
    raw: dict = field(repr=False, default_factory=dict)


def _parse_market(doc: dict) -> MarketModel:
    table = doc.get("market")
    if not isinstance(table, dict):
        raise ConfigError("missing [market] section")
    mtype = _need(table, "type", "market")
    r = _number(table, "r", "market", lo=1e-12)
    if mtype == "constant":
        mu = _need(table, "mu", "market")
        sigma = _need(table, "sigma", "market")
        try:
            point = MarketPoint(r=r, mu=mu, sigma=sigma)
        except ValueError as exc:
            raise ConfigError(f"[market] invalid coefficients: {exc}")
        return ConstantMarket(point)
    if mtype == "periodic":
        mu = _number(table, "mu", "market")
        sigma0 = _number(table, "sigma", "market", lo=1e-12)
        period = _number(table, "period", "market", lo=1e-12)
        amp = _number(table, "vol_amplitude", "market", lo=0.0, hi=0.99)

        def point_fn(t: float, _r=r, _mu=mu, _s=sigma0, _a=amp, _p=period):
            s = _s * (1.0 + _a * math.sin(2.0 * math.pi * t / _p))
            return MarketPoint(r=_r, mu=[_mu], sigma=[[s]])

        return PeriodicMarket(period=period, point_fn=point_fn)
    if mtype == "ou":
        try:
            return OUStochVolMarket(
                nu=_number(table, "nu", "market", lo=1e-12),
                vbar=_number(table, "vbar", "market"),
                rho=_number(table, "rho", "market", lo=-1.0, hi=1.0),
                mu_scalar=_number(table, "mu", "market"),
                r=r,
                v0=_number(table, "v0", "market", default=_number(table, "vbar", "market")),
                sig_lo=_number(table, "sig_lo", "market", lo=1e-12, default=0.1),
                sig_hi=_number(table, "sig_hi", "market", lo=1e-12, default=0.6),
            )
        except ValueError as exc:
            raise ConfigError(f"[market] invalid OU parameters: {exc}")
    raise ConfigError(
        f"[market].type must be 'constant', 'periodic' or 'ou', got {mtype!r}"
    )


def _market_rate(market: MarketModel) -> float:
    if isinstance(market, ConstantMarket):
        return market.point.r
    if isinstance(market, PeriodicMarket):
        return market.point_fn(0.0).r
    return market.r


def _parse_constraint(doc: dict, market: MarketModel) -> Optional[ConstraintPair]:
    table = doc.get("constraint")
    if table is None:
        return None
    if not isinstance(table, dict):
        raise ConfigError("[constraint] must be a table")
    kind_name = str(_need(table, "kind", "constraint")).lower()
    kinds = {"var": RiskKind.VAR, "tvar": RiskKind.TVAR, "lel": RiskKind.LEL}
    if kind_name not in kinds:
        raise ConfigError(
            f"[constraint].kind must be var|tvar|lel, got {kind_name!r}"
        )
    scope = str(_need(table, "scope", "constraint")).lower()
    alpha = _number(table, "alpha", "constraint", lo=1e-12, hi=0.5 - 1e-12)
    if "tau" in table:
        tau = _number(table, "tau", "constraint", lo=1e-12)
    else:
        tau = _number(table, "tau_days", "constraint", lo=1e-9) / TRADING_DAYS
    params = RiskParams(alpha=alpha, tau=tau, r=_market_rate(market))
    limit = _number(table, "limit", "constraint", lo=1e-300)
    try:
        if scope == "relative":
            return ConstraintPair.relative(kinds[kind_name], limit, params)
        if scope == "absolute":
            return ConstraintPair.absolute(kinds[kind_name], limit, params)
    except ValueError as exc:
        raise ConfigError(f"[constraint].limit invalid: {exc}")
    raise ConfigError(
        f"[constraint].scope must be 'absolute' or 'relative', got {scope!r}"
    )


def _parse_strategies(doc: dict, pair: Optional[ConstraintPair]) -> List[StrategyRule]:
    # accept the list either at top level or inside [sim]
    tags = doc.get("strategies")
    if tags is None and isinstance(doc.get("sim"), dict):
        tags = doc["sim"].get("strategies")
    if tags is None:
        tags = ["merton"]
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise ConfigError("'strategies' must be a list of strings")
    rules: List[StrategyRule] = []
    for tag in tags:
        if tag == "merton":
            rules.append(MertonUnconstrained())
        elif tag == "projected_current":
            rules.append(ProjectedCurrent())
        elif tag == "projected_limiting":
            rules.append(ProjectedLimiting())
        elif tag == "relative_projected":
            rules.append(RelativeProjected())
        elif tag.startswith("fixed:"):
            try:
                c = float(tag.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"strategy tag {tag!r}: fraction is not a number")
            if c < 0.0:
                raise ConfigError(f"strategy tag {tag!r}: fraction must be >= 0")
            rules.append(FixedFraction(c))
        else:
            raise ConfigError(f"unknown strategy tag {tag!r}")
        if tag != "merton" and not tag.startswith("fixed:") and pair is None:
            raise ConfigError(f"strategy {tag!r} requires a [constraint] section")
    return rules


def _parse_sim(doc: dict) -> SimConfig:
    table = doc.get("sim")
    if not isinstance(table, dict):
        raise ConfigError("missing [sim] section")
    seed = table.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"[sim].seed must be a non-negative integer, got {seed!r}")
    try:
        return SimConfig(
            horizon=_number(table, "horizon", "sim", lo=1e-12),
            dt=_number(table, "dt", "sim", lo=1e-12),
            paths=int(_number(table, "paths", "sim", lo=1)),
            seed=seed,
            x0_wealth=_number(table, "initial_wealth", "sim", lo=1e-300, default=1.0),
            record_stride=int(_number(table, "record_stride", "sim", lo=1, default=1)),
        )
    except ValueError as exc:
        raise ConfigError(f"[sim] invalid: {exc}")


def _parse_output(doc: dict) -> tuple:
    table = doc.get("output", {})
    if not isinstance(table, dict):
        raise ConfigError("[output] must be a table")
    fmt = str(table.get("format", "csv")).lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"[output].format must be csv|json, got {fmt!r}")
    path = table.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("[output].path must be a string")
    return fmt, path


def _parse_checks(doc: dict) -> List[str]:
    table = doc.get("checks", {})
    if isinstance(table, dict):
        names = table.get("names", [])
    else:
        names = table
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ConfigError("[checks].names must be a list of strings")
    for name in names:
        if name not in KNOWN_CHECKS:
            raise ConfigError(
                f"unknown check {name!r}; known checks: {', '.join(KNOWN_CHECKS)}"
            )
    return list(names)


def load_config(path: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate an experiment file; ``overrides`` may replace the
    seed and path count (CLI flags)."""
    overrides = overrides or {}
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}")
    try:
        doc = tomllib.loads(raw_bytes.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config file {path!r} is not valid TOML: {exc}")

    market = _parse_market(doc)
    pair = _parse_constraint(doc, market)
    strategies = _parse_strategies(doc, pair)
    sim = _parse_sim(doc)
    if overrides.get("seed") is not None:
        sim = SimConfig(
            horizon=sim.horizon,
            dt=sim.dt,
            paths=sim.paths,
            seed=int(overrides["seed"]),
            x0_wealth=sim.x0_wealth,
            record_stride=sim.record_stride,
        )
    if overrides.get("paths") is not None:
        sim = SimConfig(
            horizon=sim.horizon,
            dt=sim.dt,
            paths=int(overrides["paths"]),
            seed=sim.seed,
            x0_wealth=sim.x0_wealth,
            record_stride=sim.record_stride,
        )
    fmt, out_path = _parse_output(doc)
    if overrides.get("format") is not None:
        fmt = overrides["format"]
    if overrides.get("out") is not None:
        out_path = overrides["out"]
    checks = _parse_checks(doc)

    digest = hashlib.sha256()
    digest.update(raw_bytes)
    # only result-affecting overrides enter the experiment identity
    effective = {k: overrides.get(k) for k in ("seed", "paths")}
    digest.update(repr(sorted(effective.items())).encode())
    return ExperimentConfig(
        market=market,
        pair=pair,
        strategies=strategies,
        sim=sim,
        out_format=fmt,
        out_path=out_path,
        checks=checks,
        risk_grid=doc.get("risk_grid", {}),
        delta_grid=doc.get("delta_grid", {}),
        project_instances=doc.get("project_instances", {}),
        config_hash=digest.hexdigest()[:16],
        raw=doc,
    )
