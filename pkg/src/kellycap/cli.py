"""Configuration-driven experiment runner.

Subcommands
-----------
risk      closed-form VaR/TVaR/LEL on a grid, with Monte Carlo oracles
delta     tabulate the limiting and current scaling factors delta, delta*
project   projection vs generic-optimizer oracle on random instances
simulate  run strategies under common noise, report growth and checks
verify    run the full acceptance suite

Exit codes: 0 all requested checks pass, 1 a check failed (report still
written), 2 configuration error.  Numeric CSV fields are printed with 17
significant digits; repeated runs with the same config and seed produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Dict, List, Optional

import numpy as np

from . import __version__, _engine
from .acceptance import _mc_tail_oracle, _mc_var_oracle, run_all
from .config import ConfigError, ExperimentConfig, load_config
from .constraints import ConstraintPair, ConstraintSetQuery
from .market import ConstantMarket, OUStochVolMarket, PeriodicMarket, z_quadrature, z_time_average
from .projection import (
    beta_of,
    d_sigma,
    delta,
    delta_star,
    merton_proportion,
    oracle_project,
    project_merton,
)
from .risk import (
    PortfolioStats,
    RiskKind,
    limited_expected_loss,
    sample_projected_loss,
    tail_value_at_risk,
    value_at_risk,
)
from .simulate import (
    FixedFraction,
    ProjectedCurrent,
    ProjectedLimiting,
    RelativeProjected,
    SimConfig,
    StoppingSpec,
    batch_growth,
    beta_coalescence_report,
    beta_rel,
    finite_horizon_log_check,
    growth_targets,
    simulate_batch,
    supermartingale_check,
)

SCHEMA_VERSION = 1

SCHEMAS: Dict[str, List[str]] = {
    "risk": [
        "measure", "x", "zeta_mu", "zeta_sigma",
        "closed_form", "mc_oracle", "mc_se", "relative",
    ],
    "delta": ["lam", "delta", "wealth", "delta_star", "monotone_flag"],
    "project": [
        "instance", "n", "m", "kind", "scope", "beta",
        "d_projection", "d_oracle", "excess", "sin_angle",
    ],
    "simulate": [
        "row_type", "name", "value", "se", "target", "target_printed",
        "passed", "statistic", "threshold",
    ],
}

_PROVENANCE_COLS = ["units", "seed", "config_hash", "version", "engine"]


def _coerce(value):
    """Bring numpy scalars down to plain Python types for stable output."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_report(
    command: str,
    rows: List[dict],
    config: ExperimentConfig,
    quiet: bool,
) -> None:
    columns = SCHEMAS[command] + _PROVENANCE_COLS
    provenance = {
        "seed": config.sim.seed,
        "config_hash": config.config_hash,
        "version": __version__,
        "engine": _engine.IMPLEMENTATION,
    }
    for row in rows:
        row.setdefault("units", "")
        row.update(provenance)
        for key, value in row.items():
            row[key] = _coerce(value)

    if config.out_format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])
        payload = buf.getvalue()
    else:
        doc = {
            "command": command,
            "schema_version": SCHEMA_VERSION,
            "provenance": provenance,
            "columns": columns,
            "rows": [{col: row.get(col) for col in columns} for row in rows],
        }
        payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"

    if config.out_path:
        with open(config.out_path, "w", newline="") as fh:
            fh.write(payload)
        if not quiet:
            print(f"wrote {len(rows)} rows to {config.out_path}")
    else:
        sys.stdout.write(payload)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_risk(config: ExperimentConfig, quiet: bool) -> int:
    if config.pair is None:
        raise ConfigError("risk command requires a [constraint] section")
    params = config.pair.params
    grid = config.risk_grid
    xs = grid.get("x", [100.0])
    zmus = grid.get("zeta_mu", [0.0, 0.05])
    zsigs = grid.get("zeta_sigma", [0.1, 0.2, 0.4])
    n_mc = int(grid.get("mc_samples", 200_000))
    rows = []
    ok = True
    for x in xs:
        for zmu in zmus:
            for zsig in zsigs:
                stats = PortfolioStats(zeta_mu=float(zmu), zeta_sigma=float(zsig))
                losses = sample_projected_loss(x, stats, params, config.sim.seed, n_mc)
                losses0 = sample_projected_loss(
                    x, PortfolioStats(0.0, stats.zeta_sigma), params,
                    config.sim.seed + 1, n_mc,
                )
                var_mc, var_se = _mc_var_oracle(x, stats, params, losses)
                tv_mc, tv_se = _mc_tail_oracle(params, losses)
                lel_mc, lel_se = _mc_tail_oracle(params, losses0)
                triples = [
                    ("var", value_at_risk(x, stats, params), var_mc, var_se),
                    ("tvar", tail_value_at_risk(x, stats, params), tv_mc, tv_se),
                    ("lel", limited_expected_loss(x, zsig, params), lel_mc, lel_se),
                ]
                for name, closed, mc, se in triples:
                    ok &= abs(closed - mc) <= 4.0 * se if se > 0 else closed == mc
                    rows.append(
                        dict(
                            measure=name, x=float(x), zeta_mu=float(zmu),
                            zeta_sigma=float(zsig), closed_form=closed,
                            mc_oracle=mc, mc_se=se, relative=closed / x,
                            units="currency",
                        )
                    )
    write_report("risk", rows, config, quiet)
    return 0 if ok else 1


def cmd_delta(config: ExperimentConfig, quiet: bool) -> int:
    if config.pair is None:
        raise ConfigError("delta command requires a [constraint] section")
    grid = config.delta_grid
    lams = [float(v) for v in grid.get("lam", list(np.linspace(0.05, 3.0, 30)))]
    wealths = [float(v) for v in grid.get("wealths", [])]
    if config.pair.scope == "absolute" and not wealths:
        wealths = [2.0 * config.pair.limit, 10.0 * config.pair.limit, 1e6 * config.pair.limit]
    rows = []
    deltas = [delta(config.pair, lam) for lam in lams]
    # delta should be nonincreasing in lam once the constraint binds
    monotone_ok = True
    prev = None
    for d in deltas:
        if d < 1.0:
            if prev is not None and d > prev + 1e-12:
                monotone_ok = False
            prev = d
    for lam, d in zip(lams, deltas):
        if wealths:
            for x in wealths:
                rows.append(
                    dict(
                        lam=lam, delta=d, wealth=x,
                        delta_star=delta_star(config.pair, lam, x),
                        monotone_flag=not monotone_ok, units="dimensionless",
                    )
                )
        else:
            rows.append(
                dict(
                    lam=lam, delta=d, wealth=None, delta_star=None,
                    monotone_flag=not monotone_ok, units="dimensionless",
                )
            )
    write_report("delta", rows, config, quiet)
    return 0 if monotone_ok else 1


def cmd_project(config: ExperimentConfig, quiet: bool) -> int:
    from .acceptance import _random_binding_instance, _sin_angle

    inst = config.project_instances
    count = int(inst.get("count", 12))
    seed = int(inst.get("seed", config.sim.seed))
    rng = np.random.default_rng(seed)
    rows = []
    ok = True
    for i in range(count):
        pair, query = _random_binding_instance(rng)
        md = merton_proportion(query.mu, query.sigma)
        proj = project_merton(pair, query)
        oz = oracle_project(pair, query, n_starts=6, seed=seed + i)
        d_p = d_sigma(proj.zeta_proj, md.zeta_m, query.sigma)
        d_o = d_sigma(oz, md.zeta_m, query.sigma)
        angle = _sin_angle(oz, md.zeta_m)
        excess = d_o - d_p
        ok &= angle <= 1e-5 and -1e-9 <= excess <= 1e-6
        rows.append(
            dict(
                instance=i, n=query.sigma.shape[0], m=query.sigma.shape[1],
                kind=pair.kind.value, scope=pair.scope, beta=proj.beta,
                d_projection=d_p, d_oracle=d_o, excess=excess,
                sin_angle=angle, units="sigma_metric",
            )
        )
    write_report("project", rows, config, quiet)
    return 0 if ok else 1


def _strategy_target(config: ExperimentConfig, rule) -> tuple:
    """(corrected, printed) analytic growth targets for one strategy."""
    model, pair = config.market, config.pair
    if isinstance(rule, (ProjectedCurrent, ProjectedLimiting, RelativeProjected)):
        return growth_targets(model, pair)
    if isinstance(rule, FixedFraction):
        c = rule.c
        corrected = growth_targets_fixed(model, c)
        return corrected, corrected
    # Merton unconstrained
    corrected, printed = growth_targets(model, None)
    return corrected, printed


def growth_targets_fixed(model, c: float) -> float:
    r_phi = z_quadrature(model, lambda x: (c - 0.5 * c * c) * x * x, 64)
    if isinstance(model, ConstantMarket):
        r = model.point.r
    elif isinstance(model, PeriodicMarket):
        r = model.point_fn(0.0).r
    else:
        r = model.r
    return r + r_phi.value


def cmd_simulate(config: ExperimentConfig, quiet: bool) -> int:
    batch = simulate_batch(
        config.market, config.pair, config.strategies, config.sim
    )
    est, se = batch_growth(batch)
    rows = []
    for i, rule in enumerate(config.strategies):
        corrected, printed = _strategy_target(config, rule)
        rows.append(
            dict(
                row_type="growth", name=batch.tags[i], value=float(est[i]),
                se=float(se[i]), target=corrected, target_printed=printed,
                units="per_year",
            )
        )

    all_ok = True
    for check in config.checks:
        passed, statistic, threshold = _run_check(check, config, batch, est, se)
        all_ok &= passed
        rows.append(
            dict(
                row_type="check", name=check, passed=passed,
                statistic=statistic, threshold=threshold, units="",
            )
        )

    write_report("simulate", rows, config, quiet)
    if not quiet and config.out_path:
        for row in rows:
            if row["row_type"] == "growth":
                print(
                    f"{row['name']:>22}: growth {row['value']:+.6f} +- {row['se']:.6f}"
                    f"  target {row['target']:+.6f}"
                )
            else:
                print(f"{row['name']:>22}: {'PASS' if row['passed'] else 'FAIL'} ({row['statistic']})")
    return 0 if all_ok else 1


def _run_check(check: str, config: ExperimentConfig, batch, est, se) -> tuple:
    model, pair, cfg = config.market, config.pair, config.sim
    if check == "growth_vs_target":
        worst = 0.0
        g_half, se_half = batch_growth(batch, burn_in_fraction=0.5)
        for i, rule in enumerate(config.strategies):
            corrected, _ = _strategy_target(config, rule)
            sd = max(se_half[i], 1e-15)
            worst = max(worst, abs(g_half[i] - corrected) / sd)
        return worst <= 4.0, f"worst deviation {worst:.2f} SE", "4 SE"
    if check == "coalescence":
        if pair is None:
            raise ConfigError("coalescence check requires a [constraint] section")
        rep = beta_coalescence_report(model, pair, cfg)
        frac = rep.fraction_below_001
        return frac >= 0.99, f"sup<0.01 on {frac*100:.1f}% of paths", ">= 99%"
    if check == "supermartingale":
        if pair is None or pair.scope != "relative":
            raise ConfigError("supermartingale check requires a relative constraint")
        lam = _reference_lambda(model)
        rep = supermartingale_check(
            model, pair, FixedFraction(0.5 * beta_rel(pair, lam)), cfg
        )
        return rep.passed, f"E[ratio] = {rep.ratio_mean:.6f} +- {rep.se:.2e}", "<= 1 + 3 SE"
    if check == "log_dominance":
        if pair is None or pair.scope != "relative":
            raise ConfigError("log_dominance check requires a relative constraint")
        lam = _reference_lambda(model)
        rule = FixedFraction(0.3 * beta_rel(pair, lam))
        reps = [
            finite_horizon_log_check(model, pair, rule, StoppingSpec("fixed"), cfg),
            finite_horizon_log_check(model, pair, rule, StoppingSpec("hitting", 1.5), cfg),
        ]
        ok = all(r.passed for r in reps)
        stat = "; ".join(f"{r.stop_desc}: {r.diff_mean:.2e}" for r in reps)
        return ok, stat, ">= -3 SE"
    if check == "ergodic":
        if not isinstance(model, (OUStochVolMarket, PeriodicMarket)):
            raise ConfigError("ergodic check requires an ou or periodic market")
        if pair is not None:
            phi = lambda x: (delta(pair, x)) * x * x
            phi_avg = _tabulated_phi(model, pair)
        else:
            phi = lambda x: x * x
            phi_avg = phi
        zq = z_quadrature(model, phi, nodes=50)
        zt = z_time_average(model, phi_avg, horizon=cfg.horizon, dt=cfg.dt, seed=cfg.seed)
        rel = abs(zt.value - zq.value) / max(abs(zq.value), 1e-300)
        return rel <= 0.02, f"quadrature {zq.value:.6g} vs time-average {zt.value:.6g}, rel err {rel*100:.2f}%", "<= 2%"
    raise ConfigError(f"unknown check {check!r}")


def _tabulated_phi(model, pair):
    """Vectorized x^2 * delta(x) from a dense tabulation over the model's
    lambda range (long time averages touch millions of lambda values; the
    interpolation error is orders of magnitude below the check tolerance)."""
    import numpy as _np

    if isinstance(model, OUStochVolMarket):
        lo = abs(model.mu_scalar) / model.sig_hi
        hi = abs(model.mu_scalar) / model.sig_lo
    else:
        probes = [
            _reference_lambda_at(model, t)
            for t in _np.linspace(0.0, model.period, 257)
        ]
        lo, hi = min(probes), max(probes)
    lam_grid = _np.linspace(lo * 0.999, hi * 1.001, 2001)
    delta_grid = _np.array([delta(pair, float(l)) for l in lam_grid])

    def phi(x):
        return x * x * _np.interp(x, lam_grid, delta_grid)

    return phi


def _reference_lambda_at(model, t: float) -> float:
    point = model.point_fn(t)
    return merton_proportion(point.mu, point.sigma).lam


def _reference_lambda(model) -> float:
    if isinstance(model, ConstantMarket):
        return merton_proportion(model.point.mu, model.point.sigma).lam
    if isinstance(model, PeriodicMarket):
        return merton_proportion(model.point_fn(0.0).mu, model.point_fn(0.0).sigma).lam
    return float(model.lam_of(model.vbar))


def cmd_verify(quiet: bool) -> int:
    results = run_all(printer=None if quiet else print)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kellycap",
        description="Growth-optimal portfolio selection under dynamic risk caps",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("risk", "closed-form risk measures with Monte Carlo oracles"),
        ("delta", "tabulate the scaling functions delta and delta*"),
        ("project", "projection vs generic-optimizer oracle"),
        ("simulate", "simulate strategies and run checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--seed", type=int, default=None, help="override [sim].seed")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--paths", type=int, default=None, help="override [sim].paths")
        p.add_argument("--quiet", action="store_true")
    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args.quiet)
    try:
        config = load_config(
            args.config,
            overrides={
                "seed": args.seed,
                "paths": args.paths,
                "out": args.out,
                "format": args.format,
            },
        )
        handler = {
            "risk": cmd_risk,
            "delta": cmd_delta,
            "project": cmd_project,
            "simulate": cmd_simulate,
        }[args.command]
        return handler(config, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
