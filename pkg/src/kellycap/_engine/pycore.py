"""Vectorized numpy implementation of the simulation kernel.

Reference implementation: the compiled core must agree with this one up to
floating-point accumulation order.  Noise is drawn in blocks of
``NOISE_BLOCK`` steps with shape (block, n_factors, width) so that both
engines consume identical random streams.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtri

from .common import (
    ADMIS_TOL,
    H_ABSOLUTE,
    KIND_LEL,
    KIND_TVAR,
    KIND_VAR,
    MARKET_CONSTANT,
    MARKET_LAMBDA_PATH,
    MARKET_OU,
    NOISE_BLOCK,
    STRAT_CURRENT,
    STRAT_FIXED,
    STRAT_LIMIT,
    STRAT_SCHEDULE,
    ChunkResult,
    EngineSpec,
)

IMPLEMENTATION = "numpy"


def _g_of(spec: EngineSpec, lam, beta):
    """Compliance g(beta) = f(beta lam^2, beta lam) for the built-in kinds."""
    zmu = beta * lam * lam
    zsig = beta * lam
    if spec.kind_code == KIND_VAR:
        qt = spec.r + zmu - 0.5 * zsig * zsig
        return -spec.tau * qt - spec.nq * zsig * spec.sqrt_tau
    logn = log_ndtr(spec.nq - zsig * spec.sqrt_tau)
    if spec.kind_code == KIND_TVAR:
        return spec.log_alpha - spec.tau * (spec.r + zmu) - logn
    return spec.log_alpha - spec.r_tau - logn


def _beta_root(spec: EngineSpec, lam, h):
    """min(1, unique positive root of g(beta) = h), elementwise.

    lam and h broadcast; h may contain +inf (-> beta = 1).
    """
    lam = np.asarray(lam, dtype=float)
    h = np.asarray(h, dtype=float)
    lam, h = np.broadcast_arrays(lam, h)
    beta = np.ones(lam.shape)
    active = (lam > 0.0) & np.isfinite(h)
    if not active.any():
        return beta
    la = lam[active]
    ha = h[active]
    if spec.kind_code == KIND_VAR:
        A = 0.5 * spec.tau * la * la
        B = spec.tau * la * la + spec.nq * spec.sqrt_tau * la
        C = spec.r_tau + ha
        s = np.sqrt(B * B + 4.0 * A * C)
        root = np.where(B >= 0.0, (B + s) / (2.0 * A), 2.0 * C / (s - B))
    elif spec.kind_code == KIND_LEL:
        arg = spec.alpha * np.exp(-(spec.r_tau + ha))
        with np.errstate(divide="ignore"):
            root = (spec.nq - ndtri(arg)) / (la * spec.sqrt_tau)
        root = np.where(arg > 0.0, root, np.inf)
    else:
        root = _bisect_tvar(spec, la, ha)
    beta[active] = np.minimum(1.0, root)
    return beta


def _bisect_tvar(spec: EngineSpec, lam, h):
    """Vectorized bisection for the transcendental TVaR compliance root."""
    hi_ok = _g_of(spec, lam, 1.0) <= h
    lo = np.zeros(lam.shape)
    hi = np.ones(lam.shape)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = _g_of(spec, lam, mid) < h
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return np.where(hi_ok, 1.0, out)


def _h_absolute(a: float, y):
    """h(e^y) = -log1p(-a e^{-y}); +inf at or below the threshold."""
    arg = a * np.exp(-np.asarray(y, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.log1p(-arg)
    return np.where(arg >= 1.0, np.inf, h)


def run_chunk(
    spec: EngineSpec,
    n_paths: int,
    noise_width: int,
    rng: np.random.Generator,
) -> ChunkResult:
    S = len(spec.strat_codes)
    P = n_paths
    R = len(spec.rec_idx)
    sqdt = math.sqrt(spec.dt)

    y = np.full((S, P), spec.y0)
    drift_sum = np.zeros((S, P))
    y_rec = np.empty((S, R, P))
    beta_rec = np.empty((S, R, P))
    y_at_stop = np.full((S, P), np.nan)
    stop_step = np.full(P, -1, dtype=np.int64)
    viol_step = np.full(S, -1, dtype=np.int64)
    stopped = np.zeros(P, dtype=bool)
    use_stop = not math.isnan(spec.stop_level_y)

    ou = spec.market_code == MARKET_OU
    if ou:
        v = np.full(P, spec.ou_v0)
        decay = math.exp(-spec.ou_nu * spec.dt)
        vscale = math.sqrt(
            -math.expm1(-2.0 * spec.ou_nu * spec.dt) / (2.0 * spec.ou_nu)
        )
        rho = spec.ou_rho
        rho_c = math.sqrt(1.0 - rho * rho)
    else:
        v = None

    rec_ptr = 0
    rec_set = spec.rec_idx
    z_block = None
    beta = np.ones((S, P))
    # budget of the limiting set: inf_x h(x) = 0 for absolute constraints,
    # the constant budget itself for relative ones
    h_limit = 0.0 if spec.h_mode == H_ABSOLUTE else spec.h_const

    for k in range(spec.n_steps):
        off = k % NOISE_BLOCK
        if off == 0:
            n_blk = min(NOISE_BLOCK, spec.n_steps - k)
            z_block = rng.standard_normal((n_blk, spec.n_factors, noise_width))

        # lam at the step's left endpoint
        if spec.market_code == MARKET_CONSTANT:
            lam = spec.lam_const
        elif spec.market_code == MARKET_LAMBDA_PATH:
            lam = spec.lam_path[k]
        else:
            sig = (
                spec.vol_map(v)
                if spec.vol_map is not None
                else spec.ou_sig_lo
                + (spec.ou_sig_hi - spec.ou_sig_lo) / (1.0 + np.exp(-v))
            )
            lam = spec.ou_mu_abs / sig

        h_cur = None
        for s in range(S):
            code = spec.strat_codes[s]
            if code == STRAT_FIXED:
                beta[s] = spec.strat_frac[s]
            elif code == STRAT_SCHEDULE:
                beta[s] = spec.frac_paths[s, k]
            elif code == STRAT_LIMIT:
                beta[s] = _beta_root(spec, lam, h_limit)
            else:  # STRAT_CURRENT
                if spec.h_mode == H_ABSOLUTE:
                    h_cur = _h_absolute(spec.a_abs, y[s])
                else:
                    h_cur = spec.h_const
                beta[s] = _beta_root(spec, lam, h_cur)
            if spec.check_admissible and viol_step[s] < 0:
                if spec.h_mode == H_ABSOLUTE:
                    h_s = _h_absolute(spec.a_abs, y[s])
                else:
                    h_s = spec.h_const
                bad = _g_of(spec, lam, beta[s]) > h_s + ADMIS_TOL
                if np.any(bad):
                    viol_step[s] = k

        if rec_ptr < R and rec_set[rec_ptr] == k:
            y_rec[:, rec_ptr, :] = y
            beta_rec[:, rec_ptr, :] = beta
            rec_ptr += 1

        lam2 = lam * lam
        q = spec.r + (beta - 0.5 * beta * beta) * lam2
        if ou:
            shock = rho * z_block[off, 0] + rho_c * z_block[off, 1]
        else:
            shock = z_block[off, 0]
        y += q * spec.dt + beta * (lam * sqdt) * shock[:P]
        drift_sum += q * spec.dt
        if ou:
            v = spec.ou_vbar + (v - spec.ou_vbar) * decay + vscale * z_block[
                off, 1, :P
            ]

        if use_stop:
            newly = (~stopped) & (y[spec.stop_strat] >= spec.stop_level_y)
            if np.any(newly):
                y_at_stop[:, newly] = y[:, newly]
                stop_step[newly] = k + 1
                stopped |= newly

    # final record at t = n_steps * dt with the end-state betas
    if rec_ptr < R and rec_set[rec_ptr] == spec.n_steps:
        if spec.market_code == MARKET_CONSTANT:
            lam = spec.lam_const
        elif spec.market_code == MARKET_LAMBDA_PATH:
            lam = spec.lam_path[-1]
        else:
            sig = (
                spec.vol_map(v)
                if spec.vol_map is not None
                else spec.ou_sig_lo
                + (spec.ou_sig_hi - spec.ou_sig_lo) / (1.0 + np.exp(-v))
            )
            lam = spec.ou_mu_abs / sig
        for s in range(S):
            code = spec.strat_codes[s]
            if code == STRAT_FIXED:
                beta[s] = spec.strat_frac[s]
            elif code == STRAT_SCHEDULE:
                beta[s] = spec.frac_paths[s, -1]
            elif code == STRAT_LIMIT:
                beta[s] = _beta_root(spec, lam, h_limit)
            else:
                if spec.h_mode == H_ABSOLUTE:
                    hv = _h_absolute(spec.a_abs, y[s])
                else:
                    hv = spec.h_const
                beta[s] = _beta_root(spec, lam, hv)
        y_rec[:, rec_ptr, :] = y
        beta_rec[:, rec_ptr, :] = beta

    unstopped = ~stopped
    y_at_stop[:, unstopped] = y[:, unstopped]

    if not np.isfinite(y).all():
        raise FloatingPointError(
            "non-finite log-wealth encountered during simulation"
        )

    return ChunkResult(
        y_rec=y_rec,
        beta_rec=beta_rec,
        y_final=y.copy(),
        drift_sum=drift_sum,
        y_at_stop=y_at_stop,
        stop_step=stop_step,
        viol_step=viol_step,
        v_final=v.copy() if ou else None,
    )
