# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the numpy simulation kernel.

Consumes the same random stream (identical ``standard_normal`` call shapes
in identical order) and mirrors the step semantics of ``pycore.run_chunk``;
results agree up to floating-point accumulation order.
"""

import math

import numpy as np

cimport cython
from libc.math cimport erfc, exp, expm1, fabs, isfinite, log, log1p, sqrt

from .common import (
    H_ABSOLUTE,
    KIND_LEL,
    KIND_TVAR,
    KIND_VAR,
    MARKET_CONSTANT,
    MARKET_LAMBDA_PATH,
    MARKET_OU,
    NOISE_BLOCK,
    ChunkResult,
)

IMPLEMENTATION = "cython"

DEF SQRT2 = 1.4142135623730951
DEF LOG_SQRT_2PI = 0.9189385332046727  # log(sqrt(2*pi))
DEF ADMIS_TOL_C = 1e-9

cdef double INF = float("inf")
cdef double NAN = float("nan")


cdef inline double _log_norm_cdf(double z) nogil:
    cdef double zi2
    if z > -37.0:
        return log(0.5 * erfc(-z / SQRT2))
    zi2 = 1.0 / (z * z)
    return -0.5 * z * z - log(-z) - LOG_SQRT_2PI + log1p(-zi2 * (1.0 - 3.0 * zi2))


cdef inline double _norm_ppf(double p) nogil:
    """Inverse normal CDF for p in (0,1); A&S 26.2.22 start polished by
    Newton on log N (same scheme as kellycap.numerics.norm_quantile)."""
    cdef double q, t, x, log_q, log_cdf, step
    cdef int i
    if p == 0.5:
        return 0.0
    q = p if p < 0.5 else 1.0 - p
    t = sqrt(-2.0 * log(q))
    x = -(t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t)))
    log_q = log(q)
    for i in range(9):
        log_cdf = _log_norm_cdf(x)
        step = (log_cdf - log_q) * exp(log_cdf + 0.5 * x * x + LOG_SQRT_2PI)
        x -= step
        if fabs(step) < 1e-16 * (1.0 if fabs(x) < 1.0 else fabs(x)):
            break
    return x if p < 0.5 else -x


cdef inline double _g_of(
    int kind, double lam, double beta,
    double r, double tau, double sqrt_tau, double nq,
    double r_tau, double log_alpha,
) nogil:
    cdef double zmu = beta * lam * lam
    cdef double zsig = beta * lam
    cdef double logn
    if kind == 0:  # VaR
        return -tau * (r + zmu - 0.5 * zsig * zsig) - nq * zsig * sqrt_tau
    logn = _log_norm_cdf(nq - zsig * sqrt_tau)
    if kind == 1:  # TVaR
        return log_alpha - tau * (r + zmu) - logn
    return log_alpha - r_tau - logn  # LEL


cdef inline double _beta_root(
    int kind, double lam, double h,
    double r, double tau, double sqrt_tau, double nq,
    double r_tau, double log_alpha, double alpha,
) nogil:
    """min(1, positive root of g(beta) = h)."""
    cdef double A, B, C, s, root, arg, lo, hi, mid
    cdef int i
    if lam <= 0.0 or h == INF:
        return 1.0
    if kind == 0:
        A = 0.5 * tau * lam * lam
        B = tau * lam * lam + nq * sqrt_tau * lam
        C = r_tau + h
        s = sqrt(B * B + 4.0 * A * C)
        root = (B + s) / (2.0 * A) if B >= 0.0 else 2.0 * C / (s - B)
        return root if root < 1.0 else 1.0
    if kind == 2:
        arg = alpha * exp(-(r_tau + h))
        if arg <= 0.0:
            return 1.0
        root = (nq - _norm_ppf(arg)) / (lam * sqrt_tau)
        return root if root < 1.0 else 1.0
    # TVaR: bisection, fixed iteration count
    if _g_of(kind, lam, 1.0, r, tau, sqrt_tau, nq, r_tau, log_alpha) <= h:
        return 1.0
    lo = 0.0
    hi = 1.0
    for i in range(64):
        mid = 0.5 * (lo + hi)
        if _g_of(kind, lam, mid, r, tau, sqrt_tau, nq, r_tau, log_alpha) < h:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef inline double _h_abs_of_y(double a, double y) nogil:
    cdef double arg = a * exp(-y)
    if arg >= 1.0:
        return INF
    return -log1p(-arg)


def run_chunk(spec, int n_paths, int noise_width, rng):
    cdef int S = len(spec.strat_codes)
    cdef int P = n_paths
    cdef int R = len(spec.rec_idx)
    cdef int n_steps = spec.n_steps
    cdef int market = spec.market_code
    cdef int kind = spec.kind_code
    cdef int h_mode = spec.h_mode
    cdef int stop_strat = spec.stop_strat
    cdef int MKT_OU = MARKET_OU
    cdef int MKT_PATH = MARKET_LAMBDA_PATH
    cdef int H_ABS = H_ABSOLUTE
    cdef int n_factors = 2 if market == MKT_OU else 1
    cdef bint use_stop = not math.isnan(spec.stop_level_y)
    cdef bint check_admis = spec.check_admissible
    cdef bint has_custom_vol = spec.vol_map is not None

    if has_custom_vol:
        raise ValueError("compiled kernel requires the built-in vol map")

    cdef double dt = spec.dt
    cdef double sqdt = sqrt(dt)
    cdef double r = spec.r
    cdef double tau = spec.tau
    cdef double sqrt_tau = spec.sqrt_tau
    cdef double nq = spec.nq
    cdef double r_tau = spec.r_tau
    cdef double log_alpha = spec.log_alpha
    cdef double alpha = spec.alpha
    cdef double h_const = spec.h_const
    cdef double a_abs = spec.a_abs
    cdef double h_limit = 0.0 if h_mode == H_ABS else h_const
    cdef double lam_const = spec.lam_const
    cdef double stop_level = spec.stop_level_y
    cdef double ou_nu = spec.ou_nu
    cdef double ou_vbar = spec.ou_vbar
    cdef double ou_rho = spec.ou_rho
    cdef double ou_rho_c = sqrt(1.0 - ou_rho * ou_rho)
    cdef double ou_mu_abs = spec.ou_mu_abs
    cdef double ou_sig_lo = spec.ou_sig_lo
    cdef double ou_sig_hi = spec.ou_sig_hi
    cdef double ou_decay = exp(-ou_nu * dt) if market == MKT_OU else 0.0
    cdef double ou_vscale = (
        sqrt(-expm1(-2.0 * ou_nu * dt) / (2.0 * ou_nu))
        if market == MKT_OU
        else 0.0
    )

    cdef long[::1] strat_codes = np.ascontiguousarray(
        spec.strat_codes, dtype=np.int64
    )
    cdef double[::1] strat_frac = np.ascontiguousarray(
        spec.strat_frac, dtype=np.float64
    )
    frac_arr = (
        spec.frac_paths
        if spec.frac_paths is not None
        else np.zeros((S, 1), dtype=np.float64)
    )
    cdef double[:, ::1] frac_paths = np.ascontiguousarray(
        frac_arr, dtype=np.float64
    )
    cdef long[::1] rec_idx = np.ascontiguousarray(spec.rec_idx, dtype=np.int64)
    cdef double[::1] lam_path
    if market == MKT_PATH:
        lam_path = np.ascontiguousarray(spec.lam_path, dtype=np.float64)
    else:
        lam_path = np.zeros(1)

    y_np = np.full((S, P), float(spec.y0))
    drift_np = np.zeros((S, P))
    y_rec_np = np.empty((S, R, P))
    beta_rec_np = np.empty((S, R, P))
    y_stop_np = np.full((S, P), NAN)
    stop_step_np = np.full(P, -1, dtype=np.int64)
    viol_np = np.full(S, -1, dtype=np.int64)
    v_np = np.full(P, float(spec.ou_v0)) if market == MKT_OU else None

    cdef double[:, ::1] y = y_np
    cdef double[:, ::1] drift_sum = drift_np
    cdef double[:, :, ::1] y_rec = y_rec_np
    cdef double[:, :, ::1] beta_rec = beta_rec_np
    cdef double[:, ::1] y_at_stop = y_stop_np
    cdef long[::1] stop_step = stop_step_np
    cdef long[::1] viol_step = viol_np
    cdef double[::1] v = v_np if market == MKT_OU else np.zeros(1)

    cdef double[:, :, ::1] z_block
    cdef int rec_ptr = 0
    cdef int k, s, p, off, blk_len, code
    cdef double lam, lam_p, beta, hval, q, shock, bfix, yv, sig
    cdef bint all_finite = True

    k = 0
    while k < n_steps:
        blk_len = NOISE_BLOCK if n_steps - k >= NOISE_BLOCK else n_steps - k
        z_np = rng.standard_normal((blk_len, n_factors, noise_width))
        z_block = z_np
        with nogil:
            for off in range(blk_len):
                if market == MKT_PATH:
                    lam = lam_path[k + off]
                else:
                    lam = lam_const

                for s in range(S):
                    code = strat_codes[s]
                    bfix = strat_frac[s]
                    if code == 3:
                        bfix = frac_paths[s, k + off]
                    for p in range(P):
                        if market == MKT_OU:
                            sig = ou_sig_lo + (ou_sig_hi - ou_sig_lo) / (
                                1.0 + exp(-v[p])
                            )
                            lam_p = ou_mu_abs / sig
                        else:
                            lam_p = lam
                        if code == 0 or code == 3:
                            beta = bfix
                        elif code == 2:
                            beta = _beta_root(
                                kind, lam_p, h_limit, r, tau, sqrt_tau, nq,
                                r_tau, log_alpha, alpha,
                            )
                        else:
                            if h_mode == H_ABS:
                                hval = _h_abs_of_y(a_abs, y[s, p])
                            else:
                                hval = h_const
                            beta = _beta_root(
                                kind, lam_p, hval, r, tau, sqrt_tau, nq,
                                r_tau, log_alpha, alpha,
                            )
                        if check_admis and viol_step[s] < 0:
                            if h_mode == H_ABS:
                                hval = _h_abs_of_y(a_abs, y[s, p])
                            else:
                                hval = h_const
                            if hval != INF and _g_of(
                                kind, lam_p, beta, r, tau, sqrt_tau, nq,
                                r_tau, log_alpha,
                            ) > hval + ADMIS_TOL_C:
                                viol_step[s] = k + off

                        if rec_ptr < R and rec_idx[rec_ptr] == k + off:
                            y_rec[s, rec_ptr, p] = y[s, p]
                            beta_rec[s, rec_ptr, p] = beta

                        q = r + (beta - 0.5 * beta * beta) * lam_p * lam_p
                        if market == MKT_OU:
                            shock = (
                                ou_rho * z_block[off, 0, p]
                                + ou_rho_c * z_block[off, 1, p]
                            )
                        else:
                            shock = z_block[off, 0, p]
                        y[s, p] += q * dt + beta * lam_p * sqdt * shock
                        drift_sum[s, p] += q * dt

                if rec_ptr < R and rec_idx[rec_ptr] == k + off:
                    rec_ptr += 1

                if market == MKT_OU:
                    for p in range(P):
                        v[p] = (
                            ou_vbar
                            + (v[p] - ou_vbar) * ou_decay
                            + ou_vscale * z_block[off, 1, p]
                        )

                if use_stop:
                    for p in range(P):
                        if stop_step[p] < 0 and y[stop_strat, p] >= stop_level:
                            stop_step[p] = k + off + 1
                            for s in range(S):
                                y_at_stop[s, p] = y[s, p]
        k += blk_len

    # final record at t = horizon with end-state betas
    if rec_ptr < R and rec_idx[rec_ptr] == n_steps:
        if market == MKT_PATH:
            lam = lam_path[n_steps - 1]
        else:
            lam = lam_const
        for s in range(S):
            code = strat_codes[s]
            bfix = strat_frac[s]
            if code == 3:
                bfix = frac_paths[s, frac_paths.shape[1] - 1]
            for p in range(P):
                if market == MKT_OU:
                    sig = ou_sig_lo + (ou_sig_hi - ou_sig_lo) / (
                        1.0 + exp(-v[p])
                    )
                    lam_p = ou_mu_abs / sig
                else:
                    lam_p = lam
                if code == 0 or code == 3:
                    beta = bfix
                elif code == 2:
                    beta = _beta_root(
                        kind, lam_p, h_limit, r, tau, sqrt_tau, nq,
                        r_tau, log_alpha, alpha,
                    )
                else:
                    if h_mode == H_ABS:
                        hval = _h_abs_of_y(a_abs, y[s, p])
                    else:
                        hval = h_const
                    beta = _beta_root(
                        kind, lam_p, hval, r, tau, sqrt_tau, nq,
                        r_tau, log_alpha, alpha,
                    )
                y_rec[s, rec_ptr, p] = y[s, p]
                beta_rec[s, rec_ptr, p] = beta

    for s in range(S):
        for p in range(P):
            if stop_step[p] < 0:
                y_at_stop[s, p] = y[s, p]
            if not isfinite(y[s, p]):
                all_finite = False
    if not all_finite:
        raise FloatingPointError(
            "non-finite log-wealth encountered during simulation"
        )

    return ChunkResult(
        y_rec=y_rec_np,
        beta_rec=beta_rec_np,
        y_final=y_np.copy(),
        drift_sum=drift_np,
        y_at_stop=y_stop_np,
        stop_step=stop_step_np,
        viol_step=viol_np,
        v_final=v_np.copy() if market == MKT_OU else None,
    )
