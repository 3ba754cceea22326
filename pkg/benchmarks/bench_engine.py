#!/usr/bin/env python3
"""Benchmark: compiled kernel vs numpy fallback on the hot simulation loop.

Usage: python benchmarks/bench_engine.py [--steps N] [--paths P]
"""

import argparse
import math
import time

import numpy as np

from kellycap._engine import common as C
from kellycap._engine import pycore

try:
    from kellycap._engine import _ckernels
except ImportError:
    _ckernels = None


def make_spec(n_steps: int, market: int) -> C.EngineSpec:
    return C.EngineSpec(
        market_code=market,
        lam_const=0.25,
        lam_path=None,
        ou_nu=2.0,
        ou_vbar=0.0,
        ou_v0=0.0,
        ou_rho=-0.5,
        ou_mu_abs=0.05,
        ou_sig_lo=0.1,
        ou_sig_hi=0.6,
        vol_map=None,
        r=0.03,
        kind_code=C.KIND_VAR,
        h_mode=C.H_ABSOLUTE,
        h_const=math.inf,
        a_abs=1.0,
        alpha=0.05,
        tau=10.0 / 252.0,
        strat_codes=np.array([C.STRAT_CURRENT, C.STRAT_LIMIT], dtype=np.int64),
        strat_frac=np.zeros(2),
        frac_paths=None,
        n_steps=n_steps,
        dt=0.01,
        y0=math.log(20.0),
        rec_idx=np.array([0, n_steps], dtype=np.int64),
        stop_level_y=math.nan,
        stop_strat=0,
        check_admissible=False,
    )


def run(engine, spec, paths: int) -> float:
    rng = np.random.default_rng(12345)
    t0 = time.perf_counter()
    engine.run_chunk(spec, paths, paths, rng)
    return time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--paths", type=int, default=256)
    args = ap.parse_args()

    for market, label in ((C.MARKET_CONSTANT, "constant"), (C.MARKET_OU, "ou-stochvol")):
        spec = make_spec(args.steps, market)
        work = args.steps * args.paths * 2  # strategies
        t_py = run(pycore, spec, args.paths)
        line = (
            f"{label:>12}: numpy  {t_py:8.3f}s  "
            f"({work / t_py / 1e6:7.1f} M path-steps/s)"
        )
        print(line)
        if _ckernels is not None:
            t_cy = run(_ckernels, spec, args.paths)
            print(
                f"{label:>12}: cython {t_cy:8.3f}s  "
                f"({work / t_cy / 1e6:7.1f} M path-steps/s)  "
                f"speedup x{t_py / t_cy:.1f}"
            )
        else:
            print(f"{label:>12}: cython not built")


if __name__ == "__main__":
    main()
