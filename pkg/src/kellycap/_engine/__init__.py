"""Simulation kernel selection.

The compiled Cython core is used when it imported cleanly and the batch
needs no per-step Python callables; otherwise the vectorized numpy core
runs.  Set ``KELLYCAP_ENGINE=numpy`` (or ``cython``) to force a choice;
forcing ``cython`` raises if the extension is unavailable.
"""

from __future__ import annotations

import importlib
import os

from . import pycore
from .common import (
    H_ABSOLUTE,
    H_CONSTANT,
    KIND_LEL,
    KIND_TVAR,
    KIND_VAR,
    MARKET_CONSTANT,
    MARKET_LAMBDA_PATH,
    MARKET_OU,
    STRAT_CURRENT,
    STRAT_FIXED,
    STRAT_LIMIT,
    STRAT_SCHEDULE,
    ChunkResult,
    EngineSpec,
)

_FORCED = os.environ.get("KELLYCAP_ENGINE", "").strip().lower()
if _FORCED not in ("", "auto", "numpy", "cython"):
    raise RuntimeError(
        f"KELLYCAP_ENGINE must be 'numpy' or 'cython', got {_FORCED!r}"
    )

_compiled = None
if _FORCED != "numpy":
    try:
        _compiled = importlib.import_module("._ckernels", __name__)
    except ImportError:
        if _FORCED == "cython":
            raise RuntimeError(
                "KELLYCAP_ENGINE=cython but the compiled kernel is not built; "
                "run `pip install -e .` or `python setup.py build_ext --inplace`"
            )

IMPLEMENTATION = "cython" if _compiled is not None else "numpy"


def run_chunk(spec: EngineSpec, n_paths: int, noise_width: int, rng) -> ChunkResult:
    """Dispatch one chunk to the selected kernel.  Batches that need Python
    callables (custom volatility maps) always run on the numpy core."""
    if _compiled is not None and spec.compiled_ok:
        return _compiled.run_chunk(spec, n_paths, noise_width, rng)
    return pycore.run_chunk(spec, n_paths, noise_width, rng)
