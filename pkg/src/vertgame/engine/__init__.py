"""Simulation kernels: compiled extension with a pure-Python fallback.

The stepping loop dominates the runtime of every Monte Carlo estimate, so
it is implemented twice with identical semantics: a Cython extension
(``_kernels``) and a readable scalar reference (``pykernels``).  The
compiled module is preferred at import; ``VERTGAME_ENGINE=python`` forces
the fallback.  Both consume the same pre-generated normal buffers, so the
results are bit-identical between engines.

Parameter vector layout shared by all kernels (see ``make_spec``):

====  ===========================  ====  ===========================
 0    mu_plus                       13   kappa0
 1    mu_minus                      14   kappa1
 2    sigma                         15   h_plus
 3    lo_plus                       16   h_minus
 4    lo_tgt_plus                   17   producer g0
 5    hi_plus                       18   producer g1
 6    hi_tgt_plus                   19   producer g2
 7    lo_minus                      20   consumer g0
 8    lo_tgt_minus                  21   consumer g1
 9    hi_minus                      22   consumer g2
10    hi_tgt_minus                  23   beta
11    y_low                         24   dt
12    y_high
====  ===========================  ====  ===========================

Regimes are coded 0 (expansion) / 1 (contraction).  Absent thresholds are
-inf (lower side, y_low) or +inf (upper side, y_high); targets of absent
thresholds are never read.  Event codes: 1 impulse up, 2 impulse down,
3 switch to expansion, 4 switch to contraction.
"""
from __future__ import annotations

import math
import os

import numpy as np

from ..model import ModelParams, build_profits
from ..values import StrategyPair

SPEC_LEN = 25
EV_IMPULSE_UP = 1
EV_IMPULSE_DOWN = 2
EV_SWITCH_TO_PLUS = 3
EV_SWITCH_TO_MINUS = 4

EVENT_NAMES = {
    EV_IMPULSE_UP: "impulse_up",
    EV_IMPULSE_DOWN: "impulse_down",
    EV_SWITCH_TO_PLUS: "switch_to_plus",
    EV_SWITCH_TO_MINUS: "switch_to_minus",
}

# stats accumulator layout
ACC_TIME = 0
ACC_X = 1
ACC_X2 = 2
ACC_X3 = 3
ACC_X4 = 4
ACC_TIME_PLUS = 5
ACC_N_SPLUS = 6
ACC_N_SMINUS = 7
ACC_N_ILO_PLUS = 8
ACC_N_IHI_PLUS = 9
ACC_N_ILO_MINUS = 10
ACC_N_IHI_MINUS = 11
ACC_LEN = 12

try:
    from . import _kernels as _compiled
    HAVE_COMPILED = True
except ImportError:  # extension not built; fall back to the reference loops
    _compiled = None
    HAVE_COMPILED = False

from . import pykernels as _python


def get_kernels(engine: str = "auto"):
    """Return the kernel module for `engine` in {auto, compiled, python}."""
    env = os.environ.get("VERTGAME_ENGINE", "").strip().lower()
    if engine == "auto" and env in ("python", "compiled"):
        engine = env
    if engine == "auto":
        return _compiled if HAVE_COMPILED else _python
    if engine == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels requested but the extension is not built")
        return _compiled
    if engine == "python":
        return _python
    raise ValueError(f"unknown engine {engine!r}")


def engine_name(engine: str = "auto") -> str:
    return "compiled" if get_kernels(engine) is _compiled else "python"


def _row_values(row):
    lo = -math.inf
    lo_t = 0.0
    hi = math.inf
    hi_t = 0.0
    if row is not None:
        if row.lo is not None:
            lo = row.lo
        if row.lo_target is not None:
            lo_t = row.lo_target
        if row.hi is not None:
            hi = row.hi
        if row.hi_target is not None:
            hi_t = row.hi_target
    return lo, lo_t, hi, hi_t


def make_spec(params: ModelParams, pair: StrategyPair, dt: float) -> np.ndarray:
    """Flatten model constants and a strategy pair into the kernel layout."""
    profit_p, profit_c = build_profits(params)
    lo_p, lot_p, hi_p, hit_p = _row_values(pair.producer_plus)
    lo_m, lot_m, hi_m, hit_m = _row_values(pair.producer_minus)
    y_low = pair.y_low if pair.y_low is not None else -math.inf
    y_high = pair.y_high if pair.y_high is not None else math.inf
    spec = np.array([
        params.mu_plus, params.mu_minus, params.sigma,
        lo_p, lot_p, hi_p, hit_p,
        lo_m, lot_m, hi_m, hit_m,
        y_low, y_high,
        params.kappa0, params.kappa1, params.h_plus, params.h_minus,
        profit_p.g0, profit_p.g1, profit_p.g2,
        profit_c.g0, profit_c.g1, profit_c.g2,
        params.beta, dt,
    ], dtype=np.float64)
    assert spec.shape == (SPEC_LEN,)
    return spec


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def path_key(seed: int, purpose: int, index: int) -> np.ndarray:
    """128-bit counter-RNG key for one path substream.

    Derived deterministically from (seed, purpose, path index), so results
    do not depend on how paths are distributed over workers.
    """
    k0 = _mix64((seed & 0xFFFFFFFFFFFFFFFF) ^ _mix64(purpose))
    k1 = _mix64(k0 ^ _mix64(index + 0x632BE59BD9B4E019))
    return np.array([k0, k1], dtype=np.uint64)


def path_generator(seed: int, purpose: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=path_key(seed, purpose, index)))
