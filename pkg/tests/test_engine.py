import math

import numpy as np
import pytest

from vertgame.engine import (
    ACC_LEN,
    HAVE_COMPILED,
    engine_name,
    get_kernels,
    make_spec,
    path_generator,
    path_key,
)
from vertgame.values import ProducerRow, StrategyPair

INF = math.inf


@pytest.fixture(scope="module")
def spec(table2, eqm_type1):
    return make_spec(table2, eqm_type1.strategies, 1.0 / 365.0)


def test_compiled_extension_available():
    assert HAVE_COMPILED
    assert engine_name("auto") == "compiled"
    assert engine_name("python") == "python"


def test_make_spec_layout(table2, eqm_type1, spec):
    pair = eqm_type1.strategies
    assert spec.shape == (25,)
    assert spec[0] == table2.mu_plus and spec[1] == table2.mu_minus
    assert spec[3] == pair.producer_plus.lo
    assert spec[5] == INF                      # absent upper threshold
    assert spec[7] == -INF                     # absent lower threshold
    assert spec[11] == pair.y_low and spec[12] == pair.y_high
    assert spec[23] == table2.beta and spec[24] == 1.0 / 365.0


def test_path_key_deterministic_and_distinct():
    a = path_key(42, 1, 7)
    assert np.array_equal(a, path_key(42, 1, 7))
    assert not np.array_equal(a, path_key(42, 1, 8))
    assert not np.array_equal(a, path_key(42, 2, 7))
    assert not np.array_equal(a, path_key(43, 1, 7))
    g1 = path_generator(42, 1, 7).standard_normal(4)
    g2 = path_generator(42, 1, 7).standard_normal(4)
    assert np.array_equal(g1, g2)


def _run_stats(kern, spec, z, burn=0):
    state = np.array([3.0, 0.0, float(burn)])
    acc = np.zeros(ACC_LEN)
    hist = np.zeros((2, 50), dtype=np.int64)
    kern.run_stats_chunk(spec, z, state, acc, hist, 1.5, 0.1)
    return state, acc, hist


def test_stats_kernels_bit_identical(spec):
    z = path_generator(5, 1, 0).standard_normal(40000)
    s1, a1, h1 = _run_stats(get_kernels("python"), spec, z)
    s2, a2, h2 = _run_stats(get_kernels("compiled"), spec, z)
    assert np.array_equal(s1, s2)
    assert np.array_equal(a1, a2)
    assert np.array_equal(h1, h2)
    assert a1[0] > 0 and h1.sum() == 40000


def test_stats_chunk_resume_equivalence(spec):
    z = path_generator(6, 1, 0).standard_normal(30000)
    kern = get_kernels("compiled")
    s_once, a_once, h_once = _run_stats(kern, spec, z)
    state = np.array([3.0, 0.0, 0.0])
    acc = np.zeros(ACC_LEN)
    hist = np.zeros((2, 50), dtype=np.int64)
    kern.run_stats_chunk(spec, z[:11111], state, acc, hist, 1.5, 0.1)
    kern.run_stats_chunk(spec, z[11111:], state, acc, hist, 1.5, 0.1)
    assert np.array_equal(s_once, state)
    assert np.array_equal(a_once, acc)
    assert np.array_equal(h_once, hist)


def test_stats_burn_in_skips_accumulation(spec):
    z = path_generator(7, 1, 0).standard_normal(5000)
    _, acc, hist = _run_stats(get_kernels("compiled"), spec, z, burn=5000)
    assert acc.sum() == 0.0 and hist.sum() == 0


def _run_payoff(kern, spec, z):
    state = np.array([3.0, 0.0, 1.0, 0.0, 0.0])
    kern.run_payoff_chunk(spec, z, state)
    return state


def test_payoff_kernels_bit_identical(spec):
    z = path_generator(8, 2, 0).standard_normal(30000)
    s1 = _run_payoff(get_kernels("python"), spec, z)
    s2 = _run_payoff(get_kernels("compiled"), spec, z)
    assert np.array_equal(s1, s2)
    assert s1[3] != 0.0 and s1[4] != 0.0


def test_payoff_chunk_resume_equivalence(spec):
    z = path_generator(9, 2, 0).standard_normal(20000)
    kern = get_kernels("compiled")
    once = _run_payoff(kern, spec, z)
    state = np.array([3.0, 0.0, 1.0, 0.0, 0.0])
    kern.run_payoff_chunk(spec, z[:7777], state)
    kern.run_payoff_chunk(spec, z[7777:], state)
    assert np.array_equal(once, state)


def _run_path(kern, spec, z, cap=256, sample_every=50):
    state = np.array([3.0, 0.0, 0.0])
    ev = (np.zeros(cap), np.zeros(cap, dtype=np.int64), np.zeros(cap), np.zeros(cap))
    n_ev = np.zeros(1, dtype=np.int64)
    xs = np.full(len(z) // sample_every + 1, np.nan)
    used = kern.run_path_chunk(spec, z, state, 0.0, *ev, n_ev, xs, sample_every)
    return used, state, ev, int(n_ev[0]), xs


def test_path_kernels_bit_identical(spec):
    z = path_generator(10, 3, 0).standard_normal(60000)
    u1, s1, e1, n1, x1 = _run_path(get_kernels("python"), spec, z)
    u2, s2, e2, n2, x2 = _run_path(get_kernels("compiled"), spec, z)
    assert u1 == u2 and n1 == n2
    assert np.array_equal(s1, s2)
    for a, b in zip(e1, e2):
        assert np.array_equal(a[:n1], b[:n1])
    assert np.array_equal(x1, x2, equal_nan=True)


def test_path_event_buffer_stops_cleanly(spec):
    z = path_generator(11, 3, 0).standard_normal(300000)
    used, state, ev, n, _ = _run_path(get_kernels("compiled"), spec, z, cap=2)
    assert n == 2
    assert used < len(z)


def test_engine_env_override(monkeypatch):
    monkeypatch.setenv("VERTGAME_ENGINE", "python")
    assert engine_name("auto") == "python"
    monkeypatch.setenv("VERTGAME_ENGINE", "compiled")
    assert engine_name("auto") == "compiled"
    monkeypatch.delenv("VERTGAME_ENGINE")
    with pytest.raises(ValueError):
        get_kernels("fortran")
