import dataclasses
import math

import numpy as np
import pytest

from vertgame.dynamics import (
    build_jump_chain,
    expected_exit_time,
    expected_switch_time,
    hitting_prob,
    long_run_stats,
    regime_occupation,
    simulate_long_run,
    simulate_path,
    stationary_density,
)
from vertgame.engine import ACC_LEN, make_spec, get_kernels
from vertgame.numerics import SolverFailure
from vertgame.values import ProducerRow, StrategyPair

from conftest import assert_close
from _oracles import exact_stationary_moments, mc_exit_oracle

INF = math.inf


# ------------------------------------------------- closed-form BM quantities


def test_hitting_prob_boundaries():
    assert hitting_prob(2.0, 2.0, 4.0, 0.1, 0.25) == 1.0
    assert hitting_prob(4.0, 2.0, 4.0, 0.1, 0.25) == 0.0
    assert hitting_prob(1.0, 2.0, 4.0, 0.1, 0.25) == 1.0


def test_hitting_prob_driftless_midpoint():
    assert_close(hitting_prob(3.0, 2.0, 4.0, 0.0, 0.25), 0.5, 1e-14, "midpoint")


def test_hitting_prob_reference_value():
    p = hitting_prob(3.0, 2.0, 4.4, 0.1, 0.25)
    assert_close(p, 0.040, 5e-4, "reference hit probability")


def test_hitting_prob_extreme_drift_stable():
    # |2 mu (b-a)/sigma^2| ~ 2.6e5: must stay exact and in [0, 1]
    p = hitting_prob(2.1, 2.0, 4.6, 50.0, 0.1)
    assert 0.0 <= p <= 1e-8
    p2 = hitting_prob(4.5, 2.0, 4.6, -50.0, 0.1)
    assert 1.0 - 1e-8 <= p2 <= 1.0


def test_exit_time_boundaries_and_driftless():
    assert expected_exit_time(2.0, 2.0, 4.0, 0.1, 0.25) == 0.0
    assert_close(expected_exit_time(3.0, 2.0, 4.0, 0.0, 0.25), 16.0, 1e-12,
                 "driftless exit time")


@pytest.mark.parametrize("x,a,b,mu,sigma", [
    (3.0, 2.0, 4.4, 0.1, 0.25),
    (2.2, 2.0, 4.4, 0.1, 0.25),
    (3.0, 2.0, 4.0, -0.15, 0.3),
    (0.6, 0.0, 1.0, 0.0, 0.5),
])
def test_hitting_quantities_vs_mc(x, a, b, mu, sigma):
    p_mc, se_p, t_mc, se_t = mc_exit_oracle(x, a, b, mu, sigma,
                                            n_paths=20000, dt=5e-4, seed=4)
    p = hitting_prob(x, a, b, mu, sigma)
    t = expected_exit_time(x, a, b, mu, sigma)
    assert abs(p - p_mc) < 3 * max(se_p, 1e-4), f"prob {p} vs MC {p_mc}+-{se_p}"
    assert abs(t - t_mc) < 3 * se_t, f"time {t} vs MC {t_mc}+-{se_t}"


# -------------------------------------------------------------- path engine


def test_deterministic_drift_switch():
    # sigma = 0 exercised at the kernel level: price ramps to the switch level
    pair = StrategyPair(ProducerRow(1.0, 2.0, None, INF),
                        ProducerRow(-INF, None, 3.0, 5.0), 1.5, 4.0)
    spec = np.zeros(25)
    spec[0], spec[1], spec[2] = 0.1, -0.1, 0.0   # mu_plus, mu_minus, sigma
    spec[3:11] = [1.0, 2.0, INF, 0.0, -INF, 0.0, 5.0, 3.0]
    spec[11], spec[12] = 1.5, 4.0
    spec[24] = 1.0 / 365.0
    kern = get_kernels("python")
    state = np.array([3.0, 0.0, 0.0])
    n = int(30 * 365)
    ev = np.zeros(8), np.zeros(8, dtype=np.int64), np.zeros(8), np.zeros(8)
    n_ev = np.zeros(1, dtype=np.int64)
    kern.run_path_chunk(spec, np.zeros(n), state, 0.0, ev[0], ev[1], ev[2], ev[3],
                        n_ev, np.zeros(1), 0)
    assert n_ev[0] >= 1
    t_switch = ev[0][0]
    assert ev[1][0] == 4  # switch to contraction
    assert abs(t_switch - (4.0 - 3.0) / 0.1) <= 2.0 / 365.0
    assert ev[2][0] == 4.0 and ev[3][0] == 4.0  # clamped to the threshold


def test_path_confined_to_band(table2, eqm_type1):
    pair = eqm_type1.strategies
    rec = simulate_path(pair, table2, 3.0, "plus", horizon=2000.0, dt=1 / 365,
                        seed=12)
    step = table2.sigma * math.sqrt(1 / 365)
    lo = pair.producer_plus.lo - 4 * step
    hi = pair.producer_minus.hi + 4 * step
    assert rec.x.min() >= lo and rec.x.max() <= hi
    kinds = {k for _, k, _, _ in rec.events}
    assert {"switch_to_plus", "switch_to_minus"} <= kinds
    assert (rec.regime == 0).any() and (rec.regime == 1).any()


def test_path_determinism_and_engine_equality(table2, eqm_type1):
    pair = eqm_type1.strategies
    a = simulate_path(pair, table2, 3.0, "plus", horizon=60.0, dt=1 / 365,
                      seed=3, engine="python")
    b = simulate_path(pair, table2, 3.0, "plus", horizon=60.0, dt=1 / 365,
                      seed=3, engine="compiled")
    c = simulate_path(pair, table2, 3.0, "plus", horizon=60.0, dt=1 / 365,
                      seed=3, engine="compiled")
    assert a.events == b.events == c.events
    assert np.array_equal(a.x, b.x) and np.array_equal(b.x, c.x)
    assert a.x_end == b.x_end == c.x_end


def test_coarse_dt_warning(table2, eqm_type1):
    # per-step diffusion 0.25 exceeds 10% of the ~2.4-wide expansion band
    rec = simulate_path(eqm_type1.strategies, table2, 3.0, "plus",
                        horizon=4.0, dt=1.0, seed=1)
    assert any("coarse" in w for w in rec.warnings)


def test_switch_into_impulse_region_followup(table2):
    # an up-switch below the expansion impulse threshold fires that impulse
    # immediately at the switch price
    pair = StrategyPair(ProducerRow(2.6, 3.6, None, INF),
                        ProducerRow(-INF, None, 4.5, 6.1), 2.2, 4.4)
    rec = simulate_path(pair, table2, 3.0, "minus", horizon=400.0, dt=1 / 365, seed=2)
    kinds = [k for _, k, _, _ in rec.events]
    assert "switch_to_plus" in kinds
    i = kinds.index("switch_to_plus")
    t_sw, _, _, post_sw = rec.events[i]
    t_im, kind_im, pre_im, post_im = rec.events[i + 1]
    assert kind_im == "impulse_up"
    assert t_im == t_sw                      # same step
    assert pre_im == post_sw == 2.2          # impulse fires from the switch price
    assert post_im == 3.6


# ------------------------------------------------------------ long-run runs


@pytest.fixture(scope="module")
def longrun_type1(table2, eqm_type1):
    return simulate_long_run(eqm_type1.strategies, table2, years=1.5e5,
                             dt=1 / 365, n_paths=12, seed=7, workers=2)


def test_long_run_worker_independence(table2, eqm_type1):
    kw = dict(years=6000.0, dt=1 / 365, n_paths=6, seed=19, bins=100)
    a = simulate_long_run(eqm_type1.strategies, table2, workers=1, **kw)
    b = simulate_long_run(eqm_type1.strategies, table2, workers=3, **kw)
    assert np.array_equal(a.per_path, b.per_path)
    assert np.array_equal(a.hist, b.hist)
    assert np.array_equal(a.totals(), b.totals())


def test_long_run_engine_equality(table2, eqm_type1):
    kw = dict(years=1500.0, dt=1 / 365, n_paths=3, seed=23, bins=64, workers=1)
    a = simulate_long_run(eqm_type1.strategies, table2, engine="python", **kw)
    b = simulate_long_run(eqm_type1.strategies, table2, engine="compiled", **kw)
    assert np.array_equal(a.per_path, b.per_path)
    assert np.array_equal(a.hist, b.hist)


def test_long_run_stats_against_exact_law(table2, eqm_type1, longrun_type1):
    stats = long_run_stats(longrun_type1, table2)
    chain = build_jump_chain(eqm_type1.strategies, table2)
    exact = exact_stationary_moments(eqm_type1.strategies, table2, chain)
    assert abs(stats["mean"] - exact["mean"]) < 4 * stats["mean_se"] + 1e-3
    assert_close(stats["std"], exact["std"], 0.01, "std vs exact law")
    assert_close(stats["rho_plus"], exact["rho_plus"], 0.01, "regime occupation")


def test_apoo_identity_point_mass(table2):
    from vertgame.dynamics import LongRunResult
    from vertgame.model import build_profits
    _, cons = build_profits(table2)
    xbar = cons.xbar
    acc = np.zeros((1, ACC_LEN))
    acc[0, 0] = 1.0
    acc[0, 1:5] = [xbar, xbar ** 2, xbar ** 3, xbar ** 4]
    res = LongRunResult(pair=None, per_path=acc, hist=np.ones((2, 4), dtype=np.int64),
                        bin_edges=np.linspace(0, 1, 5), years=1.0, dt=1.0,
                        seed=0, n_paths=1)
    stats = long_run_stats(res, table2)
    assert_close(stats["apoo_c"], 1.0, 1e-12, "point-mass optimality ratio")


def test_density_table_properties(longrun_type1, table2, eqm_type1):
    dens = stationary_density(longrun_type1)
    assert_close(dens.mass.sum(), 1.0, 1e-12, "total mass")
    assert np.allclose(dens.mass, dens.mass_plus + dens.mass_minus)
    pair = eqm_type1.strategies
    centers = 0.5 * (dens.bin_left + dens.bin_right)
    top_plus = centers[dens.mass_plus > 0].max()
    top_minus = centers[dens.mass_minus > 0].max()
    lo_plus = centers[dens.mass_plus > 0].min()
    lo_minus = centers[dens.mass_minus > 0].min()
    # expansion support ends near the switch level, contraction extends to
    # the upper impulse threshold (and mirror story at the bottom)
    assert top_plus <= pair.y_high + 0.1 < top_minus
    assert lo_plus <= lo_minus - 0.1 or lo_plus <= pair.producer_plus.lo + 0.1
    assert top_minus <= pair.producer_minus.hi + 0.1
    # smoothed curve integrates to ~1
    area = np.trapezoid(dens.smooth_density, dens.smooth_x)
    assert_close(area, 1.0, 0.02, "smoothed density area")


def test_non_ergodic_rejected(table2):
    pair = StrategyPair(ProducerRow(2.0, 3.6, None, INF), ProducerRow(), 2.2, None)
    with pytest.raises(SolverFailure, match="unbounded"):
        simulate_long_run(pair, table2, years=10.0, n_paths=1)


# -------------------------------------------------------------- jump chain


def test_chain_rows_and_invariance(table2, eqm_type1):
    chain = build_jump_chain(eqm_type1.strategies, table2)
    assert np.allclose(chain.P.sum(axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(chain.pi @ chain.P - chain.pi)) < 1e-10
    assert chain.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert set(chain.recurrent) == {"S_plus", "S_minus", "I_lo_plus", "I_hi_minus"}
    # the one-shot states never recur
    idx = {s: i for i, s in enumerate(chain.states)}
    assert chain.pi[idx["I_hi_plus"]] == 0.0
    assert chain.pi[idx["I_lo_minus"]] == 0.0


def test_chain_first_step_identity(table2, eqm_type1):
    pair = eqm_type1.strategies
    chain = build_jump_chain(pair, table2)
    idx = {s: i for i, s in enumerate(chain.states)}
    p_lo = hitting_prob(pair.y_low, pair.producer_plus.lo, pair.y_high,
                        table2.mu_plus, table2.sigma)
    assert_close(chain.P[idx["S_plus"], idx["S_minus"]], 1.0 - p_lo, 1e-12,
                 "first-step identity")


def test_chain_vs_empirical_frequencies(table2, eqm_type1, longrun_type1):
    chain = build_jump_chain(eqm_type1.strategies, table2)
    idx = {s: i for i, s in enumerate(chain.states)}
    pp = longrun_type1.per_path
    counts = pp[:, 6:12]
    tot = counts.sum(axis=1)
    freqs = counts / tot[:, None]
    mean_f = counts.sum(axis=0) / counts.sum()
    se_f = freqs.std(axis=0, ddof=1) / math.sqrt(len(pp))
    order = ["S_plus", "S_minus", "I_lo_plus", "I_hi_plus", "I_lo_minus", "I_hi_minus"]
    for j, name in enumerate(order):
        th = chain.pi[idx[name]]
        assert abs(mean_f[j] - th) < 3 * max(se_f[j], 2e-4), \
            f"{name}: empirical {mean_f[j]:.5f} vs invariant {th:.5f}"


def test_rho_plus_chain_vs_empirical(table2, eqm_type1, longrun_type1):
    chain = build_jump_chain(eqm_type1.strategies, table2)
    rho_p, rho_m = regime_occupation(chain)
    stats = long_run_stats(longrun_type1, table2)
    assert_close(rho_p, stats["rho_plus"], 0.01, "chain vs empirical occupation")
    assert rho_p + rho_m == 1.0


def test_chain_rejected_for_unbounded_band(table2):
    pair = StrategyPair(ProducerRow(1.7, 3.1, 3.1, 4.3), ProducerRow(), None, 4.3)
    with pytest.raises(SolverFailure, match="unbounded"):
        build_jump_chain(pair, table2)


# ---------------------------------------------------- expected switch time


def test_expected_switch_time_immediate(table2, eqm_type1):
    pair = eqm_type1.strategies
    assert expected_switch_time(pair, table2, pair.y_high) == 0.0


def test_expected_switch_time_vs_simulation(table2, eqm_type1):
    pair = eqm_type1.strategies
    analytic = expected_switch_time(pair, table2, 3.0)
    times = []
    for seed in range(250):
        rec = simulate_path(pair, table2, 3.0, "plus", horizon=250.0,
                            dt=1 / 365, seed=seed)
        t = next((t for t, k, _, _ in rec.events if k == "switch_to_minus"), None)
        assert t is not None
        times.append(t)
    times = np.array(times)
    se = times.std(ddof=1) / math.sqrt(len(times))
    assert abs(times.mean() - analytic) < 3 * se, \
        f"simulated {times.mean():.2f}+-{se:.2f} vs analytic {analytic:.2f}"


def test_expected_switch_time_formula_readings(table2, eqm_type1):
    d = expected_switch_time(eqm_type1.strategies, table2, 3.0, detail=True)
    assert d["first_step"] == d["formula_I_lo_reading"]
    assert d["formula_I_hi_reading"] <= d["first_step"]


def test_expected_switch_time_decreases_with_volatility(table2, eqm_type1):
    pair = eqm_type1.strategies
    vals = []
    for sig in (0.25, 0.3, 0.4):
        p = dataclasses.replace(table2, sigma=sig)
        vals.append(expected_switch_time(pair, p, 3.0))
    assert vals[0] > vals[1] > vals[2]
