import dataclasses
import math

import numpy as np
import pytest

from vertgame.consumer import (
    consumer_alone,
    consumer_best_response,
    double_switch_br,
    no_switch_value,
    single_switch_br,
)
from vertgame.dynamics import discounted_payoff_mc
from vertgame.numerics import SolverFailure
from vertgame.values import ProducerRow, StrategyPair

from conftest import assert_close

INF = math.inf


def mc_check(pair, params, x0, regime, analytic, n_paths=900, label=""):
    """Simulated discounted payoff must match the analytic value within 3 SE."""
    __tracebackhide__ = True
    est = discounted_payoff_mc(pair, params, x0, regime, horizon=70.0,
                               n_paths=n_paths, dt=1 / 1000, seed=101, workers=2)
    z = (analytic - est.consumer_mean) / est.consumer_se
    assert abs(z) < 3.0, (f"{label}: analytic {analytic:.4f} vs simulated "
                          f"{est.consumer_mean:.4f} +- {est.consumer_se:.4f} (z={z:.2f})")


FIG2A = StrategyPair(ProducerRow(1.2, 2.5, 2.6, 4.2), ProducerRow(1.5, 3.0, 2.8, 4.5))


def test_no_switch_boundary_conditions(table2):
    # value unchanged by each producer impulse: w(x_r) = w(x_r*)
    for regime in ("plus", "minus"):
        w = no_switch_value(FIG2A, regime, table2)
        row = FIG2A.producer_plus if regime == "plus" else FIG2A.producer_minus
        scale = max(1.0, abs(w.eval(row.lo_target)))
        assert abs(w.eval(row.lo) - w.eval(row.lo_target)) < 1e-7 * scale
        assert abs(w.eval(row.hi) - w.eval(row.hi_target)) < 1e-7 * scale


def test_no_switch_degenerate_row_rejected(table2):
    row = ProducerRow(2.0, 2.0 + 1e-13, 4.0 - 1e-13, 4.0)
    with pytest.raises(SolverFailure, match="singular"):
        no_switch_value(StrategyPair(row, row), "plus", table2)


def test_no_switch_payoff_oracle(table2, mono):
    c_p = StrategyPair(mono.row_plus, mono.row_minus)
    w = no_switch_value(c_p, "minus", table2)
    pair = StrategyPair(mono.row_plus, mono.row_minus, None, None)  # consumer inactive
    mc_check(pair, table2, 3.5, "minus", w.eval(3.5), label="no-switch value")


def test_single_switch_reference_threshold(table2, eqm_type2):
    # the transitory fixed point's consumer threshold: printed value 4.3
    br = single_switch_br(eqm_type2.strategies, "minus", table2)
    assert br is not None and br.kind == "single_switch_to_minus"
    assert br.y_low == -INF
    assert_close(br.y_high, 4.3, 0.05, "single-switch threshold")


def test_single_switch_vanishes_for_huge_cost(table2, mono):
    big = dataclasses.replace(table2, h_plus=1e4, h_minus=1e4)
    c_p = StrategyPair(mono.row_plus, mono.row_minus)
    assert single_switch_br(c_p, "minus", big) is None


def test_single_switch_payoff_oracle(table2, eqm_type2):
    br = single_switch_br(eqm_type2.strategies, "minus", table2)
    pair = StrategyPair(eqm_type2.strategies.producer_plus,
                        eqm_type2.strategies.producer_minus, -INF, br.y_high)
    mc_check(pair, table2, 3.0, "plus", br.payoff_at(3.0, "plus"),
             label="single-switch value")


TYPE1_CP = StrategyPair(ProducerRow(2.0, 3.6, None, INF),
                        ProducerRow(-INF, None, 4.5, 6.1))


def test_double_switch_reference_thresholds(table2):
    br = double_switch_br(TYPE1_CP, table2)
    assert br is not None
    assert_close(br.y_low, 2.2, 0.05, "y_low")
    assert_close(br.y_high, 4.4, 0.05, "y_high")
    assert br.residual < 1e-8
    assert br.diagnostics["strict_band_ordering"]


def test_double_switch_mirror_symmetry(table2):
    # mirroring the whole problem about x = 0 must mirror the thresholds
    from vertgame.model import DirectProfit, ModelParams
    reference = double_switch_br(TYPE1_CP, table2)
    mirrored_params = ModelParams(
        beta=0.1, sigma=0.25, mu_plus=0.1, mu_minus=-0.1,
        producer=DirectProfit(0.25, -6.0, -2.0),
        consumer=DirectProfit(0.75, -5.0, -1.0),
        h_plus=10.0, h_minus=10.0, kappa0=3.0, kappa1=0.0,
    )
    mirrored_cp = StrategyPair(ProducerRow(-6.1, -4.5, None, INF),
                               ProducerRow(-INF, None, -3.6, -2.0))
    br = double_switch_br(mirrored_cp, mirrored_params)
    assert br is not None
    assert_close(br.y_low, -reference.y_high, 1e-6, "mirrored y_low")
    assert_close(br.y_high, -reference.y_low, 1e-6, "mirrored y_high")


def test_double_switch_payoff_oracle(table2):
    br = double_switch_br(TYPE1_CP, table2)
    pair = StrategyPair(TYPE1_CP.producer_plus, TYPE1_CP.producer_minus,
                        br.y_low, br.y_high)
    mc_check(pair, table2, 3.0, "plus", br.payoff_at(3.0, "plus"),
             label="double-switch value")


def test_double_switch_obstacle_margins(table2):
    br = double_switch_br(TYPE1_CP, table2)
    xs = np.linspace(2.0, br.y_high, 101)[1:-1]
    own = br.values.plus.eval_many(xs)
    obs = br.values.minus.eval_many(xs) - table2.h_plus
    assert np.min(own - obs) > -1e-6 * np.max(np.abs(own))
    # equality at the switching threshold
    gap = br.values.plus.eval(br.y_high) - (br.values.minus.eval(br.y_high) - table2.h_plus)
    assert abs(gap) < 1e-7 * max(1.0, abs(br.values.plus.eval(br.y_high)))


def test_alone_reference(table2, alone):
    assert_close(alone.y_low, 1.7, 0.05, "alone y_low")
    assert_close(alone.y_high, 4.3, 0.05, "alone y_high")


def test_alone_never_switch_for_huge_cost(table2):
    big = dataclasses.replace(table2, h_plus=1e5, h_minus=1e5)
    with pytest.raises(SolverFailure):
        consumer_alone(big)


def test_alone_payoff_oracle(table2, alone):
    pair = StrategyPair(ProducerRow(), ProducerRow(), alone.y_low, alone.y_high)
    mc_check(pair, table2, 3.0, "plus", alone.payoff_at(3.0, "plus"),
             label="stand-alone value")


def test_alone_exponential_tails_decay(table2, alone):
    # far from the thresholds only the perpetual-profit quadratic remains:
    # the growing exponential was excluded on each side
    from vertgame.model import build_profits, regime_fundamentals
    _, cons = build_profits(table2)
    fp = regime_fundamentals(cons, "plus", table2)
    fm = regime_fundamentals(cons, "minus", table2)
    assert abs(alone.values.plus.eval(-40.0) - fp.q_value(-40.0)) < 1e-6
    assert abs(alone.values.minus.eval(40.0) - fm.q_value(40.0)) < 1e-6


# ---------------------------------------------------------------- selection


def test_selection_picks_double_switch_for_cycling_rows(table2):
    br = consumer_best_response(TYPE1_CP, table2)
    assert br.kind == "double_switch"
    assert_close(br.y_low, 2.2, 0.05, "selected y_low")
    assert_close(br.y_high, 4.4, 0.05, "selected y_high")


def test_selection_no_switch_dominates_for_fig2_rows(table2):
    # with this two-sided band the passive payoffs dominate in both regimes
    br = consumer_best_response(FIG2A, table2)
    assert br.kind == "no_switch"
    assert br.strategy == (None, None)


def test_cheap_switching_dominates_no_switch(table2, mono):
    cheap = dataclasses.replace(table2, h_plus=0.01, h_minus=0.01)
    c_p = StrategyPair(mono.row_plus, mono.row_minus)
    view = StrategyPair(
        ProducerRow(mono.row_plus.lo, mono.row_plus.lo_target, None, INF),
        ProducerRow(-INF, None, mono.row_minus.hi_target, mono.row_minus.hi),
    )
    ds = double_switch_br(view, cheap)
    w0 = no_switch_value(c_p, "plus", cheap)
    xs = np.linspace(mono.row_plus.lo + 0.01, ds.y_high - 0.01, 101)
    assert np.all(ds.values.plus.eval_many(xs) > w0.eval_many(xs))


def test_unknown_branch_rejected(table2):
    with pytest.raises(ValueError, match="branch"):
        consumer_best_response(TYPE1_CP, table2, branch="bogus")
