import math

import numpy as np
import pytest

from vertgame.model import build_profits, regime_fundamentals
from vertgame.pasting import Sheet
from vertgame.values import (
    DelegatePiece,
    PeggedPiece,
    PiecewiseValue,
    ProducerRow,
    RegimePair,
    StrategyPair,
    read_thresholds_csv,
    write_thresholds_csv,
)

from conftest import assert_close

INF = math.inf


@pytest.fixture()
def sample_pv(table2):
    _, cons = build_profits(table2)
    fund = regime_fundamentals(cons, "plus", table2)
    sheet = Sheet(fund, ref1=5.0, ref2=2.0)
    c = np.array([0.8, -1.3])
    return PiecewiseValue(
        "plus",
        [
            PeggedPiece(-INF, 2.0, anchor=3.0, anchor_value=sheet.val(3.0, c)),
            sheet.piece(2.0, 5.0, c),
            PeggedPiece(5.0, INF, anchor=4.0, anchor_value=sheet.val(4.0, c)),
        ],
        knots={2.0: False, 5.0: False},
    ), cons, sheet, c


def test_eval_matches_finite_differences(sample_pv, table2):
    pv, _, _, _ = sample_pv
    h = 1e-5
    for x in np.linspace(2.2, 4.8, 9):
        fd = (pv.eval(x + h) - pv.eval(x - h)) / (2 * h)
        d = pv.deriv(x)
        assert abs(fd - d) <= 1e-5 * max(1.0, abs(d))
        fd2 = (pv.eval(x + h) - 2 * pv.eval(x) + pv.eval(x - h)) / (h * h)
        assert abs(fd2 - pv.deriv2(x)) <= 1e-4 * max(1.0, abs(pv.deriv2(x)))


def test_pegged_piece_flat(sample_pv):
    pv, _, _, _ = sample_pv
    assert pv.deriv(1.0) == 0.0
    assert pv.eval(0.5) == pv.eval(1.5)


def test_pegged_piece_with_proportional_cost():
    p = PeggedPiece(5.0, INF, anchor=4.0, anchor_value=7.0, base_cost=3.0, slope_cost=0.5)
    assert p.value(6.0) == 7.0 - 3.0 - 0.5 * 2.0
    assert p.slope(6.0) == -0.5
    p2 = PeggedPiece(-INF, 2.0, anchor=3.0, anchor_value=7.0, base_cost=3.0, slope_cost=0.5)
    assert p2.slope(1.0) == +0.5


def test_zero_coefficients_reduce_to_quadratic(table2):
    _, cons = build_profits(table2)
    fund = regime_fundamentals(cons, "plus", table2)
    sheet = Sheet(fund, ref1=5.0, ref2=2.0)
    pv = PiecewiseValue("plus", [sheet.piece(-INF, INF, np.zeros(2))])
    for x in (1.0, 3.3, 6.2):
        assert_close(pv.eval(x), fund.q_value(x), 1e-12, "bare particular")


def test_ode_residual_zero_for_any_homogeneous_part(sample_pv, table2):
    pv, cons, _, _ = sample_pv
    for x in np.linspace(2.1, 4.9, 7):
        assert abs(pv.ode_residual(x, cons, table2)) < 1e-9


def test_ode_residual_detects_perturbation(sample_pv, table2):
    pv, cons, sheet, c = sample_pv
    bad_fund = regime_fundamentals(cons, "plus", table2)
    import dataclasses
    bad_fund = dataclasses.replace(bad_fund, q2=bad_fund.q2 + 1e-3)
    bad_sheet = Sheet(bad_fund, ref1=5.0, ref2=2.0)
    bad = PiecewiseValue("plus", [bad_sheet.piece(2.0, 5.0, c)])
    x = 3.5
    # -beta*(dq2 x^2) + mu*(2 dq2 x) + sigma^2 dq2 is the induced residual
    d = 1e-3
    expected = (-table2.beta * d * x * x + table2.mu_plus * 2 * d * x
                + table2.sigma ** 2 * d)
    got = bad.ode_residual(x, cons, table2)
    assert abs(got) > 1e-6
    assert_close(got, expected, 1e-9, "perturbation residual")


def test_ode_residual_rejected_off_analytic(sample_pv, table2):
    pv, cons, _, _ = sample_pv
    with pytest.raises(ValueError, match="continuation"):
        pv.ode_residual(1.0, cons, table2)


def test_knot_evaluation_prefers_continuation_side(sample_pv):
    pv, _, sheet, c = sample_pv
    # at both knots the analytic limit is returned, not the pegged value
    assert pv.eval(2.0) == sheet.val(2.0, c)
    assert pv.eval(5.0) == sheet.val(5.0, c)
    assert pv.deriv(5.0) == sheet.dval(5.0, c)


def test_delegate_resolves_through_pair(table2):
    _, cons = build_profits(table2)
    fp = regime_fundamentals(cons, "plus", table2)
    fm = regime_fundamentals(cons, "minus", table2)
    sp = Sheet(fp, ref1=4.0, ref2=2.0)
    sm = Sheet(fm, ref1=6.0, ref2=2.5)
    pair = RegimePair()
    pair.plus = PiecewiseValue(
        "plus",
        [sp.piece(-INF, 4.0, np.array([0.1, 0.2])),
         DelegatePiece(4.0, INF, pair, "minus", cost=10.0)],
        knots={4.0: True},
    )
    pair.minus = PiecewiseValue(
        "minus",
        [DelegatePiece(-INF, 2.5, pair, "plus", cost=10.0),
         sm.piece(2.5, INF, np.array([0.3, 0.05]))],
        knots={2.5: True},
    )
    assert_close(pair.plus.eval(5.0), pair.minus.eval(5.0) - 10.0, 1e-12, "delegate")
    assert_close(pair.minus.eval(1.0), pair.plus.eval(1.0) - 10.0, 1e-12, "delegate back")
    assert pair.plus.deriv(5.0) == pair.minus.deriv(5.0)


def test_eval_outside_domain_raises():
    p = PiecewiseValue("plus", [PeggedPiece(0.0, 1.0, anchor=0.5, anchor_value=1.0)])
    with pytest.raises(ValueError):
        p.eval(2.0)
    with pytest.raises(ValueError):
        p.eval(math.nan)


def test_to_dict_serialization(sample_pv):
    pv, _, _, _ = sample_pv
    d = pv.to_dict()
    assert [p["kind"] for p in d["pieces"]] == ["pegged", "analytic", "pegged"]
    mid = d["pieces"][1]
    assert {"q2", "q1", "q0", "theta1", "theta2", "c1", "c2", "ref1", "ref2"} <= mid.keys()


# ------------------------------------------------------------- strategies


def test_producer_row_ordering_enforced():
    with pytest.raises(ValueError):
        ProducerRow(lo=2.0, lo_target=1.5, hi_target=None, hi=None)
    with pytest.raises(ValueError):
        ProducerRow(lo=None, lo_target=None, hi_target=5.0, hi=4.0)
    ProducerRow(-INF, None, 4.5, 6.1)  # infinite lo needs no target


def test_strategy_pair_ordering():
    with pytest.raises(ValueError):
        StrategyPair(ProducerRow(), ProducerRow(), y_low=4.0, y_high=3.0)


def test_sentinels_never_large_floats(eqm_type1):
    pair = eqm_type1.strategies
    ents = pair.entries()
    assert ents["p_plus_hi"] == INF and ents["p_plus_hi_target"] is None
    assert ents["p_minus_lo"] == -INF and ents["p_minus_lo_target"] is None


def test_csv_roundtrip_bit_exact(tmp_path, eqm_type1):
    path = tmp_path / "thresholds.csv"
    write_thresholds_csv(str(path), eqm_type1.strategies, extra={"type": "I"})
    back = read_thresholds_csv(str(path))
    assert back == eqm_type1.strategies  # dataclass equality: bit-exact floats


def test_csv_roundtrip_with_sentinels(tmp_path):
    pair = StrategyPair(ProducerRow(1.7, 3.1, 3.1, 4.3), ProducerRow(), None, 4.3)
    path = tmp_path / "t.csv"
    write_thresholds_csv(str(path), pair)
    assert read_thresholds_csv(str(path)) == pair


def test_sup_delta_pattern_mismatch(eqm_type1, eqm_type3):
    assert eqm_type1.strategies.sup_delta(eqm_type3.strategies) == INF
    assert eqm_type1.strategies.sup_delta(eqm_type1.strategies) == 0.0
