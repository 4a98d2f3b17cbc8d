"""Fixed points of the best-response maps: search, classification, checks.

Tatonnement alternates the two best-response solvers until the threshold
vector stops moving.  Which fixed point is found depends on the branch that
pins the candidate structures:

* ``generic``           consumer cycles, producer lets her (double switch)
* ``transitory-minus``  one switch into contraction, then producer monopoly
* ``transitory-plus``   mirrored
* ``preemptive-plus``   producer impulses at her switching level; the drift
                        never leaves expansion
* ``preemptive-minus``  mirrored
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .consumer import ConsumerBR, consumer_alone, consumer_best_response
from .model import ModelParams, build_profits
from .numerics import SolverFailure
from .producer import ProducerBR, monopoly_two_sided, producer_best_response
from .values import ProducerRow, StrategyPair

__all__ = ["EquilibriumResult", "Check", "tatonnement", "classify", "verify"]

BRANCHES = ("generic", "transitory-minus", "transitory-plus",
            "preemptive-plus", "preemptive-minus")


@dataclass
class EquilibriumResult:
    strategies: StrategyPair
    type_tag: str
    producer_br: ProducerBR
    consumer_br: ConsumerBR
    iterations: int
    converged: bool
    branch: str
    mode: str
    convergence_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def producer_values(self) -> RegimePair:
        return self.producer_br.values

    @property
    def consumer_values(self) -> RegimePair:
        return self.consumer_br.values


def _assemble(pbr: ProducerBR, cbr: ConsumerBR, branch: str,
              final: bool = False) -> StrategyPair:
    y_low, y_high = cbr.y_low, cbr.y_high
    # in a preempted regime the consumer's unreachable opposite threshold is
    # not part of the strategy; on the final assembly her blocked switch
    # level is identified with the pinned impulse threshold exactly
    if branch == "preemptive-plus":
        y_low = None
        if final and pbr.row_plus is not None and pbr.row_plus.hi is not None:
            y_high = pbr.row_plus.hi
    elif branch == "preemptive-minus":
        y_high = None
        if final and pbr.row_minus is not None and pbr.row_minus.lo is not None:
            y_low = pbr.row_minus.lo
    return StrategyPair(
        pbr.row_plus if pbr.row_plus is not None else ProducerRow(),
        pbr.row_minus if pbr.row_minus is not None else ProducerRow(),
        y_low,
        y_high,
    )


def _producer_view(branch: str, y_low, y_high):
    """Consumer thresholds as the producer's solver should see them."""
    if branch in ("transitory-minus", "preemptive-plus"):
        return (-math.inf, y_high)
    if branch in ("transitory-plus", "preemptive-minus"):
        return (y_low, math.inf)
    return (y_low, y_high)


def _empty(row: ProducerRow | None) -> bool:
    return row is None or (row.lo is None and row.hi is None)


def _complete_row(row: ProducerRow | None, mono_row: ProducerRow) -> ProducerRow:
    """Fill missing halves of a one-sided row from the monopoly band."""
    if row is None:
        return mono_row
    lo, lot = row.lo, row.lo_target
    hi, hit = row.hi, row.hi_target
    if lo is None or not math.isfinite(lo):
        lo, lot = mono_row.lo, mono_row.lo_target
    if hi is None or not math.isfinite(hi):
        hi, hit = mono_row.hi, mono_row.hi_target
    return ProducerRow(lo, lot, hit, hi)


def _consumer_view(row_plus, row_minus, params: ModelParams, branch: str,
                   complete: bool = False) -> StrategyPair:
    """Producer strategy as the consumer's solvers need to see it.

    Preemptive branches drop the pinned threshold (the consumer computes the
    switch level she would like; the producer then preempts it).  Regimes or
    row halves the producer's candidate leaves open are filled from the
    monopoly band as the off-equilibrium continuation: with ``complete``
    every row becomes two-sided so all candidate kinds are solvable.
    """
    if branch == "preemptive-plus" and row_plus is not None:
        row_plus = ProducerRow(row_plus.lo, row_plus.lo_target, None, math.inf)
    if branch == "preemptive-minus" and row_minus is not None:
        row_minus = ProducerRow(-math.inf, None, row_minus.hi_target, row_minus.hi)
    if branch == "generic":
        # the cycling structure keeps only the inner impulse pair per regime;
        # outer thresholds of a two-sided seed never bind at its fixed point
        if row_plus is not None and row_plus.lo is not None and math.isfinite(row_plus.lo):
            row_plus = ProducerRow(row_plus.lo, row_plus.lo_target, None, math.inf)
        if row_minus is not None and row_minus.hi is not None and math.isfinite(row_minus.hi):
            row_minus = ProducerRow(-math.inf, None, row_minus.hi_target, row_minus.hi)
    if complete or _empty(row_plus) or _empty(row_minus):
        mono = monopoly_two_sided(params)
        if complete:
            row_plus = _complete_row(row_plus, mono.row_plus)
            row_minus = _complete_row(row_minus, mono.row_minus)
        else:
            if _empty(row_plus):
                row_plus = mono.row_plus
            if _empty(row_minus):
                row_minus = mono.row_minus
    return StrategyPair(row_plus, row_minus, None, None)


def tatonnement(
    params: ModelParams,
    init: StrategyPair | None = None,
    mode: str = "async",
    branch: str = "generic",
    max_iter: int = 200,
    tol: float = 1e-9,
) -> EquilibriumResult:
    """Iterate best responses until the threshold sup-norm delta drops below tol.

    Default seed: producer = two-sided monopoly bands, consumer = the
    stand-alone switcher (falling back to a habitat-centered guess when that
    benchmark has no solution).  Detects period-2 cycles and reports both
    cycle points instead of looping forever.
    """
    if mode not in ("sync", "async"):
        raise ValueError(f"mode must be 'sync' or 'async', got {mode!r}")
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")

    mono = monopoly_two_sided(params)
    if init is None:
        _, profit_c = build_profits(params)
        try:
            alone = consumer_alone(params)
            y0 = (alone.y_low, alone.y_high)
        except SolverFailure:
            y0 = (profit_c.xbar - 0.125 * profit_c.span,
                  profit_c.xbar + 0.125 * profit_c.span)
        init = StrategyPair(mono.row_plus, mono.row_minus, y0[0], y0[1])

    cur = init
    pbr: ProducerBR | None = None
    cbr: ConsumerBR | None = None
    history: list[dict] = []
    converged = False
    diagnostics: dict = {}
    it = 0

    for it in range(1, max_iter + 1):
        pview = _producer_view(branch, cur.y_low, cur.y_high)
        pbr = producer_best_response(pview, params, branch=branch)
        if mode == "async":
            rows = (pbr.row_plus, pbr.row_minus)
        else:  # sync: the consumer responds to the previous iterate's rows
            rows = (cur.producer_plus, cur.producer_minus)
        try:
            cview = _consumer_view(rows[0], rows[1], params, branch)
            cbr = consumer_best_response(cview, params, branch=branch)
        except SolverFailure:
            # pinned structure infeasible here: select freely on a completed view
            cview = _consumer_view(rows[0], rows[1], params, branch=None, complete=True)
            cbr = consumer_best_response(cview, params, branch=None)
        new = _assemble(pbr, cbr, branch)
        delta = new.sup_delta(cur)
        history.append({"iteration": it, "delta": delta, "pair": new.to_dict()})
        if delta < tol:
            cur = new
            converged = True
            break
        if len(history) >= 3 and math.isfinite(delta):
            back2 = StrategyPair.from_dict(history[-3]["pair"])
            if new.sup_delta(back2) < tol and delta > 10 * tol:
                diagnostics["cycle"] = {
                    "point_a": history[-2]["pair"],
                    "point_b": history[-1]["pair"],
                }
                cur = new
                break
        cur = new

    assert pbr is not None and cbr is not None
    cur = _assemble(pbr, cbr, branch, final=True)
    tag = classify(cur)
    return EquilibriumResult(
        strategies=cur,
        type_tag=tag if converged else "unconverged",
        producer_br=pbr,
        consumer_br=cbr,
        iterations=it,
        converged=converged,
        branch=branch,
        mode=mode,
        convergence_history=history,
        diagnostics=diagnostics,
    )


def classify(pair: StrategyPair, tol: float = 1e-7) -> str:
    """Threshold-pattern classification of a strategy pair.

    Preemption is the coincidence of a producer threshold with the consumer
    switching level (checked first); both switch levels finite is the
    cycling type; exactly one finite is transitory.
    """
    y_low, y_high = pair.consumer
    low_fin = y_low is not None and math.isfinite(y_low)
    high_fin = y_high is not None and math.isfinite(y_high)
    hi_p = pair.producer_plus.hi
    lo_m = pair.producer_minus.lo
    if high_fin and hi_p is not None and math.isfinite(hi_p) and abs(hi_p - y_high) <= tol:
        return "III_plus"
    if low_fin and lo_m is not None and math.isfinite(lo_m) and abs(lo_m - y_low) <= tol:
        return "III_minus"
    if low_fin and high_fin:
        lo_p = pair.producer_plus.lo
        hi_m = pair.producer_minus.hi
        bands_ok = (
            lo_p is not None and math.isfinite(lo_p) and lo_p <= y_high
            and hi_m is not None and math.isfinite(hi_m) and y_low <= hi_m
        )
        return "I" if bands_ok else "unclassified"
    if high_fin:
        return "II_to_minus"
    if low_fin:
        return "II_to_plus"
    return "unclassified"


# ------------------------------------------------------------- verification


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tol: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name}: {self.value:.3e} (tol {self.tol:.1e})"


def verify(eqm: EquilibriumResult, params: ModelParams, grid_n: int = 401) -> list[Check]:
    """Re-evaluate every pasting residual, ordering, SOC and obstacle margin.

    Pure report: returns the full ledger; callers decide what a failure
    means (the CLI maps any failed check to exit code 3).
    """
    checks: list[Check] = []
    profit_p, profit_c = build_profits(params)
    pair = eqm.strategies

    for label, vp, profit in (
        ("producer", eqm.producer_values, profit_p),
        ("consumer", eqm.consumer_values, profit_c),
    ):
        for regime in ("plus", "minus"):
            pv = vp.plus if regime == "plus" else vp.minus
            if pv is None:
                continue
            checks.extend(_ode_checks(f"{label}.{regime}", pv, profit, params))
            checks.extend(_knot_checks(f"{label}.{regime}", pv))

    checks.extend(_producer_foc_checks(eqm, params))
    checks.extend(_ordering_checks(pair))
    checks.extend(_soc_checks(eqm))
    checks.extend(_obstacle_checks(eqm, params, grid_n))
    checks.extend(_strategy_knot_checks(eqm))
    checks.append(Check("tatonnement.converged", eqm.converged,
                        0.0 if eqm.converged else 1.0, 0.5))
    return checks


def _strategy_knot_checks(eqm) -> list[Check]:
    """Every active threshold must be a pasting knot of the matching value.

    Catches strategies edited after the solve (stale value functions).
    """
    out = []
    pair = eqm.strategies

    def has_knot(pv, x):
        return pv is not None and any(
            math.isclose(k, x, rel_tol=0, abs_tol=1e-7) for k in pv.knots
        )

    for regime, row in (("plus", pair.producer_plus), ("minus", pair.producer_minus)):
        pv = eqm.producer_values.plus if regime == "plus" else eqm.producer_values.minus
        for side, v in (("lo", row.lo), ("hi", row.hi)):
            if v is None or not math.isfinite(v):
                continue
            out.append(Check(
                f"strategy.knot_consistency.producer_{regime}_{side}",
                has_knot(pv, v), 0.0 if has_knot(pv, v) else 1.0, 0.5,
            ))
    wv = eqm.consumer_values
    for side, v, pv in (("y_high", pair.y_high, wv.plus), ("y_low", pair.y_low, wv.minus)):
        if v is None or not math.isfinite(v):
            continue
        out.append(Check(
            f"strategy.knot_consistency.consumer_{side}",
            has_knot(pv, v), 0.0 if has_knot(pv, v) else 1.0, 0.5,
        ))
    return out


def _sample_interval(lo: float, hi: float, fallback_width: float, n: int = 9):
    if not math.isfinite(lo):
        lo = hi - fallback_width
    if not math.isfinite(hi):
        hi = lo + fallback_width
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    return np.linspace(lo + pad, hi - pad, n)


def _ode_checks(label, pv, profit, params) -> list[Check]:
    out = []
    scale = max(1.0, abs(profit.peak))
    for i, piece in enumerate(pv.pieces):
        if piece.kind() != "analytic":
            continue
        xs = _sample_interval(piece.lo, piece.hi, profit.span)
        worst = max(abs(pv.ode_residual(float(x), profit, params)) for x in xs)
        out.append(Check(f"{label}.ode_residual.piece{i}", worst < 1e-8 * scale,
                         worst, 1e-8 * scale))
    return out


def _knot_checks(label, pv) -> list[Check]:
    out = []
    for x, smooth in sorted(pv.knots.items()):
        left = right = None
        for p in pv.pieces:
            if math.isclose(p.hi, x, rel_tol=0, abs_tol=1e-12):
                left = p
            if math.isclose(p.lo, x, rel_tol=0, abs_tol=1e-12):
                right = p
        if left is None or right is None:
            continue
        lv, rv = left.value(x), right.value(x)
        tol0 = 1e-7 * max(1.0, abs(lv), abs(rv))
        out.append(Check(f"{label}.C0@{x:.6g}", abs(lv - rv) < tol0, abs(lv - rv), tol0))
        if smooth:
            ld, rd = left.slope(x), right.slope(x)
            tol1 = 1e-7 * max(1.0, abs(ld), abs(rd))
            out.append(Check(f"{label}.C1@{x:.6g}", abs(ld - rd) < tol1, abs(ld - rd), tol1))
    return out


def _producer_foc_checks(eqm, params) -> list[Check]:
    out = []
    k1 = params.kappa1
    for regime, row in (("plus", eqm.strategies.producer_plus),
                        ("minus", eqm.strategies.producer_minus)):
        pv = eqm.producer_values.plus if regime == "plus" else eqm.producer_values.minus
        if pv is None or row is None:
            continue
        if row.lo is not None and math.isfinite(row.lo):
            r = pv.deriv(row.lo_target) - k1
            out.append(Check(f"producer.{regime}.foc_lo_target", abs(r) < 1e-8, abs(r), 1e-8))
        if row.hi is not None and math.isfinite(row.hi):
            r = pv.deriv(row.hi_target) + k1
            out.append(Check(f"producer.{regime}.foc_hi_target", abs(r) < 1e-8, abs(r), 1e-8))
    return out


def _ordering_checks(pair: StrategyPair) -> list[Check]:
    out = []
    y_low, y_high = pair.consumer

    def fin(v):
        return v is not None and math.isfinite(v)

    if fin(y_low) and fin(y_high):
        out.append(Check("ordering.y_low<y_high", y_low < y_high, y_high - y_low, 0.0))
    lo_p, hi_m = pair.producer_plus.lo, pair.producer_minus.hi
    if fin(y_high) and fin(lo_p):
        out.append(Check("ordering.plus_band_nonempty", lo_p < y_high, y_high - lo_p, 0.0))
    if fin(y_low) and fin(hi_m):
        out.append(Check("ordering.minus_band_nonempty", y_low < hi_m, hi_m - y_low, 0.0))
    # outer thresholds must not pre-empt the switch levels (unless pinned equal)
    hi_p, lo_m = pair.producer_plus.hi, pair.producer_minus.lo
    if fin(y_high) and fin(hi_p):
        out.append(Check("ordering.y_high<=hi_plus", y_high <= hi_p + 1e-9, hi_p - y_high, 0.0))
    if fin(y_low) and fin(lo_m):
        out.append(Check("ordering.lo_minus<=y_low", lo_m <= y_low + 1e-9, y_low - lo_m, 0.0))
    return out


def _soc_checks(eqm) -> list[Check]:
    out = []
    for name, value in eqm.producer_br.soc.items():
        out.append(Check(f"producer.soc.{name}", value < 0.0, value, 0.0))
    return out


def _continuation_interval(pair: StrategyPair, regime: str, profit) -> tuple[float, float]:
    """Price interval on which regime `regime` can actually persist.

    Below/above it an action fires immediately, so the variational
    inequalities only constrain values inside it.
    """
    row = pair.producer_plus if regime == "plus" else pair.producer_minus

    def fin(v, default):
        return v if v is not None and math.isfinite(v) else default

    win_lo = profit.x1 - 0.5 * profit.span
    win_hi = profit.x2 + 0.5 * profit.span
    if regime == "plus":
        lo = fin(row.lo if row else None, win_lo)
        hi = min(fin(row.hi if row else None, win_hi),
                 fin(pair.y_high, win_hi))
    else:
        lo = max(fin(row.lo if row else None, win_lo),
                 fin(pair.y_low, win_lo))
        hi = fin(row.hi if row else None, win_hi)
    return lo, hi


def _obstacle_checks(eqm, params, grid_n) -> list[Check]:
    """Variational-inequality obstacle side, on a grid.

    Consumer: staying must dominate switching (w >= w_other - h) on the
    continuation interval.  Producer: no impulse from a continuation point
    to anywhere may beat the current value net of its cost.
    """
    out = []
    profit_p, profit_c = build_profits(params)
    pair = eqm.strategies

    wv = eqm.consumer_values
    if wv.plus is not None and wv.minus is not None:
        for regime, other, h in (("plus", "minus", params.h_plus),
                                 ("minus", "plus", params.h_minus)):
            lo, hi = _continuation_interval(pair, regime, profit_c)
            if not lo < hi:
                continue
            xs = np.linspace(lo, hi, grid_n)
            own = wv.get(regime).eval_many(xs)
            obs = wv.get(other).eval_many(xs) - h
            margin = float(np.min(own - obs))
            scale = max(1.0, float(np.max(np.abs(own))))
            out.append(Check(f"consumer.{regime}.switch_obstacle",
                             margin > -1e-7 * scale, margin, 1e-7 * scale))

    vv = eqm.producer_values
    k0, k1 = params.kappa0, params.kappa1
    for regime in ("plus", "minus"):
        pv = vv.plus if regime == "plus" else vv.minus
        if pv is None:
            continue
        lo, hi = _continuation_interval(pair, regime, profit_p)
        if not lo < hi:
            continue
        xs = np.linspace(lo, hi, grid_n)
        zs = np.linspace(profit_p.x1 - 0.5 * profit_p.span,
                         profit_p.x2 + 0.5 * profit_p.span, grid_n)
        vals_x = pv.eval_many(xs)
        vals_z = pv.eval_many(zs)
        gain = vals_z[None, :] - k0 - k1 * np.abs(xs[:, None] - zs[None, :])
        margin = float(np.min(vals_x - gain.max(axis=1)))
        scale = max(1.0, float(np.max(np.abs(vals_x))))
        out.append(Check(f"producer.{regime}.impulse_obstacle",
                         margin > -1e-7 * scale, margin, 1e-7 * scale))
    return out
