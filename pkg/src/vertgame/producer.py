"""Producer best responses to a fixed consumer switching strategy.

The producer controls the price with impulses: when the price exits his
no-intervention band he pays kappa0 + kappa1*|xi| to jump it back to a
target level.  Value functions paste smoothly (C1) across his own impulse
thresholds and targets; across the consumer's switching thresholds they
are continuous only, since her action costs him nothing but changes the
drift he faces.

With kappa1 = 0 the two impulse targets of a two-sided band coincide at
the interior maximizer of the value function, so that case is solved with
the merged unknown rather than the near-singular general system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, build_profits, regime_fundamentals
from .numerics import SolverFailure, grid_seeds, multistart_newton, solve_linear
from .pasting import Sheet
from .values import (
    DelegatePiece,
    PeggedPiece,
    PiecewiseValue,
    ProducerRow,
    RegimePair,
    StrategyPair,
)

__all__ = [
    "ProducerBR",
    "impulse_cost",
    "monopoly_two_sided",
    "nonpreemptive_br",
    "preemptive_br",
    "producer_best_response",
]

INF = math.inf


def impulse_cost(xi: float, params: ModelParams) -> float:
    """Cost of an impulse of size xi (USD); the fixed part is always paid."""
    return params.kappa0 + params.kappa1 * abs(xi)


@dataclass
class ProducerBR:
    kind: str   # monopoly | non_preemptive | preemptive_plus | preemptive_minus
    row_plus: ProducerRow | None
    row_minus: ProducerRow | None
    values: RegimePair
    residual: float = 0.0
    soc: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def payoff_at(self, x: float, regime: str) -> float:
        return self.values.get(regime).eval(x)

    @property
    def intervenes(self) -> bool:
        rows = [r for r in (self.row_plus, self.row_minus) if r is not None]
        return any(
            v is not None and math.isfinite(v)
            for r in rows for v in (r.lo, r.hi)
        )


class _Ctx:
    def __init__(self, params: ModelParams):
        self.params = params
        self.profit, _ = build_profits(params)
        self.fund = {
            "plus": regime_fundamentals(self.profit, "plus", params),
            "minus": regime_fundamentals(self.profit, "minus", params),
        }

    @property
    def span(self) -> float:
        return self.profit.span


def _boxes(ctx: _Ctx):
    """Generous static search boxes anchored at the profit habitat."""
    x1, x2, span = ctx.profit.x1, ctx.profit.x2, ctx.span
    return x1 - 2.0 * span, x2 + 2.0 * span


# ---------------------------------------------------------------- monopoly


def monopoly_two_sided(params: ModelParams, regime: str | None = None) -> ProducerBR:
    """Impulse bands of a producer facing a never-switching consumer.

    Solves each regime independently.  If intervention never pays (huge
    kappa0) the regime gets an unbounded band marker (-inf, +inf) and the
    bounded particular solution as its value.
    """
    ctx = _Ctx(params)
    regimes = [regime] if regime else ["plus", "minus"]
    rows: dict[str, ProducerRow] = {}
    pieces: dict[str, PiecewiseValue] = {}
    soc: dict[str, float] = {}
    residual = 0.0
    for reg in regimes:
        out = _solve_monopoly_regime(ctx, reg)
        if out is None:
            rows[reg] = ProducerRow(-INF, None, None, INF)
            sheet = Sheet(ctx.fund[reg], ref1=0.0, ref2=0.0)
            pieces[reg] = PiecewiseValue(
                reg, [sheet.piece(-INF, INF, np.zeros(2))],
                provenance="producer.monopoly.never_intervene",
            )
            continue
        row, pv, soc_vals, res = out
        rows[reg], pieces[reg] = row, pv
        for name, v in soc_vals.items():
            soc[f"{reg}.{name}"] = v
        residual = max(residual, res)
    pair = RegimePair()
    pair.plus = pieces.get("plus")
    pair.minus = pieces.get("minus")
    return ProducerBR(
        "monopoly",
        rows.get("plus"),
        rows.get("minus"),
        pair,
        residual=residual,
        soc=soc,
    )


def _solve_monopoly_regime(ctx: _Ctx, regime: str):
    params = ctx.params
    k0, k1 = params.kappa0, params.kappa1
    x1, x2, xbar, span = ctx.profit.x1, ctx.profit.x2, ctx.profit.xbar, ctx.span
    box_lo, box_hi = _boxes(ctx)

    if k1 == 0.0:

        def system(lo, xs, hi):
            sheet = Sheet(ctx.fund[regime], ref1=hi, ref2=lo)
            a = np.array([sheet.phi(lo) - sheet.phi(xs),
                          sheet.phi(hi) - sheet.phi(xs)])
            b = np.array([sheet.qv(xs) - sheet.qv(lo) - k0,
                          sheet.qv(xs) - sheet.qv(hi) - k0])
            return sheet, solve_linear(a, b)

        def residuals(v):
            lo, xs, hi = v
            if xs - lo < 1e-9 * span or hi - xs < 1e-9 * span:
                return np.full(3, 1e9)
            sheet, c = system(lo, xs, hi)
            return np.array([sheet.dval(xs, c), sheet.dval(lo, c), sheet.dval(hi, c)])

        seeds = [
            np.array([x1, xbar, x2]),
            np.array([x1 - 0.1 * span, xbar, x2 + 0.1 * span]),
            np.array([x1 + 0.2 * span, xbar, x2 - 0.2 * span]),
        ]
        sol, norm, ok = multistart_newton(
            residuals, seeds,
            lo=np.array([box_lo, box_lo, box_lo]),
            hi=np.array([box_hi, box_hi, box_hi]),
        )
        if not ok:
            _check_no_intervention(ctx, regime)
            return None
        lo, xs, hi = map(float, sol)
        lot = hit = xs
    else:

        def system(lo, lot, hit, hi):
            sheet = Sheet(ctx.fund[regime], ref1=hi, ref2=lo)
            a = np.array([sheet.phi(lo) - sheet.phi(lot),
                          sheet.phi(hi) - sheet.phi(hit)])
            b = np.array([sheet.qv(lot) - sheet.qv(lo) - k0 - k1 * (lot - lo),
                          sheet.qv(hit) - sheet.qv(hi) - k0 - k1 * (hi - hit)])
            return sheet, solve_linear(a, b)

        def residuals(v):
            lo, lot, hit, hi = v
            if lot - lo < 1e-9 * span or hi - hit < 1e-9 * span or hit < lot:
                return np.full(4, 1e9)
            sheet, c = system(lo, lot, hit, hi)
            return np.array([
                sheet.dval(lo, c) - k1,
                sheet.dval(lot, c) - k1,
                sheet.dval(hit, c) + k1,
                sheet.dval(hi, c) + k1,
            ])

        seeds = [
            np.array([x1, xbar - 0.1 * span, xbar + 0.1 * span, x2]),
            np.array([x1, xbar - 0.25 * span, xbar + 0.25 * span, x2]),
        ]
        sol, norm, ok = multistart_newton(
            residuals, seeds,
            lo=np.full(4, box_lo), hi=np.full(4, box_hi),
        )
        if not ok:
            _check_no_intervention(ctx, regime)
            return None
        lo, lot, hit, hi = map(float, sol)

    sheet, c = (system(lo, xs, hi) if k1 == 0.0 else system(lo, lot, hit, hi))
    soc_vals = {
        "lo_target": sheet.d2val(lot, c),
        "hi_target": sheet.d2val(hit, c),
    }
    if any(v >= 0 for v in soc_vals.values()):
        raise SolverFailure(
            f"monopoly {regime}: second-order condition failed at targets {soc_vals}"
        )
    row = ProducerRow(lo, lot, hit, hi)
    pv = PiecewiseValue(
        regime,
        [
            PeggedPiece(-INF, lo, anchor=lot, anchor_value=sheet.val(lot, c),
                        base_cost=k0, slope_cost=k1),
            sheet.piece(lo, hi, c),
            PeggedPiece(hi, INF, anchor=hit, anchor_value=sheet.val(hit, c),
                        base_cost=k0, slope_cost=k1),
        ],
        knots={lo: True, hi: True},
        provenance="producer.monopoly",
    )
    return row, pv, soc_vals, norm


def _check_no_intervention(ctx: _Ctx, regime: str) -> None:
    """A failed band solve is only legitimate if waiting dominates impulsing."""
    params = ctx.params
    sheet = Sheet(ctx.fund[regime], ref1=0.0, ref2=0.0)
    xs = np.linspace(ctx.profit.x1 - ctx.span, ctx.profit.x2 + ctx.span, 241)
    vals = np.array([sheet.qv(x) for x in xs])
    for i, x in enumerate(xs):
        gain = vals - params.kappa0 - params.kappa1 * np.abs(x - xs) - vals[i]
        if np.max(gain) > 1e-9:
            raise SolverFailure(
                f"monopoly {regime}: no band found although impulsing pays "
                f"(gain {np.max(gain):.3g} at x={x:.4g})"
            )


# ----------------------------------------------------------- non-preemptive


def nonpreemptive_br(c_c, params: ModelParams) -> ProducerBR | None:
    """Best response that lets the consumer's switches stand.

    `c_c` is the (y_low, y_high) pair; infinite entries mean the consumer
    never switches on that side, and the affected regime degenerates to a
    two-sided monopoly band.  Returns None when no admissible solution
    exists (caller should then consider preemption).
    """
    ctx = _Ctx(params)
    y_low, y_high = c_c
    low_active = y_low is not None and math.isfinite(y_low)
    high_active = y_high is not None and math.isfinite(y_high)
    if not low_active and not high_active:
        return monopoly_two_sided(params)
    if low_active and high_active:
        return _nonpre_coupled(ctx, float(y_low), float(y_high))
    if high_active:
        return _nonpre_transitory(ctx, "minus", float(y_high))
    return _nonpre_transitory(ctx, "plus", float(y_low))


def _nonpre_coupled(ctx: _Ctx, y_low: float, y_high: float) -> ProducerBR | None:
    params = ctx.params
    k0, k1 = params.kappa0, params.kappa1
    span = ctx.span
    box_lo, box_hi = _boxes(ctx)

    def system(xlp, xltp, xhtm, xhm):
        plus = Sheet(ctx.fund["plus"], ref1=y_high, ref2=xlp)
        minus = Sheet(ctx.fund["minus"], ref1=xhm, ref2=min(y_low, xhm - 1e-6 * span))
        a = np.zeros((4, 4))
        b = np.zeros(4)
        # value unchanged by the switch at y_low: v+(y_low) = v-(y_low)
        if y_low > xlp:
            a[0, :2] = plus.phi(y_low)
            q_plus, k_move = plus.qv(y_low), 0.0
        else:  # her switch lands in his impulse region; v+ read through the peg
            a[0, :2] = plus.phi(xltp)
            q_plus, k_move = plus.qv(xltp), k0 + k1 * (xltp - y_low)
        a[0, 2:] = -minus.phi(y_low)
        b[0] = minus.qv(y_low) - q_plus + k_move
        # impulse continuity at x_l^+
        a[1, :2] = plus.phi(xlp) - plus.phi(xltp)
        b[1] = plus.qv(xltp) - plus.qv(xlp) - k0 - k1 * (xltp - xlp)
        # value unchanged by the switch at y_high
        if y_high < xhm:
            a[2, 2:] = minus.phi(y_high)
            q_minus, k_move = minus.qv(y_high), 0.0
        else:
            a[2, 2:] = minus.phi(xhtm)
            q_minus, k_move = minus.qv(xhtm), k0 + k1 * (y_high - xhtm)
        a[2, :2] = -plus.phi(y_high)
        b[2] = plus.qv(y_high) - q_minus + k_move
        # impulse continuity at x_h^-
        a[3, 2:] = minus.phi(xhm) - minus.phi(xhtm)
        b[3] = minus.qv(xhtm) - minus.qv(xhm) - k0 - k1 * (xhm - xhtm)
        c = solve_linear(a, b)
        return plus, minus, c[:2], c[2:]

    def residuals(v):
        xlp, xltp, xhtm, xhm = v
        if xltp - xlp < 1e-9 * span or xhm - xhtm < 1e-9 * span:
            return np.full(4, 1e9)
        if xlp >= y_high - 1e-9 or xhm <= y_low + 1e-9:
            return np.full(4, 1e9)
        plus, minus, cp, cm = system(*v)
        return np.array([
            plus.dval(xlp, cp) - k1,
            plus.dval(xltp, cp) - k1,
            minus.dval(xhtm, cm) + k1,
            minus.dval(xhm, cm) + k1,
        ])

    mono = monopoly_two_sided(params)
    seeds = []
    if mono.row_plus is not None and mono.row_plus.two_sided and mono.row_minus.two_sided:
        base = np.array([
            mono.row_plus.lo, mono.row_plus.lo_target,
            mono.row_minus.hi_target, mono.row_minus.hi,
        ])
        seeds.append(base)
        # the upper impulse threshold may sit on either side of y_high
        # (her switch can land inside his impulse region); seed both branches
        for shift in (-0.03, 0.03):
            alt = base.copy()
            alt[3] = y_high + shift * span
            if alt[3] > alt[2] + 1e-6 * span:
                seeds.append(alt)
    x1, x2, xbar = ctx.profit.x1, ctx.profit.x2, ctx.profit.xbar
    seeds.append(np.array([x1, xbar - 0.1 * span, xbar + 0.1 * span, x2]))
    sol, norm, ok = multistart_newton(
        residuals, seeds,
        lo=np.array([box_lo, box_lo, box_lo, max(y_low, box_lo) + 1e-6 * span]),
        hi=np.array([min(y_high, box_hi) - 1e-6 * span, box_hi, box_hi, box_hi]),
    )
    if not ok:
        return None
    xlp, xltp, xhtm, xhm = map(float, sol)
    plus, minus, cp, cm = system(xlp, xltp, xhtm, xhm)
    soc = {
        "plus.lo_target": plus.d2val(xltp, cp),
        "minus.hi_target": minus.d2val(xhtm, cm),
    }
    if any(v >= 0 for v in soc.values()):
        return None

    pair = RegimePair()
    pair.plus = PiecewiseValue(
        "plus",
        [
            PeggedPiece(-INF, xlp, anchor=xltp, anchor_value=plus.val(xltp, cp),
                        base_cost=k0, slope_cost=k1),
            plus.piece(xlp, y_high, cp),
            DelegatePiece(y_high, INF, pair, "minus", cost=0.0),
        ],
        knots={xlp: True, y_high: False},
        provenance="producer.non_preemptive",
    )
    pair.minus = PiecewiseValue(
        "minus",
        [
            DelegatePiece(-INF, y_low, pair, "plus", cost=0.0),
            minus.piece(y_low, xhm, cm),
            PeggedPiece(xhm, INF, anchor=xhtm, anchor_value=minus.val(xhtm, cm),
                        base_cost=k0, slope_cost=k1),
        ],
        knots={y_low: False, xhm: True},
        provenance="producer.non_preemptive",
    )
    strict = (xlp < y_low) and (y_high < xhm)
    return ProducerBR(
        "non_preemptive",
        ProducerRow(xlp, xltp, None, INF),
        ProducerRow(-INF, None, xhtm, xhm),
        pair,
        residual=norm,
        soc=soc,
        diagnostics={"strict_ordering": strict, "structure": "double_switch"},
    )


def _nonpre_transitory(ctx: _Ctx, absorbing: str, y: float) -> ProducerBR | None:
    """One consumer switch into `absorbing`; there the producer is a monopolist.

    The transient regime gets a one-sided band whose consumer-side boundary
    condition reads the absorbing regime's (fixed) monopoly value.
    """
    params = ctx.params
    k0, k1 = params.kappa0, params.kappa1
    span = ctx.span
    box_lo, box_hi = _boxes(ctx)
    mono = monopoly_two_sided(params, regime=absorbing)
    row_abs = mono.row_plus if absorbing == "plus" else mono.row_minus
    v_abs = mono.values.get(absorbing)
    if not row_abs.two_sided:
        return None
    transient = "minus" if absorbing == "plus" else "plus"

    if absorbing == "minus":
        # transient expansion band [x_l^+, y); lower impulse only
        def system(lo, lot):
            sheet = Sheet(ctx.fund[transient], ref1=y, ref2=lo)
            a = np.array([sheet.phi(y),
                          sheet.phi(lo) - sheet.phi(lot)])
            b = np.array([v_abs.eval(y) - sheet.qv(y),
                          sheet.qv(lot) - sheet.qv(lo) - k0 - k1 * (lot - lo)])
            return sheet, solve_linear(a, b)

        def residuals(v):
            lo, lot = v
            if lot - lo < 1e-9 * span or lo >= y - 1e-9:
                return np.full(2, 1e9)
            sheet, c = system(lo, lot)
            return np.array([sheet.dval(lo, c) - k1, sheet.dval(lot, c) - k1])

        mono_t = monopoly_two_sided(params, regime=transient)
        row_t = mono_t.row_plus if transient == "plus" else mono_t.row_minus
        seeds = []
        if row_t.two_sided:
            seeds.append(np.array([row_t.lo, row_t.lo_target]))
        seeds.append(np.array([ctx.profit.x1, ctx.profit.xbar]))
        sol, norm, ok = multistart_newton(
            residuals, seeds,
            lo=np.array([box_lo, box_lo]),
            hi=np.array([y - 1e-6 * span, y - 1e-6 * span]),
        )
        if not ok:
            return None
        lo, lot = map(float, sol)
        sheet, c = system(lo, lot)
        soc = {f"{transient}.lo_target": sheet.d2val(lot, c)}
        if soc[f"{transient}.lo_target"] >= 0:
            return None
        pair = RegimePair()
        pair.minus = v_abs
        pair.plus = PiecewiseValue(
            "plus",
            [
                PeggedPiece(-INF, lo, anchor=lot, anchor_value=sheet.val(lot, c),
                            base_cost=k0, slope_cost=k1),
                sheet.piece(lo, y, c),
                DelegatePiece(y, INF, pair, "minus", cost=0.0),
            ],
            knots={lo: True, y: False},
            provenance="producer.non_preemptive.transitory",
        )
        return ProducerBR(
            "non_preemptive",
            ProducerRow(lo, lot, None, INF),
            row_abs,
            pair,
            residual=norm,
            soc=soc,
            diagnostics={"structure": "transitory_to_minus"},
        )

    # absorbing == "plus": transient contraction band (y, x_h^-]
    def system(hit, hi):
        sheet = Sheet(ctx.fund[transient], ref1=hi, ref2=y)
        a = np.array([sheet.phi(y),
                      sheet.phi(hi) - sheet.phi(hit)])
        b = np.array([v_abs.eval(y) - sheet.qv(y),
                      sheet.qv(hit) - sheet.qv(hi) - k0 - k1 * (hi - hit)])
        return sheet, solve_linear(a, b)

    def residuals(v):
        hit, hi = v
        if hi - hit < 1e-9 * span or hi <= y + 1e-9:
            return np.full(2, 1e9)
        sheet, c = system(hit, hi)
        return np.array([sheet.dval(hit, c) + k1, sheet.dval(hi, c) + k1])

    mono_t = monopoly_two_sided(params, regime=transient)
    row_t = mono_t.row_plus if transient == "plus" else mono_t.row_minus
    seeds = []
    if row_t.two_sided:
        seeds.append(np.array([row_t.hi_target, row_t.hi]))
    seeds.append(np.array([ctx.profit.xbar, ctx.profit.x2]))
    sol, norm, ok = multistart_newton(
        residuals, seeds,
        lo=np.array([y + 1e-6 * span, y + 1e-6 * span]),
        hi=np.array([box_hi, box_hi]),
    )
    if not ok:
        return None
    hit, hi = map(float, sol)
    sheet, c = system(hit, hi)
    soc = {f"{transient}.hi_target": sheet.d2val(hit, c)}
    if soc[f"{transient}.hi_target"] >= 0:
        return None
    pair = RegimePair()
    pair.plus = v_abs
    pair.minus = PiecewiseValue(
        "minus",
        [
            DelegatePiece(-INF, y, pair, "plus", cost=0.0),
            sheet.piece(y, hi, c),
            PeggedPiece(hi, INF, anchor=hit, anchor_value=sheet.val(hit, c),
                        base_cost=k0, slope_cost=k1),
        ],
        knots={y: False, hi: True},
        provenance="producer.non_preemptive.transitory",
    )
    return ProducerBR(
        "non_preemptive",
        row_abs,
        ProducerRow(-INF, None, hit, hi),
        pair,
        residual=norm,
        soc=soc,
        diagnostics={"structure": "transitory_to_plus"},
    )


# --------------------------------------------------------------- preemptive


def preemptive_br(c_c, params: ModelParams, regime: str = "plus") -> ProducerBR | None:
    """Impulse exactly at the consumer's switching level to block the switch.

    For regime='plus' the upper threshold is pinned at y_high (the producer,
    having priority, acts first there and the drift never turns negative);
    the mirrored case pins the lower threshold at y_low.
    """
    ctx = _Ctx(params)
    y_low, y_high = c_c
    if regime == "plus":
        if y_high is None or not math.isfinite(y_high):
            return None
        return _preemptive(ctx, "plus", float(y_high))
    if regime == "minus":
        if y_low is None or not math.isfinite(y_low):
            return None
        return _preemptive(ctx, "minus", float(y_low))
    raise ValueError(f"unknown regime {regime!r}")


def _preemptive(ctx: _Ctx, regime: str, pin: float) -> ProducerBR | None:
    params = ctx.params
    k0, k1 = params.kappa0, params.kappa1
    span = ctx.span
    box_lo, box_hi = _boxes(ctx)
    pin_is_hi = regime == "plus"

    if k1 == 0.0:

        def system(free, xs):
            lo, hi = (free, pin) if pin_is_hi else (pin, free)
            sheet = Sheet(ctx.fund[regime], ref1=hi, ref2=lo)
            a = np.array([sheet.phi(lo) - sheet.phi(xs),
                          sheet.phi(hi) - sheet.phi(xs)])
            b = np.array([sheet.qv(xs) - sheet.qv(lo) - k0,
                          sheet.qv(xs) - sheet.qv(hi) - k0])
            return sheet, solve_linear(a, b)

        def residuals(v):
            free, xs = v
            lo, hi = (free, pin) if pin_is_hi else (pin, free)
            if not lo + 1e-9 * span < xs < hi - 1e-9 * span:
                return np.full(2, 1e9)
            sheet, c = system(free, xs)
            return np.array([sheet.dval(free, c), sheet.dval(xs, c)])

        if pin_is_hi:
            seeds = [np.array([ctx.profit.x1, 0.5 * (ctx.profit.x1 + pin)]),
                     np.array([pin - span, pin - 0.4 * span])]
            lo_box = np.array([box_lo, box_lo])
            hi_box = np.array([pin - 2e-6 * span, pin - 1e-6 * span])
        else:
            seeds = [np.array([ctx.profit.x2, 0.5 * (pin + ctx.profit.x2)]),
                     np.array([pin + span, pin + 0.4 * span])]
            lo_box = np.array([pin + 2e-6 * span, pin + 1e-6 * span])
            hi_box = np.array([box_hi, box_hi])
        sol, norm, ok = multistart_newton(residuals, seeds, lo=lo_box, hi=hi_box)
        if not ok:
            return None
        free, xs = map(float, sol)
        lot = hit = xs
    else:

        def system(free, lot, hit):
            lo, hi = (free, pin) if pin_is_hi else (pin, free)
            sheet = Sheet(ctx.fund[regime], ref1=hi, ref2=lo)
            a = np.array([sheet.phi(lo) - sheet.phi(lot),
                          sheet.phi(hi) - sheet.phi(hit)])
            b = np.array([sheet.qv(lot) - sheet.qv(lo) - k0 - k1 * (lot - lo),
                          sheet.qv(hit) - sheet.qv(hi) - k0 - k1 * (hi - hit)])
            return sheet, solve_linear(a, b)

        def residuals(v):
            free, lot, hit = v
            lo, hi = (free, pin) if pin_is_hi else (pin, free)
            if lot - lo < 1e-9 * span or hi - hit < 1e-9 * span or hit < lot:
                return np.full(3, 1e9)
            sheet, c = system(free, lot, hit)
            free_res = (sheet.dval(lo, c) - k1) if pin_is_hi else (sheet.dval(hi, c) + k1)
            return np.array([free_res,
                             sheet.dval(lot, c) - k1,
                             sheet.dval(hit, c) + k1])

        if pin_is_hi:
            seeds = [np.array([pin - span, pin - 0.6 * span, pin - 0.3 * span])]
            lo_box = np.full(3, box_lo)
            hi_box = np.full(3, pin - 1e-6 * span)
        else:
            seeds = [np.array([pin + span, pin + 0.3 * span, pin + 0.6 * span])]
            lo_box = np.full(3, pin + 1e-6 * span)
            hi_box = np.full(3, box_hi)
        sol, norm, ok = multistart_newton(residuals, seeds, lo=lo_box, hi=hi_box)
        if not ok:
            return None
        free, lot, hit = map(float, sol)

    lo, hi = (free, pin) if pin_is_hi else (pin, free)
    sheet, c = (system(free, lot) if k1 == 0.0 else system(free, lot, hit))
    soc = {
        f"{regime}.lo_target": sheet.d2val(lot, c),
        f"{regime}.hi_target": sheet.d2val(hit, c),
    }
    if any(v >= 0 for v in soc.values()):
        return None
    pair = RegimePair()
    pv = PiecewiseValue(
        regime,
        [
            PeggedPiece(-INF, lo, anchor=lot, anchor_value=sheet.val(lot, c),
                        base_cost=k0, slope_cost=k1),
            sheet.piece(lo, hi, c),
            PeggedPiece(hi, INF, anchor=hit, anchor_value=sheet.val(hit, c),
                        base_cost=k0, slope_cost=k1),
        ],
        knots={lo: pin_is_hi, hi: not pin_is_hi},
        provenance=f"producer.preemptive_{regime}",
    )
    row = ProducerRow(lo, lot, hit, hi)
    if pin_is_hi:
        pair.plus = pv
        return ProducerBR("preemptive_plus", row, None, pair,
                          residual=norm, soc=soc,
                          diagnostics={"pinned": "hi=y_high"})
    pair.minus = pv
    return ProducerBR("preemptive_minus", None, row, pair,
                      residual=norm, soc=soc,
                      diagnostics={"pinned": "lo=y_low"})


# ---------------------------------------------------------------- selection


def producer_best_response(
    c_c,
    params: ModelParams,
    branch: str | None = None,
    grid_n: int = 401,
    reference_x: float | None = None,
) -> ProducerBR:
    """Pick among non-preemptive and preemptive candidates.

    Candidates are compared regime-wise on a price grid; a candidate that
    leaves a regime undefined (pure preemption) is compared on the regime it
    does define.  Crossings are reported in diagnostics rather than hidden.
    """
    ctx = _Ctx(params)
    wanted = _branch_candidates(branch, c_c)
    candidates: list[ProducerBR] = []
    for kind in wanted:
        try:
            if kind == "non_preemptive":
                br = nonpreemptive_br(c_c, params)
            elif kind == "preemptive_plus":
                br = preemptive_br(c_c, params, "plus")
            elif kind == "preemptive_minus":
                br = preemptive_br(c_c, params, "minus")
            else:
                br = _monopoly_candidate(c_c, params)
        except SolverFailure:
            br = None
        if br is not None:
            candidates.append(br)
    if not candidates:
        # neutral fallback: ignore the consumer; the caller sees kind=monopoly
        return monopoly_two_sided(params)
    if len(candidates) == 1:
        return candidates[0]

    ref = ctx.profit.xbar if reference_x is None else reference_x
    pick, comparison = _dominant(candidates, ctx, grid_n, ref)
    pick.diagnostics["candidates"] = [c.kind for c in candidates]
    pick.diagnostics["comparison"] = comparison
    return pick


def _monopoly_candidate(c_c, params: ModelParams) -> ProducerBR | None:
    """The two-sided bands, valid when they lock the consumer out.

    If both monopoly bands sit strictly between her switching levels the
    price never reaches them and the consumer stays passive, so the
    uncoupled solution is a consistent response.
    """
    y_low, y_high = c_c
    mono = monopoly_two_sided(params)
    if not (mono.row_plus.two_sided and mono.row_minus.two_sided):
        return None
    lo_edge = min(mono.row_plus.lo, mono.row_minus.lo)
    hi_edge = max(mono.row_plus.hi, mono.row_minus.hi)
    if y_low is not None and math.isfinite(y_low) and y_low >= lo_edge:
        return None
    if y_high is not None and math.isfinite(y_high) and y_high <= hi_edge:
        return None
    return mono


def _branch_candidates(branch: str | None, c_c) -> list[str]:
    y_low, y_high = c_c
    if branch is None:
        out = ["non_preemptive", "monopoly"]
        if y_high is not None and math.isfinite(y_high):
            out.append("preemptive_plus")
        if y_low is not None and math.isfinite(y_low):
            out.append("preemptive_minus")
        return out
    table = {
        "generic": ["non_preemptive"],
        "transitory-minus": ["non_preemptive"],
        "transitory-plus": ["non_preemptive"],
        "preemptive-plus": ["preemptive_plus"],
        "preemptive-minus": ["preemptive_minus"],
    }
    if branch not in table:
        raise ValueError(f"unknown branch {branch!r}")
    return table[branch]


def _dominant(candidates, ctx: _Ctx, grid_n: int, reference_x: float):
    """Regime-wise pointwise comparison; reference-point fallback on crossings."""
    lo = ctx.profit.x1 - 0.5 * ctx.span
    hi = ctx.profit.x2 + 0.5 * ctx.span
    xs = np.linspace(lo, hi, grid_n)
    comparison = {}
    scores = np.zeros(len(candidates))
    dominant_flags = np.ones(len(candidates), dtype=bool)
    for regime in ("plus", "minus"):
        defined = [i for i, c in enumerate(candidates)
                   if (c.values.plus if regime == "plus" else c.values.minus) is not None]
        if len(defined) < 2:
            continue
        table = np.array([candidates[i].values.get(regime).eval_many(xs) for i in defined])
        best = table.max(axis=0)
        tol = 1e-9 * max(1.0, abs(ctx.profit.peak) / ctx.params.beta)
        for row, i in enumerate(defined):
            if not np.all(table[row] >= best - tol):
                dominant_flags[i] = False
        comparison[regime] = {
            candidates[i].kind: float(table[row].mean()) for row, i in enumerate(defined)
        }
    for i, c in enumerate(candidates):
        regime = "plus" if c.values.plus is not None else "minus"
        scores[i] = c.payoff_at(reference_x, regime)
    winners = [i for i in range(len(candidates)) if dominant_flags[i]]
    if winners:
        pick = candidates[winners[0]]
        comparison["crossing"] = False
    else:
        pick = candidates[int(np.argmax(scores))]
        comparison["crossing"] = True
    return pick, comparison
