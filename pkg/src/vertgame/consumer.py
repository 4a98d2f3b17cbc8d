"""Consumer best responses to a fixed producer impulse strategy.

The consumer controls the drift regime through costly switches.  Against a
producer threshold matrix she can stay put, switch once into a preferred
regime, or cycle between both regimes.  Each case reduces to a small linear
system for exponential coefficients inside a low-dimensional root-find for
the free switching boundaries.

A switching threshold may land inside the producer's action region (the
producer then impulses the instant she switches); the pasting equations
evaluate the other regime's value through its pegged extension in that
case, so wide-band parameterizations remain solvable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, build_profits, regime_fundamentals
from .numerics import (
    SolverFailure,
    bracketed_roots,
    damped_newton,
    grid_seeds,
    multistart_newton,
    solve_linear,
)
from .pasting import Sheet
from .values import DelegatePiece, PeggedPiece, PiecewiseValue, RegimePair, StrategyPair

__all__ = [
    "ConsumerBR",
    "no_switch_value",
    "single_switch_br",
    "double_switch_br",
    "consumer_alone",
    "consumer_best_response",
]

INF = math.inf

# candidate kinds ordered by number of switches (ties break toward fewer)
_SWITCH_COUNT = {"no_switch": 0, "single_switch_to_plus": 1,
                 "single_switch_to_minus": 1, "double_switch": 2, "alone": 2}


@dataclass
class ConsumerBR:
    kind: str
    y_low: float | None
    y_high: float | None
    values: RegimePair
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def payoff_at(self, x: float, regime: str) -> float:
        return self.values.get(regime).eval(x)

    @property
    def strategy(self) -> tuple[float | None, float | None]:
        return (self.y_low, self.y_high)


class _Ctx:
    """Per-call cache of profits and regime fundamentals."""

    def __init__(self, params: ModelParams):
        self.params = params
        _, self.profit = build_profits(params)
        self.fund = {
            "plus": regime_fundamentals(self.profit, "plus", params),
            "minus": regime_fundamentals(self.profit, "minus", params),
        }

    @property
    def span(self) -> float:
        return self.profit.span


def _require_row(row, which: str):
    if row is None or not row.two_sided:
        raise SolverFailure(f"producer row for regime '{which}' must be two-sided")


# ---------------------------------------------------------------- no-switch


def no_switch_value(c_p: StrategyPair, regime: str, params: ModelParams) -> PiecewiseValue:
    """Value of an inactive consumer on the producer's band for `regime`.

    The two exponential coefficients come from the boundary conditions
    w(x_r) = w(x_r*) at both impulse thresholds; outside the band the value
    is pegged to the respective impulse target.
    """
    ctx = _Ctx(params)
    return _no_switch(ctx, c_p, regime)


def _no_switch(ctx: _Ctx, c_p: StrategyPair, regime: str) -> PiecewiseValue:
    row = c_p.producer_plus if regime == "plus" else c_p.producer_minus
    _require_row(row, regime)
    lo, lot, hit, hi = row.entries()
    sheet = Sheet(ctx.fund[regime], ref1=hi, ref2=lo)
    a = np.array([sheet.phi(lo) - sheet.phi(lot),
                  sheet.phi(hi) - sheet.phi(hit)])
    b = np.array([sheet.qv(lot) - sheet.qv(lo),
                  sheet.qv(hit) - sheet.qv(hi)])
    cond = np.linalg.cond(a)
    tiny = 1e-9 * ctx.span
    if not np.isfinite(cond) or cond > 1e14 or (lot - lo) < tiny or (hi - hit) < tiny:
        raise SolverFailure(
            f"no-switch system is singular (condition number {cond:.3g}): "
            f"impulse targets coincide with thresholds in row {row.entries()}"
        )
    c = solve_linear(a, b)
    pv = PiecewiseValue(
        regime,
        [
            PeggedPiece(-INF, lo, anchor=lot, anchor_value=sheet.val(lot, c)),
            sheet.piece(lo, hi, c),
            PeggedPiece(hi, INF, anchor=hit, anchor_value=sheet.val(hit, c)),
        ],
        knots={lo: False, hi: False},
        provenance="consumer.no_switch",
    )
    return pv


def _no_switch_pair(ctx: _Ctx, c_p: StrategyPair) -> RegimePair:
    pair = RegimePair()
    pair.plus = _no_switch(ctx, c_p, "plus")
    pair.minus = _no_switch(ctx, c_p, "minus")
    return pair


# ------------------------------------------------------------ single switch


def single_switch_br(
    c_p: StrategyPair, preferred_regime: str, params: ModelParams
) -> ConsumerBR | None:
    """Switch once into `preferred_regime`, never leave it afterwards.

    Returns None when the smooth-pasting residual has no root inside the
    admissible bracket (the switching obstacle never binds, e.g. for very
    large switching costs).
    """
    ctx = _Ctx(params)
    if preferred_regime == "minus":
        return _single_to_minus(ctx, c_p)
    if preferred_regime == "plus":
        return _single_to_plus(ctx, c_p)
    raise ValueError(f"unknown regime {preferred_regime!r}")


def _single_to_minus(ctx: _Ctx, c_p: StrategyPair) -> ConsumerBR | None:
    """Expansion is transitory: switch down at y_high, then collect w0^-."""
    _require_row(c_p.producer_minus, "minus")
    row_p = c_p.producer_plus
    if row_p is None or row_p.lo is None or not math.isfinite(row_p.lo):
        raise SolverFailure("single switch to minus needs finite lower plus-row thresholds")
    w0m = _no_switch(ctx, c_p, "minus")
    xlp, xltp = row_p.lo, row_p.lo_target
    h = ctx.params.h_plus
    span = ctx.span

    def coeffs(y):
        sheet = Sheet(ctx.fund["plus"], ref1=y, ref2=xlp)
        a = np.array([sheet.phi(y),
                      sheet.phi(xlp) - sheet.phi(xltp)])
        b = np.array([w0m.eval(y) - h - sheet.qv(y),
                      sheet.qv(xltp) - sheet.qv(xlp)])
        return sheet, solve_linear(a, b)

    def residual(y):
        sheet, c = coeffs(y)
        return sheet.dval(y, c) - w0m.deriv(y)

    cap = row_p.hi if (row_p.hi is not None and math.isfinite(row_p.hi)) \
        else c_p.producer_minus.hi + 0.5 * span
    roots = bracketed_roots(residual, xlp + 1e-3 * span, cap - 1e-9, n_scan=400)
    y = _admissible_stop(
        roots, coeffs, lambda t: w0m.eval(t) - h, lo_edge=xlp, upper_boundary=True,
    )
    if y is None:
        return None
    sheet, c = coeffs(y)
    pair = RegimePair()
    pair.minus = w0m
    pair.plus = PiecewiseValue(
        "plus",
        [
            PeggedPiece(-INF, xlp, anchor=xltp, anchor_value=sheet.val(xltp, c)),
            sheet.piece(xlp, y, c),
            DelegatePiece(y, INF, pair, "minus", cost=h),
        ],
        knots={xlp: False, y: True},
        provenance="consumer.single_switch_to_minus",
    )
    return ConsumerBR(
        "single_switch_to_minus", -INF, y, pair,
        residual=abs(residual(y)),
        diagnostics={"obstacle": "no_switch_minus"},
    )


def _single_to_plus(ctx: _Ctx, c_p: StrategyPair) -> ConsumerBR | None:
    """Contraction is transitory: switch up at y_low, then collect w0^+."""
    _require_row(c_p.producer_plus, "plus")
    row_m = c_p.producer_minus
    if row_m is None or row_m.hi is None or not math.isfinite(row_m.hi):
        raise SolverFailure("single switch to plus needs finite upper minus-row thresholds")
    w0p = _no_switch(ctx, c_p, "plus")
    xhm, xhtm = row_m.hi, row_m.hi_target
    h = ctx.params.h_minus
    span = ctx.span

    def coeffs(y):
        sheet = Sheet(ctx.fund["minus"], ref1=xhm, ref2=y)
        a = np.array([sheet.phi(y),
                      sheet.phi(xhm) - sheet.phi(xhtm)])
        b = np.array([w0p.eval(y) - h - sheet.qv(y),
                      sheet.qv(xhtm) - sheet.qv(xhm)])
        return sheet, solve_linear(a, b)

    def residual(y):
        sheet, c = coeffs(y)
        return sheet.dval(y, c) - w0p.deriv(y)

    floor = row_m.lo if (row_m.lo is not None and math.isfinite(row_m.lo)) \
        else c_p.producer_plus.lo - 0.5 * span
    roots = bracketed_roots(residual, floor + 1e-9, xhm - 1e-3 * span, n_scan=400)
    y = _admissible_stop(
        roots, coeffs, lambda t: w0p.eval(t) - h, hi_edge=xhm, upper_boundary=False,
    )
    if y is None:
        return None
    sheet, c = coeffs(y)
    pair = RegimePair()
    pair.plus = w0p
    pair.minus = PiecewiseValue(
        "minus",
        [
            DelegatePiece(-INF, y, pair, "plus", cost=h),
            sheet.piece(y, xhm, c),
            PeggedPiece(xhm, INF, anchor=xhtm, anchor_value=sheet.val(xhtm, c)),
        ],
        knots={y: True, xhm: False},
        provenance="consumer.single_switch_to_plus",
    )
    return ConsumerBR(
        "single_switch_to_plus", y, INF, pair,
        residual=abs(residual(y)),
        diagnostics={"obstacle": "no_switch_plus"},
    )


# ------------------------------------------------------------ double switch


def double_switch_br(
    c_p: StrategyPair, params: ModelParams, seed: tuple[float, float] | None = None
) -> ConsumerBR | None:
    """Cycle between regimes: switch up at y_low, down at y_high.

    A 4x4 linear core (continuity at y_low, x_l^+, y_high, x_h^-) sits
    inside a 2-d Newton iteration on the two smooth-pasting residuals.
    Returns None when no admissible root exists.
    """
    ctx = _Ctx(params)
    row_p, row_m = c_p.producer_plus, c_p.producer_minus
    if row_p is None or row_p.lo is None or not math.isfinite(row_p.lo):
        raise SolverFailure("double switch needs finite lower plus-row thresholds")
    if row_m is None or row_m.hi is None or not math.isfinite(row_m.hi):
        raise SolverFailure("double switch needs finite upper minus-row thresholds")
    xlp, xltp = row_p.lo, row_p.lo_target
    xhm, xhtm = row_m.hi, row_m.hi_target
    h_up, h_down = params.h_minus, params.h_plus  # pay h_minus at y_low, h_plus at y_high
    span = ctx.span
    xbar = ctx.profit.xbar

    def system(y_low, y_high):
        plus = Sheet(ctx.fund["plus"], ref1=y_high, ref2=xlp)
        minus = Sheet(ctx.fund["minus"], ref1=xhm, ref2=min(y_low, xhm - 1e-6 * span))
        a = np.zeros((4, 4))
        b = np.zeros(4)
        # continuity at y_low: w-(y_low) = w+(y_low) - h_minus, w+ through its peg
        if y_low > xlp:
            a[0, :2] = plus.phi(y_low)
            q_plus_at = plus.qv(y_low)
        else:
            a[0, :2] = plus.phi(xltp)
            q_plus_at = plus.qv(xltp)
        a[0, 2:] = -minus.phi(y_low)
        b[0] = minus.qv(y_low) - q_plus_at + h_up
        # impulse continuity at x_l^+
        a[1, :2] = plus.phi(xlp) - plus.phi(xltp)
        b[1] = plus.qv(xltp) - plus.qv(xlp)
        # continuity at y_high: w+(y_high) = w-(y_high) - h_plus
        if y_high < xhm:
            a[2, 2:] = minus.phi(y_high)
            q_minus_at = minus.qv(y_high)
        else:
            a[2, 2:] = minus.phi(xhtm)
            q_minus_at = minus.qv(xhtm)
        a[2, :2] = -plus.phi(y_high)
        b[2] = plus.qv(y_high) - q_minus_at + h_down
        # impulse continuity at x_h^-
        a[3, 2:] = minus.phi(xhm) - minus.phi(xhtm)
        b[3] = minus.qv(xhtm) - minus.qv(xhm)
        c = solve_linear(a, b)
        return plus, minus, c[:2], c[2:]

    def residuals(v):
        y_low, y_high = v
        if y_high - y_low < 1e-8 * span or y_high <= xlp or y_low >= xhm:
            return np.array([1e9, 1e9])
        plus, minus, cp, cm = system(y_low, y_high)
        slope_plus_at_low = plus.dval(y_low, cp) if y_low > xlp else 0.0
        slope_minus_at_high = minus.dval(y_high, cm) if y_high < xhm else 0.0
        return np.array([
            slope_plus_at_low - minus.dval(y_low, cm),
            slope_minus_at_high - plus.dval(y_high, cp),
        ])

    def build(y_low, y_high):
        plus, minus, cp, cm = system(y_low, y_high)
        pair = RegimePair()
        pair.plus = PiecewiseValue(
            "plus",
            [
                PeggedPiece(-INF, xlp, anchor=xltp, anchor_value=plus.val(xltp, cp)),
                plus.piece(xlp, y_high, cp),
                DelegatePiece(y_high, INF, pair, "minus", cost=h_down),
            ],
            knots={xlp: False, y_high: True},
            provenance="consumer.double_switch",
        )
        pair.minus = PiecewiseValue(
            "minus",
            [
                DelegatePiece(-INF, y_low, pair, "plus", cost=h_up),
                minus.piece(y_low, xhm, cm),
                PeggedPiece(xhm, INF, anchor=xhtm, anchor_value=minus.val(xhtm, cm)),
            ],
            knots={y_low: True, xhm: False},
            provenance="consumer.double_switch",
        )
        return pair

    def admissible(y_low, y_high, pair):
        if row_m.lo is not None and math.isfinite(row_m.lo) and y_low < row_m.lo - 1e-9:
            return False
        if row_p.hi is not None and math.isfinite(row_p.hi) and y_high > row_p.hi + 1e-9:
            return False
        # obstacle side of the variational inequalities on both bands
        for regime, other, h, lo, hi in (
            ("plus", "minus", h_down, xlp, y_high),
            ("minus", "plus", h_up, y_low, xhm),
        ):
            xs = np.linspace(lo, hi, 101)[1:-1]
            own = pair.get(regime).eval_many(xs)
            obs = pair.get(other).eval_many(xs) - h
            scale = max(1.0, float(np.max(np.abs(own))))
            if float(np.min(own - obs)) < -1e-6 * scale:
                return False
        return True

    lo_box = np.array([
        max(_finite_or(row_m.lo, -INF), ctx.profit.x1 - 2.0 * span),
        xlp + 1e-6 * span,
    ])
    hi_box = np.array([
        xhm - 1e-6 * span,
        min(_finite_or(row_p.hi, INF), ctx.profit.x2 + 2.0 * span),
    ])
    seeds = [np.array(seed)] if seed is not None else []
    seeds += [
        np.array([xbar - 0.125 * span, xbar + 0.125 * span]),
        np.array([xbar - 0.3 * span, xbar + 0.3 * span]),
    ]
    seeds += list(grid_seeds(lo_box, hi_box, 4))
    for seed_v in seeds:
        y, norm, ok = damped_newton(residuals, seed_v, lo=lo_box, hi=hi_box)
        if not ok:
            continue
        y_low, y_high = float(y[0]), float(y[1])
        pair = build(y_low, y_high)
        if not admissible(y_low, y_high, pair):
            continue
        strict = (y_low > xlp) and (y_high < xhm)
        return ConsumerBR(
            "double_switch", y_low, y_high, pair,
            residual=norm,
            diagnostics={"strict_band_ordering": strict},
        )
    return None


def _finite_or(v, default: float) -> float:
    return v if (v is not None and math.isfinite(v)) else default


def _admissible_stop(roots, coeffs, obstacle, lo_edge=None, hi_edge=None,
                     upper_boundary=True):
    """Filter smooth-pasting roots by the obstacle inequality; rank survivors.

    A genuine stopping boundary keeps the continuation value above the
    stopping payoff throughout the continuation interval; spurious
    sign-changes of the pasting residual violate that and are dropped.
    """
    admissible = []
    for y in roots:
        sheet, c = coeffs(y)
        lo = lo_edge if upper_boundary else y
        hi = y if upper_boundary else hi_edge
        if hi - lo <= 0:
            continue
        xs = np.linspace(lo, hi, 101)[1:-1]
        vals = np.array([sheet.val(t, c) for t in xs])
        obs = np.array([obstacle(t) for t in xs])
        scale = max(1.0, float(np.max(np.abs(vals))))
        if float(np.min(vals - obs)) < -1e-6 * scale:
            continue
        admissible.append((y, sheet, c))
    if not admissible:
        return None
    if len(admissible) == 1:
        return admissible[0][0]
    # rank by value at a reference point interior to every candidate interval
    if upper_boundary:
        ref = lo_edge + 0.5 * (min(a[0] for a in admissible) - lo_edge)
    else:
        ref = hi_edge - 0.5 * (hi_edge - max(a[0] for a in admissible))
    best = max(admissible, key=lambda a: a[1].val(ref, a[2]))
    return best[0]


# ------------------------------------------------------------- stand-alone


def consumer_alone(params: ModelParams) -> ConsumerBR:
    """Benchmark: the consumer is the only player moving the price.

    Boundedness kills one exponential per regime, leaving four unknowns
    (two coefficients and the two thresholds) for the four pasting
    equations at y_low and y_high.
    """
    ctx = _Ctx(params)
    span, xbar = ctx.span, ctx.profit.xbar
    h_up, h_down = params.h_minus, params.h_plus

    def system(y_low, y_high):
        plus = Sheet(ctx.fund["plus"], ref1=y_high, ref2=y_high)
        minus = Sheet(ctx.fund["minus"], ref1=y_low, ref2=y_low)
        a = np.array([
            [plus.phi(y_low)[0], -minus.phi(y_low)[1]],
            [plus.phi(y_high)[0], -minus.phi(y_high)[1]],
        ])
        b = np.array([
            minus.qv(y_low) - plus.qv(y_low) + h_up,
            minus.qv(y_high) - plus.qv(y_high) - h_down,
        ])
        lam = solve_linear(a, b)
        cp = np.array([lam[0], 0.0])
        cm = np.array([0.0, lam[1]])
        return plus, minus, cp, cm

    def residuals(v):
        y_low, y_high = v
        if y_high - y_low < 1e-8 * span:
            return np.array([1e9, 1e9])
        plus, minus, cp, cm = system(y_low, y_high)
        return np.array([
            plus.dval(y_low, cp) - minus.dval(y_low, cm),
            plus.dval(y_high, cp) - minus.dval(y_high, cm),
        ])

    lo_box = np.array([ctx.profit.x1 - 4.0 * span, ctx.profit.x1 - 4.0 * span])
    hi_box = np.array([ctx.profit.x2 + 4.0 * span, ctx.profit.x2 + 4.0 * span])
    seeds = [np.array([xbar - f * span, xbar + f * span]) for f in (0.125, 0.25, 0.5, 1.0)]
    y, norm, ok = multistart_newton(residuals, seeds, lo=lo_box, hi=hi_box)
    if not ok:
        raise SolverFailure(
            "stand-alone consumer pasting has no root "
            f"(best residual {norm:.3g} at y={y}); switching may never pay",
            x=y, residual=norm,
        )
    y_low, y_high = float(y[0]), float(y[1])
    plus, minus, cp, cm = system(y_low, y_high)
    pair = RegimePair()
    pair.plus = PiecewiseValue(
        "plus",
        [plus.piece(-INF, y_high, cp),
         DelegatePiece(y_high, INF, pair, "minus", cost=h_down)],
        knots={y_high: True},
        provenance="consumer.alone",
    )
    pair.minus = PiecewiseValue(
        "minus",
        [DelegatePiece(-INF, y_low, pair, "plus", cost=h_up),
         minus.piece(y_low, INF, cm)],
        knots={y_low: True},
        provenance="consumer.alone",
    )
    return ConsumerBR("alone", y_low, y_high, pair, residual=norm)


# ---------------------------------------------------------------- selection


def consumer_best_response(
    c_p: StrategyPair,
    params: ModelParams,
    branch: str | None = None,
    grid_n: int = 401,
    reference_x: float | None = None,
) -> ConsumerBR:
    """Solve all feasible candidates and return the pointwise-dominant one.

    `branch` restricts which candidate is tried first (equilibrium searches
    pin a branch for reproducibility); if the pinned candidate does not
    exist the remaining feasible ones are compared, with ties broken toward
    fewer switches.
    """
    ctx = _Ctx(params)
    candidates: list[ConsumerBR] = []

    def try_add(fn, *args):
        try:
            br = fn(*args)
        except SolverFailure:
            return
        if br is not None:
            candidates.append(br)

    wanted = _branch_candidates(branch)
    if "double_switch" in wanted:
        try_add(double_switch_br, c_p, params)
    if "single_switch_to_minus" in wanted:
        try_add(single_switch_br, c_p, "minus", params)
    if "single_switch_to_plus" in wanted:
        try_add(single_switch_br, c_p, "plus", params)
    if "no_switch" in wanted:
        try_add(_no_switch_br, ctx, c_p)

    if branch is not None and not candidates:
        # pinned branch infeasible on this view: report rather than guess
        raise SolverFailure(
            f"branch {branch!r}: pinned consumer candidate infeasible for this "
            "producer strategy"
        )
    if not candidates:
        raise SolverFailure("no feasible consumer response for this producer strategy")
    if len(candidates) == 1:
        return candidates[0]

    ref = ctx.profit.xbar if reference_x is None else reference_x
    pick, crossing = _dominant(candidates, c_p, ctx, grid_n, ref)
    pick.diagnostics["candidates"] = [c.kind for c in candidates]
    pick.diagnostics["crossing"] = crossing
    return pick


def _no_switch_br(ctx: _Ctx, c_p: StrategyPair) -> ConsumerBR:
    pair = _no_switch_pair(ctx, c_p)
    return ConsumerBR("no_switch", None, None, pair)


def _branch_candidates(branch: str | None) -> list[str]:
    if branch is None:
        return ["double_switch", "single_switch_to_minus",
                "single_switch_to_plus", "no_switch"]
    table = {
        "generic": ["double_switch"],
        "transitory-minus": ["single_switch_to_minus"],
        "transitory-plus": ["single_switch_to_plus"],
        "preemptive-plus": ["single_switch_to_minus"],
        "preemptive-minus": ["single_switch_to_plus"],
    }
    if branch not in table:
        raise ValueError(f"unknown branch {branch!r}")
    return table[branch]


def _comparison_window(c_p: StrategyPair, ctx: _Ctx, regime: str) -> tuple[float, float]:
    row = c_p.producer_plus if regime == "plus" else c_p.producer_minus
    lo = _finite_or(row.lo if row else None, ctx.profit.x1 - 0.5 * ctx.span)
    hi = _finite_or(row.hi if row else None, ctx.profit.x2 + 0.5 * ctx.span)
    return lo, hi


def _dominant(candidates, c_p, ctx, grid_n, reference_x):
    """Pointwise-dominant candidate over both regime windows.

    When payoffs cross, falls back to the value at the reference price and
    flags the crossing.
    """
    tables = {}
    for regime in ("plus", "minus"):
        lo, hi = _comparison_window(c_p, ctx, regime)
        xs = np.linspace(lo, hi, grid_n)
        tables[regime] = np.array([c.values.get(regime).eval_many(xs) for c in candidates])
    tol = 1e-9 * max(1.0, abs(ctx.profit.peak) / ctx.params.beta)
    order = sorted(range(len(candidates)),
                   key=lambda i: _SWITCH_COUNT.get(candidates[i].kind, 9))
    for i in order:
        if all(np.all(tables[r][i] >= tables[r].max(axis=0) - tol) for r in ("plus", "minus")):
            return candidates[i], False
    scores = [
        candidates[i].payoff_at(reference_x, "plus")
        + candidates[i].payoff_at(reference_x, "minus")
        for i in range(len(candidates))
    ]
    return candidates[int(np.argmax(scores))], True
