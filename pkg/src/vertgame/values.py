"""Piecewise-analytic value functions and threshold strategies.

A value function on one regime is a list of contiguous pieces:

* ``AnalyticPiece``   particular quadratic plus two exponentials (the
                      continuation region),
* ``PeggedPiece``     value anchored to an interior point minus the action
                      cost (a player's own action region),
* ``DelegatePiece``   the other regime's value minus a switching cost.

Pegged and delegate pieces make every value function total on the real
line, which the simulator's payoff oracle and the comparison grids rely on.
Evaluation at a knot returns the limit from the continuation side.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, QuadProfit, RegimeFundamentals
from .numerics import ExpBasis

__all__ = [
    "AnalyticPiece",
    "PeggedPiece",
    "DelegatePiece",
    "PiecewiseValue",
    "RegimePair",
    "ProducerRow",
    "StrategyPair",
    "write_thresholds_csv",
    "read_thresholds_csv",
]

_MAX_DELEGATE_DEPTH = 2


@dataclass(frozen=True)
class AnalyticPiece:
    lo: float
    hi: float
    fund: RegimeFundamentals
    basis: ExpBasis
    c1: float
    c2: float

    def value(self, x: float, _depth: int = 0) -> float:
        f = self.fund
        ph = self.basis.phi(x)
        return f.q_value(x) + self.c1 * ph[0] + self.c2 * ph[1]

    def slope(self, x: float, _depth: int = 0) -> float:
        f = self.fund
        dph = self.basis.dphi(x)
        return f.q_slope(x) + self.c1 * dph[0] + self.c2 * dph[1]

    def curvature(self, x: float, _depth: int = 0) -> float:
        f = self.fund
        d2 = self.basis.d2phi(x)
        return 2.0 * f.q2 + self.c1 * d2[0] + self.c2 * d2[1]

    def kind(self) -> str:
        return "analytic"


@dataclass(frozen=True)
class PeggedPiece:
    """value(x) = anchor_value - base_cost - slope_cost * |x - anchor|."""

    lo: float
    hi: float
    anchor: float
    anchor_value: float
    base_cost: float = 0.0
    slope_cost: float = 0.0

    def value(self, x: float, _depth: int = 0) -> float:
        return self.anchor_value - self.base_cost - self.slope_cost * abs(x - self.anchor)

    def slope(self, x: float, _depth: int = 0) -> float:
        if self.slope_cost == 0.0:
            return 0.0
        return -self.slope_cost * math.copysign(1.0, x - self.anchor)

    def curvature(self, x: float, _depth: int = 0) -> float:
        return 0.0

    def kind(self) -> str:
        return "pegged"


@dataclass(frozen=True)
class DelegatePiece:
    """value(x) = other regime's value(x) - cost."""

    lo: float
    hi: float
    pair: "RegimePair"
    target: str          # "plus" or "minus"
    cost: float

    def value(self, x: float, _depth: int = 0) -> float:
        if _depth >= _MAX_DELEGATE_DEPTH:
            raise RuntimeError("delegate recursion exceeded depth limit")
        return self.pair.get(self.target).eval(x, _depth + 1) - self.cost

    def slope(self, x: float, _depth: int = 0) -> float:
        if _depth >= _MAX_DELEGATE_DEPTH:
            raise RuntimeError("delegate recursion exceeded depth limit")
        return self.pair.get(self.target).deriv(x, _depth + 1)

    def curvature(self, x: float, _depth: int = 0) -> float:
        if _depth >= _MAX_DELEGATE_DEPTH:
            raise RuntimeError("delegate recursion exceeded depth limit")
        return self.pair.get(self.target).deriv2(x, _depth + 1)

    def kind(self) -> str:
        return "delegate"


class PiecewiseValue:
    """Regime-indexed value function assembled from contiguous pieces.

    ``knots`` maps interior breakpoints to whether the owning solver pasted
    the value smoothly (C1) there; every knot is C0 by construction.
    """

    def __init__(self, regime, pieces, knots=None, provenance: str = ""):
        self.regime = regime
        self.pieces = list(pieces)
        self.knots = dict(knots or {})
        self.provenance = provenance
        for left, right in zip(self.pieces, self.pieces[1:]):
            if not math.isclose(left.hi, right.lo, rel_tol=0, abs_tol=1e-12):
                raise ValueError("pieces must be contiguous")

    def _piece_at(self, x: float):
        if not math.isfinite(x):
            raise ValueError(f"cannot evaluate at {x}")
        candidates = [p for p in self.pieces if p.lo <= x <= p.hi]
        if not candidates:
            raise ValueError(f"x={x} outside the covered domain")
        if len(candidates) == 1:
            return candidates[0]
        for p in candidates:  # knot: prefer the continuation side
            if p.kind() == "analytic":
                return p
        return candidates[0]

    def eval(self, x: float, _depth: int = 0) -> float:
        return self._piece_at(x).value(x, _depth)

    def deriv(self, x: float, _depth: int = 0) -> float:
        return self._piece_at(x).slope(x, _depth)

    def deriv2(self, x: float, _depth: int = 0) -> float:
        return self._piece_at(x).curvature(x, _depth)

    def eval_many(self, xs) -> np.ndarray:
        return np.array([self.eval(float(x)) for x in np.asarray(xs).ravel()])

    def ode_residual(self, x: float, profit: QuadProfit, params: ModelParams) -> float:
        """-beta*v + mu*v' + sigma^2/2 * v'' + pi(x) on an analytic piece."""
        piece = self._piece_at(x)
        if piece.kind() != "analytic":
            raise ValueError(f"x={x} is not interior to a continuation piece")
        mu = piece.fund.mu
        return (
            -params.beta * piece.value(x)
            + mu * piece.slope(x)
            + 0.5 * params.sigma ** 2 * piece.curvature(x)
            + profit.value(x)
        )

    def analytic_pieces(self):
        return [p for p in self.pieces if p.kind() == "analytic"]

    def to_dict(self) -> dict:
        out = {
            "regime": self.regime,
            "provenance": self.provenance,
            "knots": [{"x": x, "smooth": s} for x, s in sorted(self.knots.items())],
            "pieces": [],
        }
        for p in self.pieces:
            d = {"kind": p.kind(), "lo": p.lo, "hi": p.hi}
            if isinstance(p, AnalyticPiece):
                d.update(
                    q2=p.fund.q2, q1=p.fund.q1, q0=p.fund.q0,
                    theta1=p.fund.theta1, theta2=p.fund.theta2,
                    ref1=p.basis.ref1, ref2=p.basis.ref2,
                    c1=p.c1, c2=p.c2,
                )
            elif isinstance(p, PeggedPiece):
                d.update(
                    anchor=p.anchor, anchor_value=p.anchor_value,
                    base_cost=p.base_cost, slope_cost=p.slope_cost,
                )
            else:
                d.update(target=p.target, cost=p.cost)
            out["pieces"].append(d)
        return out


class RegimePair:
    """Holds the expansion/contraction value functions of one player.

    Delegate pieces reference the pair, so both members can point at each
    other; members are assigned once right after construction.
    """

    def __init__(self):
        self.plus: PiecewiseValue | None = None
        self.minus: PiecewiseValue | None = None

    def get(self, regime: str) -> PiecewiseValue:
        v = self.plus if regime == "plus" else self.minus
        if v is None:
            raise RuntimeError(f"value for regime '{regime}' not assigned")
        return v

    def to_dict(self) -> dict:
        return {"plus": self.plus.to_dict() if self.plus else None,
                "minus": self.minus.to_dict() if self.minus else None}

    def dump_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


# --------------------------------------------------------------------------
# Threshold strategies.  Sentinels: None means "not part of the strategy";
# +/-inf means an explicit never-triggering threshold.  Never large floats.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProducerRow:
    """One regime's impulse thresholds (lo, lo_target, hi_target, hi)."""

    lo: float | None = None
    lo_target: float | None = None
    hi_target: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.lo is not None and math.isfinite(self.lo):
            if self.lo_target is None or not self.lo < self.lo_target:
                raise ValueError(f"need lo < lo_target, got {self}")
        if self.hi is not None and math.isfinite(self.hi):
            if self.hi_target is None or not self.hi_target < self.hi:
                raise ValueError(f"need hi_target < hi, got {self}")

    @property
    def two_sided(self) -> bool:
        return (
            self.lo is not None and math.isfinite(self.lo)
            and self.hi is not None and math.isfinite(self.hi)
        )

    def entries(self):
        return (self.lo, self.lo_target, self.hi_target, self.hi)


@dataclass(frozen=True)
class StrategyPair:
    """Producer 2x4 threshold/target matrix plus consumer switch pair."""

    producer_plus: ProducerRow
    producer_minus: ProducerRow
    y_low: float | None = None    # switch to expansion when price drops here (contraction regime)
    y_high: float | None = None   # switch to contraction when price rises here (expansion regime)

    def __post_init__(self):
        yl, yh = self.y_low, self.y_high
        if yl is not None and yh is not None and math.isfinite(yl) and math.isfinite(yh):
            if not yl < yh:
                raise ValueError(f"need y_low < y_high, got ({yl}, {yh})")

    @property
    def consumer(self) -> tuple[float | None, float | None]:
        return (self.y_low, self.y_high)

    def producer_matrix(self):
        return (self.producer_plus.entries(), self.producer_minus.entries())

    def entries(self) -> dict[str, float | None]:
        p, m = self.producer_plus, self.producer_minus
        return {
            "p_plus_lo": p.lo, "p_plus_lo_target": p.lo_target,
            "p_plus_hi_target": p.hi_target, "p_plus_hi": p.hi,
            "p_minus_lo": m.lo, "p_minus_lo_target": m.lo_target,
            "p_minus_hi_target": m.hi_target, "p_minus_hi": m.hi,
            "c_y_low": self.y_low, "c_y_high": self.y_high,
        }

    def finite_entries(self) -> dict[str, float]:
        return {
            k: v for k, v in self.entries().items()
            if v is not None and math.isfinite(v)
        }

    def pattern(self) -> tuple:
        """Finiteness signature; tatonnement requires it to stabilize."""
        def tag(v):
            if v is None:
                return "absent"
            if math.isinf(v):
                return "+inf" if v > 0 else "-inf"
            return "finite"
        return tuple(tag(v) for v in self.entries().values())

    def sup_delta(self, other: "StrategyPair") -> float:
        """Sup-norm distance over finite thresholds; inf on pattern mismatch."""
        if self.pattern() != other.pattern():
            return math.inf
        a, b = self.entries(), other.entries()
        deltas = [
            abs(a[k] - b[k]) for k in a
            if a[k] is not None and math.isfinite(a[k])
        ]
        return max(deltas) if deltas else 0.0

    def to_dict(self) -> dict:
        return {k: _encode_entry(v) for k, v in self.entries().items()}

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyPair":
        e = {k: _decode_entry(v) for k, v in d.items()}
        return cls(
            ProducerRow(e["p_plus_lo"], e["p_plus_lo_target"],
                        e["p_plus_hi_target"], e["p_plus_hi"]),
            ProducerRow(e["p_minus_lo"], e["p_minus_lo_target"],
                        e["p_minus_hi_target"], e["p_minus_hi"]),
            e["c_y_low"], e["c_y_high"],
        )

    def describe(self) -> str:
        def fmt(v):
            if v is None:
                return "-"
            if math.isinf(v):
                return "+inf" if v > 0 else "-inf"
            return f"{v:.4f}"
        (a, b, c, d), (e, f, g, h) = self.producer_matrix()
        return (
            f"C_p = [[{fmt(a)}, {fmt(b)}, {fmt(c)}, {fmt(d)}], "
            f"[{fmt(e)}, {fmt(f)}, {fmt(g)}, {fmt(h)}]]  "
            f"C_c = [{fmt(self.y_low)}, {fmt(self.y_high)}]"
        )


def _encode_entry(v: float | None) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _decode_entry(s: str) -> float | None:
    if s == "":
        return None
    return float(s)


def write_thresholds_csv(path: str, pair: StrategyPair, extra: dict | None = None) -> None:
    """One header row and one data row; floats printed with round-trip repr."""
    fields = {f"{k} (USD)": v for k, v in pair.to_dict().items()}
    for k, v in (extra or {}).items():
        fields[k] = v if isinstance(v, str) else repr(v)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields.keys())
        w.writerow(fields.values())


def read_thresholds_csv(path: str) -> StrategyPair:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and a data row")
    doc = {name.split(" (")[0]: value for name, value in zip(rows[0], rows[1])}
    keys = StrategyPair(ProducerRow(), ProducerRow()).entries().keys()
    try:
        return StrategyPair.from_dict({k: doc[k] for k in keys})
    except KeyError as exc:
        raise ValueError(f"{path}: missing threshold column {exc.args[0]!r}") from None
