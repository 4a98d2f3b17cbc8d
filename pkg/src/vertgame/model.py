"""Market model: parameters, quadratic profit rates, and regime ODE data.

Everything downstream (best-response solvers, simulation) consumes the
objects defined here.  All quantities are plain floats with documented
units: prices in USD, rates in USD/yr, time in years.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

__all__ = [
    "ProducerCurve",
    "ConsumerCurve",
    "DirectProfit",
    "QuadProfit",
    "ModelParams",
    "RegimeFundamentals",
    "ConfigError",
    "build_profits",
    "char_roots",
    "particular_solution",
    "regime_fundamentals",
    "load_config",
]


class ConfigError(ValueError):
    """Raised for invalid parameter sets or malformed config files."""


@dataclass(frozen=True)
class ProducerCurve:
    """Structural producer side: extraction cost c_p and linear demand d0 - d1*x."""

    c_p: float
    d0: float
    d1: float


@dataclass(frozen=True)
class ConsumerCurve:
    """Structural consumer side.

    Final-good demand d0' - d1'*P, price pass-through P = p0 + p1*x,
    conversion factor alpha (one unit of input makes alpha units of output)
    and conversion cost c_c.
    """

    d0_prime: float
    d1_prime: float
    p0: float
    p1: float
    alpha: float
    c_c: float


@dataclass(frozen=True)
class DirectProfit:
    """Direct parameterization a*(x - x1)*(x2 - x) of a profit rate."""

    a: float
    x1: float
    x2: float


@dataclass(frozen=True)
class QuadProfit:
    """Concave quadratic profit rate g0 + g1*x + g2*x^2 (USD/yr).

    x1 < x2 are the zero-profit prices, xbar the peak location.
    """

    g0: float
    g1: float
    g2: float
    x1: float
    x2: float
    xbar: float
    peak: float

    @classmethod
    def from_coefficients(cls, g0: float, g1: float, g2: float) -> "QuadProfit":
        if g2 >= 0:
            raise ConfigError(f"profit rate must be concave, got x^2 coefficient {g2}")
        disc = g1 * g1 - 4.0 * g2 * g0
        if disc <= 0:
            raise ConfigError("profit rate has no real zero-profit prices")
        sq = math.sqrt(disc)
        # g2 < 0: the two roots in increasing order
        r1 = (-g1 + sq) / (2.0 * g2)
        r2 = (-g1 - sq) / (2.0 * g2)
        x1, x2 = min(r1, r2), max(r1, r2)
        xbar = -g1 / (2.0 * g2)
        peak = g0 + g1 * xbar + g2 * xbar * xbar
        return cls(g0, g1, g2, x1, x2, xbar, peak)

    def value(self, x: float) -> float:
        return self.g0 + self.g1 * x + self.g2 * x * x

    def slope(self, x: float) -> float:
        return self.g1 + 2.0 * self.g2 * x

    @property
    def span(self) -> float:
        return self.x2 - self.x1


@dataclass(frozen=True)
class ModelParams:
    """All market and player constants.

    beta: discount rate (1/yr); sigma: price volatility (USD/yr^0.5);
    mu_plus/mu_minus: expansion/contraction drifts (USD/yr);
    h_plus: cost of switching out of expansion, h_minus out of contraction (USD);
    kappa0/kappa1: fixed and proportional impulse costs (USD, USD per unit).
    """

    beta: float
    sigma: float
    mu_plus: float
    mu_minus: float
    producer: ProducerCurve | DirectProfit
    consumer: ConsumerCurve | DirectProfit
    h_plus: float
    h_minus: float
    kappa0: float
    kappa1: float = 0.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not (self.mu_minus < 0 < self.mu_plus):
            raise ConfigError(
                f"need mu_minus < 0 < mu_plus, got ({self.mu_minus}, {self.mu_plus})"
            )
        if self.h_plus < 0 or self.h_minus < 0:
            raise ConfigError("switching costs must be nonnegative")
        if self.kappa0 <= 0:
            raise ConfigError(f"kappa0 must be positive, got {self.kappa0}")
        if self.kappa1 < 0:
            raise ConfigError(f"kappa1 must be nonnegative, got {self.kappa1}")
        if isinstance(self.consumer, ConsumerCurve):
            c = self.consumer
            if c.p1 <= 1.0 / c.alpha:
                raise ConfigError(
                    "consumer profit not concave: pass-through p1 = "
                    f"{c.p1} must exceed 1/alpha = {1.0 / c.alpha:.6g}"
                )

    def mu(self, regime: str) -> float:
        return self.mu_plus if regime == "plus" else self.mu_minus

    def switch_cost(self, regime_from: str) -> float:
        """Cost of leaving `regime_from` (USD)."""
        return self.h_plus if regime_from == "plus" else self.h_minus


def build_profits(params: ModelParams) -> tuple[QuadProfit, QuadProfit]:
    """Expand the producer and consumer specs into quadratic profit rates."""
    return _expand_producer(params.producer), _expand_consumer(params.consumer)


def _expand_direct(spec: DirectProfit) -> QuadProfit:
    a, x1, x2 = spec.a, spec.x1, spec.x2
    if a <= 0 or x2 <= x1:
        raise ConfigError(f"direct profit spec needs a > 0 and x1 < x2, got {spec}")
    # a(x - x1)(x2 - x) = -a*x1*x2 + a(x1 + x2) x - a x^2
    return QuadProfit.from_coefficients(-a * x1 * x2, a * (x1 + x2), -a)


def _expand_producer(spec: ProducerCurve | DirectProfit) -> QuadProfit:
    if isinstance(spec, DirectProfit):
        return _expand_direct(spec)
    # (x - c_p)(d0 - d1 x)
    return QuadProfit.from_coefficients(
        -spec.c_p * spec.d0, spec.d0 + spec.c_p * spec.d1, -spec.d1
    )


def _expand_consumer(spec: ConsumerCurve | DirectProfit) -> QuadProfit:
    if isinstance(spec, DirectProfit):
        return _expand_direct(spec)
    d_at_x0 = spec.d0_prime - spec.d1_prime * spec.p0  # goods demand at x = 0
    d_slope = spec.d1_prime * spec.p1                  # demand lost per USD of x
    margin0 = spec.p0 - spec.c_c / spec.alpha          # unit margin at x = 0
    margin_slope = spec.p1 - 1.0 / spec.alpha
    g0 = d_at_x0 * margin0
    g1 = d_at_x0 * margin_slope - d_slope * margin0
    g2 = -d_slope * margin_slope
    return QuadProfit.from_coefficients(g0, g1, g2)


def char_roots(mu: float, params: ModelParams) -> tuple[float, float]:
    """The two real roots theta1 > 0 > theta2 of -beta + mu*z + sigma^2 z^2 / 2."""
    a = 0.5 * params.sigma ** 2
    sq = math.sqrt(mu * mu + 4.0 * a * params.beta)
    return (-mu + sq) / (2.0 * a), (-mu - sq) / (2.0 * a)


def particular_solution(
    profit: QuadProfit, mu: float, params: ModelParams
) -> tuple[float, float, float]:
    """Quadratic q0 + q1*x + q2*x^2 solving the inaction ODE with source `profit`.

    Returns (q2, q1, q0).
    """
    beta, sig2 = params.beta, params.sigma ** 2
    q2 = profit.g2 / beta
    q1 = (profit.g1 + 2.0 * mu * q2) / beta
    q0 = (profit.g0 + sig2 * q2 + mu * q1) / beta
    return q2, q1, q0


@dataclass(frozen=True)
class RegimeFundamentals:
    """Per-regime ODE data: characteristic roots and particular quadratic."""

    regime: str            # "plus" (expansion) or "minus" (contraction)
    mu: float
    theta1: float          # > 0
    theta2: float          # < 0
    q2: float
    q1: float
    q0: float

    def q_value(self, x: float) -> float:
        return self.q0 + self.q1 * x + self.q2 * x * x

    def q_slope(self, x: float) -> float:
        return self.q1 + 2.0 * self.q2 * x


def regime_fundamentals(
    profit: QuadProfit, regime: str, params: ModelParams
) -> RegimeFundamentals:
    mu = params.mu(regime)
    t1, t2 = char_roots(mu, params)
    q2, q1, q0 = particular_solution(profit, mu, params)
    return RegimeFundamentals(regime, mu, t1, t2, q2, q1, q0)


# --------------------------------------------------------------------------
# Config files: TOML with sections [market], [producer], [consumer], [costs].
# --------------------------------------------------------------------------

_MARKET_KEYS = {"beta", "sigma", "mu_plus", "mu_minus"}
_PRODUCER_STRUCTURAL = {"c_p", "d0", "d1"}
_PRODUCER_DIRECT = {"a_p", "x1_p", "x2_p"}
_CONSUMER_STRUCTURAL = {"d0_prime", "d1_prime", "p0", "p1", "alpha", "c_c"}
_CONSUMER_DIRECT = {"a_c", "x1_c", "x2_c"}
_COST_KEYS = {"h_plus", "h_minus", "h0", "kappa0", "kappa1"}


def _require(table: dict, section: str, keys: set[str]) -> dict:
    missing = keys - table.keys()
    if missing:
        raise ConfigError(f"[{section}] missing key(s): {', '.join(sorted(missing))}")
    return {k: float(table[k]) for k in keys}


def _player_spec(table: dict, section: str, structural: set[str], direct: set[str]):
    keys = set(table.keys())
    if keys == structural:
        return _require(table, section, structural)
    if keys == direct:
        return _require(table, section, direct)
    bad = keys - structural - direct
    if bad:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(sorted(bad))}")
    raise ConfigError(
        f"[{section}] must be exactly the structural keys "
        f"{sorted(structural)} or the direct keys {sorted(direct)}"
    )


def params_from_dict(doc: dict) -> ModelParams:
    """Build ModelParams from a parsed config document."""
    for section in ("market", "producer", "consumer", "costs"):
        if section not in doc:
            raise ConfigError(f"missing section [{section}]")
    extra = set(doc) - {"market", "producer", "consumer", "costs"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    market = _require(doc["market"], "market", _MARKET_KEYS)
    bad = set(doc["market"]) - _MARKET_KEYS
    if bad:
        raise ConfigError(f"[market] unknown key(s): {', '.join(sorted(bad))}")

    pspec = _player_spec(doc["producer"], "producer", _PRODUCER_STRUCTURAL, _PRODUCER_DIRECT)
    if "c_p" in pspec:
        producer = ProducerCurve(pspec["c_p"], pspec["d0"], pspec["d1"])
    else:
        producer = DirectProfit(pspec["a_p"], pspec["x1_p"], pspec["x2_p"])

    cspec = _player_spec(doc["consumer"], "consumer", _CONSUMER_STRUCTURAL, _CONSUMER_DIRECT)
    if "alpha" in cspec:
        consumer = ConsumerCurve(
            cspec["d0_prime"], cspec["d1_prime"], cspec["p0"],
            cspec["p1"], cspec["alpha"], cspec["c_c"],
        )
    else:
        consumer = DirectProfit(cspec["a_c"], cspec["x1_c"], cspec["x2_c"])

    costs = dict(doc["costs"])
    bad = set(costs) - _COST_KEYS
    if bad:
        raise ConfigError(f"[costs] unknown key(s): {', '.join(sorted(bad))}")
    if "h0" in costs:
        if "h_plus" in costs or "h_minus" in costs:
            raise ConfigError("[costs] give either h0 or h_plus/h_minus, not both")
        h_plus = h_minus = float(costs["h0"])
    else:
        try:
            h_plus, h_minus = float(costs["h_plus"]), float(costs["h_minus"])
        except KeyError as exc:
            raise ConfigError(f"[costs] missing key: {exc.args[0]}") from None
    if "kappa0" not in costs:
        raise ConfigError("[costs] missing key: kappa0")

    return ModelParams(
        beta=market["beta"],
        sigma=market["sigma"],
        mu_plus=market["mu_plus"],
        mu_minus=market["mu_minus"],
        producer=producer,
        consumer=consumer,
        h_plus=h_plus,
        h_minus=h_minus,
        kappa0=float(costs["kappa0"]),
        kappa1=float(costs.get("kappa1", 0.0)),
    )


def load_config(path: str) -> ModelParams:
    """Parse a TOML config file into ModelParams.

    Syntax errors are reported with the line from the TOML parser; semantic
    errors name the offending section and key.
    """
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return params_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
