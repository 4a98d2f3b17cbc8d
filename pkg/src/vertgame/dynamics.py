"""Equilibrium price dynamics: simulation, stationary law, jump chain.

Between interventions the price is a Brownian motion with drift, so the
sequence of interventions is a six-state Markov chain whose transition
probabilities and sojourn times have closed forms.  Everything empirical
(densities, long-run profit statistics, payoff oracles) runs through the
engine kernels with counter-based per-path substreams: results are
independent of the worker count and identical between the compiled and
pure-Python engines.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    ACC_LEN,
    EVENT_NAMES,
    engine_name,
    get_kernels,
    make_spec,
    path_generator,
)
from .model import ModelParams, build_profits
from .numerics import SolverFailure
from .values import StrategyPair

__all__ = [
    "hitting_prob",
    "expected_exit_time",
    "PathRecord",
    "simulate_path",
    "discounted_payoff_mc",
    "LongRunResult",
    "simulate_long_run",
    "stationary_density",
    "long_run_stats",
    "JumpChain",
    "build_jump_chain",
    "regime_occupation",
    "expected_switch_time",
]

CHAIN_STATES = ("S_plus", "S_minus", "I_lo_minus", "I_hi_minus", "I_lo_plus", "I_hi_plus")
_SEG_STEPS = 1 << 22  # normals generated per chunk (32 MB)
_PURPOSE_STATS = 1
_PURPOSE_PAYOFF = 2
_PURPOSE_PATH = 3


# ------------------------------------------------- closed-form BM quantities


def hitting_prob(x: float, a: float, b: float, mu: float, sigma: float) -> float:
    """P(drifting BM from x hits a before b); exact 1/0 outside (a, b).

    Evaluated through expm1 with non-positive exponents only, so it stays
    accurate for arbitrarily large |2*mu*(b-a)/sigma^2|.
    """
    if not a < b:
        raise ValueError(f"need a < b, got ({a}, {b})")
    if x <= a:
        return 1.0
    if x >= b:
        return 0.0
    k = 2.0 * mu / (sigma * sigma)
    u, w = x - a, b - a
    if abs(k) * w < 1e-12:
        return (b - x) / w
    if k > 0:
        # (e^{-ku} - e^{-kw}) / (1 - e^{-kw})
        return math.exp(-k * u) * (-math.expm1(-k * (w - u))) / (-math.expm1(-k * w))
    m = -k
    # (e^{-m(w-u)} - 1) / (e^{-mw} - 1)
    return math.expm1(-m * (w - u)) / math.expm1(-m * w)


def expected_exit_time(x: float, a: float, b: float, mu: float, sigma: float) -> float:
    """E[first exit time of (a, b)] for drifting BM from x (years)."""
    if not a < b:
        raise ValueError(f"need a < b, got ({a}, {b})")
    if x <= a or x >= b:
        return 0.0
    if abs(mu) * (b - a) < 1e-12 * sigma * sigma:
        return (x - a) * (b - x) / (sigma * sigma)
    p_low = hitting_prob(x, a, b, mu, sigma)
    return ((b - x) - (b - a) * p_low) / mu


# ------------------------------------------------------------- path records


@dataclass
class PathRecord:
    t: np.ndarray            # sample times (yr)
    x: np.ndarray            # sampled prices (USD)
    regime: np.ndarray       # sampled regimes ('plus'/'minus' as 0/1)
    events: list             # (time, kind, pre_price, post_price)
    dt: float
    seed: int
    x_end: float
    regime_end: str
    warnings: list = field(default_factory=list)

    def event_counts(self) -> dict:
        out = {name: 0 for name in EVENT_NAMES.values()}
        for _, kind, _, _ in self.events:
            out[kind] += 1
        return out


def _narrowest_band(pair: StrategyPair) -> float:
    widths = []
    for regime in ("plus", "minus"):
        lo, hi = _effective_levels(pair, regime)
        if math.isfinite(lo[0]) and math.isfinite(hi[0]):
            widths.append(hi[0] - lo[0])
    return min(widths) if widths else math.inf


def simulate_path(
    pair: StrategyPair,
    params: ModelParams,
    x0: float,
    regime0: str = "plus",
    horizon: float = 100.0,
    dt: float = 1.0 / 3650.0,
    seed: int = 0,
    sample_every: int | None = None,
    engine: str = "auto",
) -> PathRecord:
    """Single controlled path with a full event log.

    Deterministic in (seed, dt): the path substream and the stepping kernel
    do not depend on the engine or any parallel context.
    """
    kern = get_kernels(engine)
    spec = make_spec(params, pair, dt)
    n_steps = int(round(horizon / dt))
    if sample_every is None:
        sample_every = max(1, n_steps // 2000)
    n_samples = n_steps // sample_every + 1
    xs = np.full(n_samples, np.nan)
    cap = 64 + int(horizon * 4) + n_steps // 100
    ev_t = np.empty(cap)
    ev_kind = np.empty(cap, dtype=np.int64)
    ev_pre = np.empty(cap)
    ev_post = np.empty(cap)
    n_ev = np.zeros(1, dtype=np.int64)
    state = np.array([x0, 0.0 if regime0 == "plus" else 1.0, 0.0])
    rng = path_generator(seed, _PURPOSE_PATH, 0)
    done = 0
    while done < n_steps:
        z = rng.standard_normal(min(_SEG_STEPS, n_steps - done))
        used = kern.run_path_chunk(spec, z, state, 0.0, ev_t, ev_kind,
                                   ev_pre, ev_post, n_ev, xs, sample_every)
        done += used
        if used < len(z):  # event buffer full
            break
    k = int(n_ev[0])
    events = [
        (float(ev_t[i]), EVENT_NAMES[int(ev_kind[i])], float(ev_pre[i]), float(ev_post[i]))
        for i in range(k)
    ]
    t = np.arange(n_samples) * (sample_every * dt)
    regimes = _regimes_at(t, events, regime0)
    warnings = []
    width = _narrowest_band(pair)
    if math.isfinite(width) and params.sigma * math.sqrt(dt) > 0.1 * width:
        warnings.append(
            f"dt={dt:g} is coarse: per-step diffusion {params.sigma * math.sqrt(dt):.4g} "
            f"exceeds 10% of the narrowest band width {width:.4g}"
        )
    if done < n_steps:
        warnings.append(f"event buffer filled after {done} of {n_steps} steps")
    valid = ~np.isnan(xs)
    return PathRecord(
        t=t[valid], x=xs[valid], regime=regimes[valid], events=events,
        dt=dt, seed=seed, x_end=float(state[0]),
        regime_end="plus" if state[1] == 0.0 else "minus",
        warnings=warnings,
    )


def _regimes_at(t: np.ndarray, events: list, regime0: str) -> np.ndarray:
    """Reconstruct the regime series from switch events (exact)."""
    out = np.zeros(len(t), dtype=np.int64)
    cur = 0 if regime0 == "plus" else 1
    switches = [(tt, kind) for tt, kind, _, _ in events if kind.startswith("switch")]
    j = 0
    for i, ti in enumerate(t):
        while j < len(switches) and switches[j][0] <= ti:
            cur = 0 if switches[j][1] == "switch_to_plus" else 1
            j += 1
        out[i] = cur
    return out


# ---------------------------------------------------------- payoff oracle


@dataclass
class PayoffEstimate:
    producer_mean: float
    producer_se: float
    consumer_mean: float
    consumer_se: float
    n_paths: int
    horizon: float
    dt: float


def _payoff_worker(args):
    spec, x0, regime0_code, n_steps, seed, idx = args
    kern = get_kernels()
    state = np.array([x0, float(regime0_code), 1.0, 0.0, 0.0])
    rng = path_generator(seed, _PURPOSE_PAYOFF, idx)
    done = 0
    while done < n_steps:
        z = rng.standard_normal(min(_SEG_STEPS, n_steps - done))
        kern.run_payoff_chunk(spec, z, state)
        done += len(z)
    return idx, float(state[3]), float(state[4])


def discounted_payoff_mc(
    pair: StrategyPair,
    params: ModelParams,
    x0: float,
    regime0: str = "plus",
    horizon: float = 80.0,
    n_paths: int = 2000,
    dt: float = 1.0 / 1200.0,
    seed: int = 0,
    workers: int | None = None,
    engine: str = "auto",
) -> PayoffEstimate:
    """Monte Carlo estimate of both players' discounted payoffs from (x0, regime0).

    The cross-module oracle: analytic value functions must match these
    estimates within a few standard errors.
    """
    spec = make_spec(params, pair, dt)
    n_steps = int(round(horizon / dt))
    code = 0 if regime0 == "plus" else 1
    tasks = [(spec, x0, code, n_steps, seed, i) for i in range(n_paths)]
    rows = _run_pool(_payoff_worker, tasks, workers, engine)
    pay_p = np.array([r[1] for r in sorted(rows)])
    pay_c = np.array([r[2] for r in sorted(rows)])
    return PayoffEstimate(
        producer_mean=math.fsum(pay_p) / n_paths,
        producer_se=float(np.std(pay_p, ddof=1) / math.sqrt(n_paths)),
        consumer_mean=math.fsum(pay_c) / n_paths,
        consumer_se=float(np.std(pay_c, ddof=1) / math.sqrt(n_paths)),
        n_paths=n_paths, horizon=horizon, dt=dt,
    )


def _run_pool(worker, tasks, workers, engine):
    """Run per-path tasks, serially or in a fork pool; order-independent."""
    if engine != "auto":
        import os
        os.environ["VERTGAME_ENGINE"] = engine  # workers inherit via fork
    n = len(tasks)
    if workers is None:
        workers = min(mp.cpu_count(), n)
    if workers <= 1 or n == 1:
        out = [worker(t) for t in tasks]
    else:
        ctx = mp.get_context("fork")
        with ctx.Pool(workers) as pool:
            out = pool.map(worker, tasks, chunksize=max(1, n // (4 * workers)))
    if engine != "auto":
        import os
        os.environ.pop("VERTGAME_ENGINE", None)
    return out


# ------------------------------------------------------- long-run sampling


@dataclass
class LongRunResult:
    pair: StrategyPair
    per_path: np.ndarray       # (n_paths, ACC_LEN)
    hist: np.ndarray           # (2, bins) int64 step counts by regime
    bin_edges: np.ndarray
    years: float               # post-burn-in years aggregated
    dt: float
    seed: int
    n_paths: int

    def totals(self) -> np.ndarray:
        return np.array([math.fsum(self.per_path[:, j]) for j in range(ACC_LEN)])


def _stats_worker(args):
    spec, x0, regime0_code, n_steps, burn_steps, seed, idx, bins, h_lo, h_dx = args
    kern = get_kernels()
    state = np.array([x0, float(regime0_code), float(burn_steps)])
    acc = np.zeros(ACC_LEN)
    hist = np.zeros((2, bins), dtype=np.int64)
    rng = path_generator(seed, _PURPOSE_STATS, idx)
    total = n_steps + burn_steps
    done = 0
    while done < total:
        z = rng.standard_normal(min(_SEG_STEPS, total - done))
        kern.run_stats_chunk(spec, z, state, acc, hist, h_lo, h_dx)
        done += len(z)
    return idx, acc, hist


def _start_point(pair: StrategyPair, regime: str) -> float:
    lo, hi = _effective_levels(pair, regime)
    lo_v = lo[0] if math.isfinite(lo[0]) else hi[0] - 1.0
    hi_v = hi[0] if math.isfinite(hi[0]) else lo[0] + 1.0
    return 0.5 * (lo_v + hi_v)


def simulate_long_run(
    pair: StrategyPair,
    params: ModelParams,
    years: float = 1e6,
    burn_in: float | None = None,
    dt: float = 1.0 / 365.0,
    n_paths: int = 64,
    seed: int = 0,
    bins: int = 400,
    hist_range: tuple[float, float] | None = None,
    x0: float | None = None,
    regime0: str = "plus",
    workers: int | None = None,
    engine: str = "auto",
) -> LongRunResult:
    """Aggregate `years` of post-burn-in simulation over parallel paths.

    Requires an ergodic configuration: every regime reachable from regime0
    must have a bounded effective band.
    """
    _check_ergodic(pair, regime0)
    if burn_in is None:
        burn_in = 50.0 / params.beta
    if hist_range is None:
        los, his = [], []
        for reg in ("plus", "minus"):
            lo, hi = _effective_levels(pair, reg)
            if math.isfinite(lo[0]):
                los.append(lo[0])
            if math.isfinite(hi[0]):
                his.append(hi[0])
        pad = 0.02 * (max(his) - min(los))
        hist_range = (min(los) - pad, max(his) + pad)
    if x0 is None:
        x0 = _start_point(pair, regime0)
    spec = make_spec(params, pair, dt)
    steps_per_path = int(round(years / n_paths / dt))
    burn_steps = int(round(burn_in / dt))
    h_lo, h_hi = hist_range
    h_dx = (h_hi - h_lo) / bins
    code = 0 if regime0 == "plus" else 1
    tasks = [
        (spec, x0, code, steps_per_path, burn_steps, seed, i, bins, h_lo, h_dx)
        for i in range(n_paths)
    ]
    rows = _run_pool(_stats_worker, tasks, workers, engine)
    rows.sort(key=lambda r: r[0])
    per_path = np.stack([r[1] for r in rows])
    hist = np.zeros((2, bins), dtype=np.int64)
    for _, _, h in rows:
        hist += h
    return LongRunResult(
        pair=pair, per_path=per_path, hist=hist,
        bin_edges=np.linspace(h_lo, h_hi, bins + 1),
        years=steps_per_path * dt * n_paths, dt=dt, seed=seed, n_paths=n_paths,
    )


def _check_ergodic(pair: StrategyPair, regime0: str) -> None:
    reachable = {regime0}
    if regime0 == "plus":
        lo, hi = _effective_levels(pair, "plus")
        if hi[1] == "S_minus":
            reachable.add("minus")
    if regime0 == "minus" or "minus" in reachable:
        lo, hi = _effective_levels(pair, "minus")
        if lo[1] == "S_plus":
            reachable.add("plus")
    for reg in reachable:
        lo, hi = _effective_levels(pair, reg)
        if not (math.isfinite(lo[0]) and math.isfinite(hi[0])):
            raise SolverFailure(
                f"regime '{reg}' has an unbounded effective band {lo[0], hi[0]}; "
                "no stationary distribution"
            )


# ------------------------------------------------------ density and stats


@dataclass
class DensityTable:
    bin_left: np.ndarray
    bin_right: np.ndarray
    mass: np.ndarray
    mass_plus: np.ndarray
    mass_minus: np.ndarray
    smooth_x: np.ndarray
    smooth_density: np.ndarray


def stationary_density(result: LongRunResult) -> DensityTable:
    """Histogram estimate of the stationary law, plus a kernel-smoothed curve.

    mass = mass_plus + mass_minus; each column is the fraction of time spent
    in the bin (and regime).
    """
    total = result.hist.sum()
    if total == 0:
        raise ValueError("empty simulation result")
    mass_plus = result.hist[0] / total
    mass_minus = result.hist[1] / total
    mass = mass_plus + mass_minus
    edges = result.bin_edges
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    m1 = float((mass * centers).sum())
    std = math.sqrt(max(float((mass * centers**2).sum()) - m1 * m1, 1e-12))
    bw = max(1.06 * std * total ** -0.2, width)
    xs = np.linspace(edges[0], edges[-1], 4 * len(centers))
    dens = np.zeros_like(xs)
    for c, m in zip(centers, mass):
        if m > 0:
            dens += m * np.exp(-0.5 * ((xs - c) / bw) ** 2)
    dens /= bw * math.sqrt(2 * math.pi)
    return DensityTable(edges[:-1], edges[1:], mass, mass_plus, mass_minus, xs, dens)


def long_run_stats(result: LongRunResult, params: ModelParams) -> dict:
    """Long-run moments, profit statistics, and intervention frequencies.

    Profit expectations are exact polynomials in the time-weighted price
    moments; APOO is the mean profit rate relative to the peak rate.
    """
    tot = result.totals()
    t = tot[0]
    m = tot[1:5] / t  # time-weighted E[X], E[X^2], E[X^3], E[X^4]
    mean = m[0]
    var = m[1] - m[0] ** 2
    profit_p, profit_c = build_profits(params)

    def e_pi(g):
        return g.g0 + g.g1 * m[0] + g.g2 * m[1]

    def var_pi(g):
        # Var(g0 + g1 X + g2 X^2) from raw moments
        e1 = e_pi(g)
        e2 = (
            g.g0 ** 2
            + 2 * g.g0 * g.g1 * m[0]
            + (g.g1 ** 2 + 2 * g.g0 * g.g2) * m[1]
            + 2 * g.g1 * g.g2 * m[2]
            + g.g2 ** 2 * m[3]
        )
        return e2 - e1 ** 2

    def cov_pi(ga, gb):
        e_ab = (
            ga.g0 * gb.g0
            + (ga.g0 * gb.g1 + ga.g1 * gb.g0) * m[0]
            + (ga.g0 * gb.g2 + ga.g1 * gb.g1 + ga.g2 * gb.g0) * m[1]
            + (ga.g1 * gb.g2 + ga.g2 * gb.g1) * m[2]
            + ga.g2 * gb.g2 * m[3]
        )
        return e_ab - e_pi(ga) * e_pi(gb)

    switches = tot[6] + tot[7]
    impulses = tot[8] + tot[9] + tot[10] + tot[11]
    # per-path means for standard errors
    pp = result.per_path
    path_means = pp[:, 1] / pp[:, 0]
    n = result.n_paths
    return {
        "years": t,
        "mean": mean,
        "var": var,
        "std": math.sqrt(max(var, 0.0)),
        "moments": m.tolist(),
        "mean_se": float(np.std(path_means, ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "e_pi_p": e_pi(profit_p),
        "e_pi_c": e_pi(profit_c),
        "var_pi_p": var_pi(profit_p),
        "var_pi_c": var_pi(profit_c),
        "cov_pi": cov_pi(profit_p, profit_c),
        "apoo_p": e_pi(profit_p) / profit_p.peak,
        "apoo_c": e_pi(profit_c) / profit_c.peak,
        "rho_plus": tot[5] / t,
        "consumer_switches_per_yr": switches / t,
        "producer_impulses_per_yr": impulses / t,
        "event_counts": {
            "switch_to_plus": tot[6], "switch_to_minus": tot[7],
            "impulse_up_plus": tot[8], "impulse_down_plus": tot[9],
            "impulse_up_minus": tot[10], "impulse_down_minus": tot[11],
        },
    }


# -------------------------------------------------------------- jump chain


@dataclass
class JumpChain:
    states: tuple
    P: np.ndarray
    pi: np.ndarray
    zeta: np.ndarray
    recurrent: list
    start_points: dict
    diagnostics: dict = field(default_factory=dict)


def _effective_levels(pair: StrategyPair, regime: str):
    """((level, state) lower, (level, state) upper) that first bind in `regime`.

    Producer wins ties, matching the simulator's priority rule.
    """
    row = pair.producer_plus if regime == "plus" else pair.producer_minus
    lo_p = row.lo if (row and row.lo is not None) else -math.inf
    hi_p = row.hi if (row and row.hi is not None) else math.inf
    if regime == "plus":
        y = pair.y_high if pair.y_high is not None else math.inf
        upper = (hi_p, "I_hi_plus") if hi_p <= y else (y, "S_minus")
        lower = (lo_p, "I_lo_plus")
    else:
        y = pair.y_low if pair.y_low is not None else -math.inf
        lower = (lo_p, "I_lo_minus") if lo_p >= y else (y, "S_plus")
        upper = (hi_p, "I_hi_minus")
    return lower, upper


def build_jump_chain(pair: StrategyPair, params: ModelParams) -> JumpChain:
    """Embedded chain over intervention kinds, from closed-form BM quantities.

    Each state restarts the price at its post-event point inside the active
    band of its regime; rows follow from hit-lower-first probabilities.
    States whose defining threshold is infinite are unreachable and jump
    straight to the event that would fire immediately beyond them.
    """
    starts = {
        "S_plus": (pair.y_low, "plus"),
        "S_minus": (pair.y_high, "minus"),
        "I_lo_minus": (pair.producer_minus.lo_target, "minus"),
        "I_hi_minus": (pair.producer_minus.hi_target, "minus"),
        "I_lo_plus": (pair.producer_plus.lo_target, "plus"),
        "I_hi_plus": (pair.producer_plus.hi_target, "plus"),
    }
    n = len(CHAIN_STATES)
    idx = {s: i for i, s in enumerate(CHAIN_STATES)}
    P = np.zeros((n, n))
    zeta = np.zeros(n)
    for name, (z, regime) in starts.items():
        i = idx[name]
        (lo, lo_state), (hi, hi_state) = _effective_levels(pair, regime)
        if z is None or not math.isfinite(z):
            # unreachable state (its threshold is absent/infinite): from beyond
            # that side the opposite effective threshold fires with certainty
            upper_side = name in ("I_hi_plus", "I_hi_minus", "S_minus")
            level, target = (hi, hi_state) if upper_side else (lo, lo_state)
            if not math.isfinite(level):
                level, target = (lo, lo_state) if upper_side else (hi, hi_state)
            if not math.isfinite(level):
                raise SolverFailure(
                    f"state {name}: regime '{regime}' has no finite thresholds at all"
                )
            P[i, idx[target]] = 1.0
            continue
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise SolverFailure(
                f"state {name}: effective band ({lo}, {hi}) unbounded; "
                "jump chain needs a bounded band per regime"
            )
        mu = params.mu(regime)
        if z <= lo:
            P[i, idx[lo_state]] = 1.0
        elif z >= hi:
            P[i, idx[hi_state]] = 1.0
        else:
            p = hitting_prob(z, lo, hi, mu, params.sigma)
            P[i, idx[lo_state]] = p
            P[i, idx[hi_state]] = 1.0 - p
            zeta[i] = expected_exit_time(z, lo, hi, mu, params.sigma)

    recurrent, n_closed = _closed_class(P)
    if n_closed != 1:
        raise SolverFailure(
            f"jump chain has {n_closed} closed classes; expected exactly one "
            "(reducibility beyond the transient states)"
        )
    pi = np.zeros(n)
    sub = P[np.ix_(recurrent, recurrent)]
    k = len(recurrent)
    a = sub.T - np.eye(k)
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    sol = np.linalg.solve(a, b)
    sol = np.clip(sol, 0.0, None)
    sol /= sol.sum()
    for j, i in enumerate(recurrent):
        pi[i] = sol[j]
    residual = float(np.max(np.abs(pi @ P - pi)))
    return JumpChain(
        states=CHAIN_STATES, P=P, pi=pi, zeta=zeta,
        recurrent=[CHAIN_STATES[i] for i in recurrent],
        start_points={k_: v[0] for k_, v in starts.items()},
        diagnostics={"stationarity_residual": residual},
    )


def _closed_class(P: np.ndarray):
    """Indices of the unique closed communicating class (and how many exist)."""
    n = P.shape[0]
    reach = (P > 0) | np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | (reach @ reach)
    classes = []
    seen = set()
    for i in range(n):
        if i in seen:
            continue
        cls = [j for j in range(n) if reach[i, j] and reach[j, i]]
        seen.update(cls)
        # closed iff nothing outside the class is reachable from it
        if all(not reach[c, j] for c in cls for j in range(n) if j not in cls):
            classes.append(cls)
    if not classes:
        return list(range(n)), 0
    return classes[0], len(classes)


def regime_occupation(chain: JumpChain) -> tuple[float, float]:
    """Long-run fraction of time with expansion drift (and its complement)."""
    plus_states = ("S_plus", "I_lo_plus", "I_hi_plus")
    idx = {s: i for i, s in enumerate(chain.states)}
    total = float(chain.pi @ chain.zeta)
    if total <= 0:
        return 1.0, 0.0  # degenerate chain: absorbing regime convention
    up = sum(chain.pi[idx[s]] * chain.zeta[idx[s]] for s in plus_states)
    rho_plus = up / total
    return rho_plus, 1.0 - rho_plus


def expected_switch_time(
    pair: StrategyPair, params: ModelParams, x0: float, detail: bool = False
):
    """Expected time until the first switch out of expansion, from price x0.

    First-step analysis on the expansion layer of the jump chain: exits
    through the lower impulse renew the excursion from the impulse target.
    """
    (lo, lo_state), (hi, hi_state) = _effective_levels(pair, "plus")
    if hi_state != "S_minus":
        raise SolverFailure("expansion regime never switches (no finite y_high below hi_plus)")
    if lo_state != "I_lo_plus" or not math.isfinite(lo):
        raise SolverFailure("expansion regime needs a finite lower impulse threshold")
    mu, sig = params.mu_plus, params.sigma
    tgt = pair.producer_plus.lo_target
    e0 = expected_exit_time(x0, lo, hi, mu, sig)
    p0 = hitting_prob(x0, lo, hi, mu, sig)
    et = expected_exit_time(tgt, lo, hi, mu, sig)
    pt = hitting_prob(tgt, lo, hi, mu, sig)
    renew = et / (1.0 - pt)
    value = e0 + p0 * renew
    if not detail:
        return value
    return {
        "first_step": value,
        # literal reading with the impulse-state row probability
        "formula_I_lo_reading": e0 + p0 * et / (1.0 - pt),
        "formula_I_hi_reading": e0 + p0 * et,
    }
