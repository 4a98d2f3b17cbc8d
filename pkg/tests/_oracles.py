"""Independent Monte Carlo and quadrature oracles used only by tests.

These deliberately share no code with the production kernels: the exit
sampler is a vectorized Euler scheme with Brownian-bridge crossing checks,
and the stationary-law oracle integrates closed-form occupation densities.
"""
import math

import numpy as np

from vertgame.dynamics import _effective_levels


def mc_exit_oracle(x0, a, b, mu, sigma, n_paths=40000, dt=1e-3, seed=0, t_max=400.0):
    """Estimate (P[hit a first], E[exit time]) for drifting BM on (a, b).

    Returns (p_low, se_p, mean_t, se_t).  Bridge-corrected crossing detection
    keeps the discretization bias far below the Monte Carlo error.
    """
    rng = np.random.default_rng(seed)
    x = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    exit_low = np.zeros(n_paths, dtype=bool)
    exit_t = np.zeros(n_paths)
    sig_sq = sigma * math.sqrt(dt)
    var = sigma * sigma * dt
    n_steps = int(t_max / dt)
    t = 0.0
    for step in range(n_steps):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        z = rng.standard_normal(idx.size)
        u = rng.random(idx.size)
        xo = x[idx]
        xn = xo + mu * dt + sig_sq * z
        hit_low = xn <= a
        hit_high = xn >= b
        interior = ~hit_low & ~hit_high
        # bridge crossing probabilities within the step
        p_lo = np.zeros(idx.size)
        p_hi = np.zeros(idx.size)
        p_lo[interior] = np.exp(-2.0 * (xo[interior] - a) * (xn[interior] - a) / var)
        p_hi[interior] = np.exp(-2.0 * (b - xo[interior]) * (b - xn[interior]) / var)
        bridge_lo = interior & (u < p_lo)
        bridge_hi = interior & ~bridge_lo & (u < p_lo + p_hi)
        low = hit_low | bridge_lo
        high = hit_high | bridge_hi
        done = low | high
        gid = idx[done]
        exit_low[gid] = low[done]
        exit_t[gid] = t + 0.5 * dt
        alive[gid] = False
        keep = idx[~done]
        x[keep] = xn[~done]
        t += dt
    if alive.any():  # truncated paths: count as high-side exits at t_max
        exit_t[alive] = t_max
    p = exit_low.astype(float)
    p_low = p.mean()
    se_p = p.std(ddof=1) / math.sqrt(n_paths)
    mean_t = exit_t.mean()
    se_t = exit_t.std(ddof=1) / math.sqrt(n_paths)
    return p_low, se_p, mean_t, se_t


def occupation_density(xs, z, a, b, mu, sigma):
    """Expected time spent at xs by drifting BM from z before exiting (a, b)."""
    k = 2.0 * mu / (sigma * sigma)

    def scale(t):
        if abs(k) < 1e-14:
            return t - a
        return -math.expm1(-k * (t - a)) / k

    sa, sb, sz = scale(a), scale(b), scale(z)
    out = np.empty_like(xs, dtype=float)
    for i, x in enumerate(xs):
        sx = scale(float(x))
        speed = 2.0 * math.exp(k * (float(x) - a)) / (sigma * sigma)
        lo, hi = min(sx, sz), max(sx, sz)
        out[i] = (lo - sa) * (sb - hi) * speed / (sb - sa)
    return out


def monitoring_bias_allowance(pair, params, chain, dt):
    """Predicted |shift| of each invariant frequency under discrete monitoring.

    A path observed every dt behaves like one with barriers pushed outward
    by 0.5826*sigma*sqrt(dt) while restart points stay exact (events are
    applied at clamped threshold values).  Returns the per-state absolute
    difference between that biased chain's invariant law and the exact one.
    """
    from vertgame.dynamics import hitting_prob

    delta = 0.5826 * params.sigma * math.sqrt(dt)
    lo, lot = pair.producer_plus.lo, pair.producer_plus.lo_target
    hi, hit = pair.producer_minus.hi, pair.producer_minus.hi_target
    yl, yh = pair.y_low, pair.y_high
    bp = (lo - delta, yh + delta)
    bm = (yl - delta, hi + delta)
    P = np.zeros((4, 4))  # S+, S-, I_lo+, I_hi-
    p = hitting_prob(yl, *bp, params.mu_plus, params.sigma)
    P[0, 2], P[0, 1] = p, 1 - p
    p = hitting_prob(lot, *bp, params.mu_plus, params.sigma)
    P[2, 2], P[2, 1] = p, 1 - p
    p = hitting_prob(yh, *bm, params.mu_minus, params.sigma)
    P[1, 0], P[1, 3] = p, 1 - p
    p = hitting_prob(hit, *bm, params.mu_minus, params.sigma)
    P[3, 0], P[3, 3] = p, 1 - p
    a = P.T - np.eye(4)
    a[-1, :] = 1.0
    b = np.zeros(4)
    b[-1] = 1.0
    biased = np.linalg.solve(a, b)
    names = ["S_plus", "S_minus", "I_lo_plus", "I_hi_minus"]
    idx = {s: i for i, s in enumerate(chain.states)}
    out = np.zeros(len(chain.states))
    for j, name in enumerate(names):
        out[idx[name]] = abs(biased[j] - chain.pi[idx[name]])
    return out


def exact_stationary_moments(pair, params, chain, n_grid=4001):
    """Stationary price moments from the jump chain and occupation densities.

    Independent of any simulation: a quadrature over closed-form formulas.
    Returns dict with mean, std, moments (m1..m4), rho_plus, cycle_time.
    """
    idx = {s: i for i, s in enumerate(chain.states)}
    starts = {
        "S_plus": (pair.y_low, "plus"),
        "S_minus": (pair.y_high, "minus"),
        "I_lo_plus": (pair.producer_plus.lo_target, "plus"),
        "I_hi_plus": (pair.producer_plus.hi_target, "plus"),
        "I_lo_minus": (pair.producer_minus.lo_target, "minus"),
        "I_hi_minus": (pair.producer_minus.hi_target, "minus"),
    }
    num = np.zeros(5)
    den = 0.0
    plus_time = 0.0
    for name, (z, regime) in starts.items():
        w = chain.pi[idx[name]]
        if w == 0 or z is None or not math.isfinite(z):
            continue
        (lo, _), (hi, _) = _effective_levels(pair, regime)
        xs = np.linspace(lo, hi, n_grid)
        g = occupation_density(xs, z, lo, hi, params.mu(regime), params.sigma)
        for p in range(5):
            num[p] += w * np.trapezoid(g * xs ** p, xs)
        den += w * np.trapezoid(g, xs)
        if regime == "plus":
            plus_time += w * np.trapezoid(g, xs)
    m = num[1:] / den
    var = m[1] - m[0] ** 2
    return {
        "mean": m[0],
        "std": math.sqrt(max(var, 0.0)),
        "moments": m,
        "rho_plus": plus_time / den,
        "cycle_time": den,
    }
