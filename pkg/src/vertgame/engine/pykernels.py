"""Pure-Python reference kernels.

Semantically identical to the Cython loops in ``_kernels.pyx`` (same
arithmetic in the same order on the same normal buffers, hence bit-equal
results), roughly two orders of magnitude slower.  They keep the package
usable without a compiler and document the step semantics:

* one normal per step, price moves by mu*dt + sigma*sqrt(dt)*z;
* a crossed threshold is applied at the threshold value (the diffusion
  overshoot is discarded); the producer acts first on ties;
* after an event, follow-up triggers are checked at the *current* price, at
  most twice: an impulse landing in the switch region flips the regime on
  the spot, a switch landing in an impulse region fires that impulse from
  the switch price.

Event codes: 1 impulse up, 2 impulse down, 3 switch to expansion,
4 switch to contraction.
"""
from __future__ import annotations

import math


def _primary_event(spec, r, xn):
    """First threshold crossed by the move to xn, producer first on ties.

    Returns (code, pre, post, new_regime) with pre clamped to the threshold,
    or None when no threshold is crossed.
    """
    if r == 0:
        up_p, up_t = spec[5], spec[6]
        up_c = spec[12]
        dn_p, dn_t = spec[3], spec[4]
        dn_c = -math.inf
    else:
        up_p, up_t = spec[9], spec[10]
        up_c = math.inf
        dn_p, dn_t = spec[7], spec[8]
        dn_c = spec[11]
    if xn >= up_p or xn >= up_c:
        if up_p <= up_c:
            return (2, up_p, up_t, r)
        return (4, up_c, up_c, 1)
    if xn <= dn_p or xn <= dn_c:
        if dn_p >= dn_c:
            return (1, dn_p, dn_t, r)
        return (3, dn_c, dn_c, 0)
    return None


def _followup_event(spec, r, x):
    """Trigger check at the current price: events act from x, not a clamp."""
    ev = _primary_event(spec, r, x)
    if ev is None:
        return None
    code, _pre, post, r_new = ev
    if code >= 3:  # switch: price continuous at x
        return (code, x, x, r_new)
    return (code, x, post, r_new)


def run_stats_chunk(spec, z, state, acc, hist, hist_lo, hist_dx):
    """Advance one path by len(z) steps, accumulating long-run statistics.

    state = [x, regime, burn_steps_left]; acc and hist are updated in
    place (layout in engine.__init__).
    """
    mu_plus, mu_minus, sigma = spec[0], spec[1], spec[2]
    dt = spec[24]
    sig_sq = sigma * math.sqrt(dt)
    nbins = hist.shape[1]
    x = state[0]
    r = int(state[1])
    burn = int(state[2])
    for i in range(z.shape[0]):
        if burn <= 0:
            acc[0] += dt
            xd = x * dt
            acc[1] += xd
            acc[2] += xd * x
            acc[3] += xd * x * x
            acc[4] += xd * x * x * x
            if r == 0:
                acc[5] += dt
            b = int((x - hist_lo) / hist_dx)
            if b < 0:
                b = 0
            elif b >= nbins:
                b = nbins - 1
            hist[r, b] += 1
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        ev = _primary_event(spec, r, xn)
        if ev is None:
            x = xn
        else:
            for _ in range(3):
                code, _pre, post, r = ev
                x = post
                if burn <= 0:
                    if code == 3:
                        acc[6] += 1.0
                    elif code == 4:
                        acc[7] += 1.0
                    elif code == 1:
                        acc[8 if r == 0 else 10] += 1.0
                    else:
                        acc[9 if r == 0 else 11] += 1.0
                ev = _followup_event(spec, r, x)
                if ev is None:
                    break
        if burn > 0:
            burn -= 1
    state[0] = x
    state[1] = float(r)
    state[2] = float(burn)


def run_payoff_chunk(spec, z, state):
    """Advance one path, accumulating both players' discounted payoffs.

    state = [x, regime, discount, payoff_producer, payoff_consumer].
    Profit accrues at the pre-step price; action costs are discounted at
    the end-of-step factor.
    """
    mu_plus, mu_minus, sigma = spec[0], spec[1], spec[2]
    kappa0, kappa1 = spec[13], spec[14]
    h_plus, h_minus = spec[15], spec[16]
    gp0, gp1, gp2 = spec[17], spec[18], spec[19]
    gc0, gc1, gc2 = spec[20], spec[21], spec[22]
    beta, dt = spec[23], spec[24]
    sig_sq = sigma * math.sqrt(dt)
    decay = math.exp(-beta * dt)
    x = state[0]
    r = int(state[1])
    disc = state[2]
    pay_p = state[3]
    pay_c = state[4]
    for i in range(z.shape[0]):
        pay_p += disc * (gp0 + gp1 * x + gp2 * x * x) * dt
        pay_c += disc * (gc0 + gc1 * x + gc2 * x * x) * dt
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        disc *= decay
        ev = _primary_event(spec, r, xn)
        if ev is None:
            x = xn
        else:
            for _ in range(3):
                code, pre, post, r = ev
                if code <= 2:
                    pay_p -= disc * (kappa0 + kappa1 * abs(pre - post))
                elif code == 4:
                    pay_c -= disc * h_plus
                else:
                    pay_c -= disc * h_minus
                x = post
                ev = _followup_event(spec, r, x)
                if ev is None:
                    break
    state[0] = x
    state[1] = float(r)
    state[2] = disc
    state[3] = pay_p
    state[4] = pay_c


def run_path_chunk(spec, z, state, t0, ev_t, ev_kind, ev_pre, ev_post, n_ev,
                   xs_out, sample_every):
    """Advance one path recording the event log and a sampled price series.

    Returns the number of steps consumed (smaller than len(z) only when the
    event buffer fills up).  Samples are the pre-step prices of steps
    0, sample_every, 2*sample_every, ... continuing across chunks through
    state[2] (the global step index).
    """
    mu_plus, mu_minus, sigma = spec[0], spec[1], spec[2]
    dt = spec[24]
    sig_sq = sigma * math.sqrt(dt)
    cap = ev_t.shape[0]
    x = state[0]
    r = int(state[1])
    gstep = int(state[2])
    k = int(n_ev[0])
    for i in range(z.shape[0]):
        if sample_every > 0 and gstep % sample_every == 0:
            j = gstep // sample_every
            if 0 <= j < xs_out.shape[0]:
                xs_out[j] = x
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        t_now = t0 + (gstep + 1) * dt
        ev = _primary_event(spec, r, xn)
        if ev is None:
            x = xn
        else:
            stop = False
            for _ in range(3):
                code, pre, post, r = ev
                x = post
                if k >= cap:
                    stop = True
                    break
                ev_t[k] = t_now
                ev_kind[k] = code
                ev_pre[k] = pre
                ev_post[k] = post
                k += 1
                ev = _followup_event(spec, r, x)
                if ev is None:
                    break
            if stop:
                state[0] = x
                state[1] = float(r)
                state[2] = float(gstep)
                n_ev[0] = k
                return i
        gstep += 1
    state[0] = x
    state[1] = float(r)
    state[2] = float(gstep)
    n_ev[0] = k
    return z.shape[0]
