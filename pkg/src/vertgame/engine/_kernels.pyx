# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Mirrors ``pykernels`` operation-for-operation (same arithmetic on the same
normal buffers => bit-identical trajectories); see that module for the
step semantics and the event codes.  The parameter vector layout is
documented in ``engine/__init__.py``.
"""
from libc.math cimport sqrt, exp, fabs, INFINITY


cdef inline int _primary_event(const double* s, int r, double xn,
                               double* pre, double* post, int* r_new) noexcept nogil:
    cdef double up_p, up_t, up_c, dn_p, dn_t, dn_c
    if r == 0:
        up_p = s[5]; up_t = s[6]; up_c = s[12]
        dn_p = s[3]; dn_t = s[4]; dn_c = -INFINITY
    else:
        up_p = s[9]; up_t = s[10]; up_c = INFINITY
        dn_p = s[7]; dn_t = s[8]; dn_c = s[11]
    if xn >= up_p or xn >= up_c:
        if up_p <= up_c:
            pre[0] = up_p; post[0] = up_t; r_new[0] = r
            return 2
        pre[0] = up_c; post[0] = up_c; r_new[0] = 1
        return 4
    if xn <= dn_p or xn <= dn_c:
        if dn_p >= dn_c:
            pre[0] = dn_p; post[0] = dn_t; r_new[0] = r
            return 1
        pre[0] = dn_c; post[0] = dn_c; r_new[0] = 0
        return 3
    return 0


cdef inline int _followup_event(const double* s, int r, double x,
                                double* pre, double* post, int* r_new) noexcept nogil:
    cdef int code = _primary_event(s, r, x, pre, post, r_new)
    if code == 0:
        return 0
    if code >= 3:
        pre[0] = x; post[0] = x
    else:
        pre[0] = x
    return code


def run_stats_chunk(const double[::1] spec, const double[::1] z,
                    double[::1] state, double[::1] acc, long long[:, ::1] hist,
                    double hist_lo, double hist_dx):
    cdef double mu_plus = spec[0], mu_minus = spec[1], sigma = spec[2]
    cdef double dt = spec[24]
    cdef double sig_sq = sigma * sqrt(dt)
    cdef Py_ssize_t nbins = hist.shape[1]
    cdef double x = state[0]
    cdef int r = <int>state[1]
    cdef long long burn = <long long>state[2]
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double mu, xn, xd, pre, post
    cdef int code, r_new, guard
    cdef Py_ssize_t b
    cdef const double* s = &spec[0]
    for i in range(n):
        if burn <= 0:
            acc[0] += dt
            xd = x * dt
            acc[1] += xd
            acc[2] += xd * x
            acc[3] += xd * x * x
            acc[4] += xd * x * x * x
            if r == 0:
                acc[5] += dt
            b = <Py_ssize_t>((x - hist_lo) / hist_dx)
            if b < 0:
                b = 0
            elif b >= nbins:
                b = nbins - 1
            hist[r, b] += 1
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        code = _primary_event(s, r, xn, &pre, &post, &r_new)
        if code == 0:
            x = xn
        else:
            for guard in range(3):
                r = r_new
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
                code = _followup_event(s, r, x, &pre, &post, &r_new)
                if code == 0:
                    break
        if burn > 0:
            burn -= 1
    state[0] = x
    state[1] = <double>r
    state[2] = <double>burn


def run_payoff_chunk(const double[::1] spec, const double[::1] z, double[::1] state):
    cdef double mu_plus = spec[0], mu_minus = spec[1], sigma = spec[2]
    cdef double kappa0 = spec[13], kappa1 = spec[14]
    cdef double h_plus = spec[15], h_minus = spec[16]
    cdef double gp0 = spec[17], gp1 = spec[18], gp2 = spec[19]
    cdef double gc0 = spec[20], gc1 = spec[21], gc2 = spec[22]
    cdef double beta = spec[23], dt = spec[24]
    cdef double sig_sq = sigma * sqrt(dt)
    cdef double decay = exp(-beta * dt)
    cdef double x = state[0]
    cdef int r = <int>state[1]
    cdef double disc = state[2]
    cdef double pay_p = state[3]
    cdef double pay_c = state[4]
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double mu, xn, pre, post
    cdef int code, r_new, guard
    cdef const double* s = &spec[0]
    for i in range(n):
        pay_p += disc * (gp0 + gp1 * x + gp2 * x * x) * dt
        pay_c += disc * (gc0 + gc1 * x + gc2 * x * x) * dt
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        disc *= decay
        code = _primary_event(s, r, xn, &pre, &post, &r_new)
        if code == 0:
            x = xn
        else:
            for guard in range(3):
                r = r_new
                if code <= 2:
                    pay_p -= disc * (kappa0 + kappa1 * fabs(pre - post))
                elif code == 4:
                    pay_c -= disc * h_plus
                else:
                    pay_c -= disc * h_minus
                x = post
                code = _followup_event(s, r, x, &pre, &post, &r_new)
                if code == 0:
                    break
    state[0] = x
    state[1] = <double>r
    state[2] = disc
    state[3] = pay_p
    state[4] = pay_c


def run_path_chunk(const double[::1] spec, const double[::1] z, double[::1] state,
                   double t0, double[::1] ev_t, long long[::1] ev_kind,
                   double[::1] ev_pre, double[::1] ev_post, long long[::1] n_ev,
                   double[::1] xs_out, long long sample_every):
    cdef double mu_plus = spec[0], mu_minus = spec[1], sigma = spec[2]
    cdef double dt = spec[24]
    cdef double sig_sq = sigma * sqrt(dt)
    cdef Py_ssize_t cap = ev_t.shape[0]
    cdef Py_ssize_t nxs = xs_out.shape[0]
    cdef double x = state[0]
    cdef int r = <int>state[1]
    cdef long long gstep = <long long>state[2]
    cdef Py_ssize_t k = <Py_ssize_t>n_ev[0]
    cdef Py_ssize_t i, n = z.shape[0]
    cdef long long j
    cdef double mu, xn, t_now, pre, post
    cdef int code, r_new, guard, stop
    cdef const double* s = &spec[0]
    for i in range(n):
        if sample_every > 0 and gstep % sample_every == 0:
            j = gstep // sample_every
            if 0 <= j < nxs:
                xs_out[j] = x
        mu = mu_plus if r == 0 else mu_minus
        xn = x + mu * dt + sig_sq * z[i]
        t_now = t0 + (gstep + 1) * dt
        code = _primary_event(s, r, xn, &pre, &post, &r_new)
        if code == 0:
            x = xn
        else:
            stop = 0
            for guard in range(3):
                r = r_new
                x = post
                if k >= cap:
                    stop = 1
                    break
                ev_t[k] = t_now
                ev_kind[k] = code
                ev_pre[k] = pre
                ev_post[k] = post
                k += 1
                code = _followup_event(s, r, x, &pre, &post, &r_new)
                if code == 0:
                    break
            if stop:
                state[0] = x
                state[1] = <double>r
                state[2] = <double>gstep
                n_ev[0] = k
                return i
        gstep += 1
    state[0] = x
    state[1] = <double>r
    state[2] = <double>gstep
    n_ev[0] = k
    return n
