"""Small dense numerics shared by the best-response solvers.

The pasting systems are tiny (at most 4x4 linear cores inside a <=4
dimensional root-find) but can be badly scaled: exponentials e^{theta*x}
span many orders of magnitude across a band.  Solvers therefore work in a
shifted basis e^{theta*(x - ref)} with per-root reference points chosen so
basis values stay <= 1 on the band.
"""
from __future__ import annotations

import math

import numpy as np

_EXP_CAP = 500.0  # keeps stray Newton iterates finite; real solutions never get here


def exp_clipped(z):
    """exp with the argument capped; prevents overflow during line searches."""
    return np.exp(np.minimum(z, _EXP_CAP))


class ExpBasis:
    """Shifted two-exponential basis for one regime on one interval.

    phi1(x) = exp(theta1*(x - ref1)), phi2(x) = exp(theta2*(x - ref2)).
    With theta1 > 0 > theta2, choosing ref1 at the right end and ref2 at the
    left end of the interval keeps both factors in (0, 1] there.
    """

    __slots__ = ("theta1", "theta2", "ref1", "ref2")

    def __init__(self, theta1: float, theta2: float, ref1: float, ref2: float):
        self.theta1 = theta1
        self.theta2 = theta2
        self.ref1 = ref1
        self.ref2 = ref2

    def phi(self, x: float) -> np.ndarray:
        return np.array(
            [exp_clipped(self.theta1 * (x - self.ref1)),
             exp_clipped(self.theta2 * (x - self.ref2))]
        )

    def dphi(self, x: float) -> np.ndarray:
        return np.array(
            [self.theta1 * exp_clipped(self.theta1 * (x - self.ref1)),
             self.theta2 * exp_clipped(self.theta2 * (x - self.ref2))]
        )

    def d2phi(self, x: float) -> np.ndarray:
        return np.array(
            [self.theta1 ** 2 * exp_clipped(self.theta1 * (x - self.ref1)),
             self.theta2 ** 2 * exp_clipped(self.theta2 * (x - self.ref2))]
        )


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Partial-pivot solve with one round of iterative refinement."""
    x = np.linalg.solve(a, b)
    r = b - a @ x
    if np.all(np.isfinite(r)) and np.max(np.abs(r)) > 0:
        try:
            x = x + np.linalg.solve(a, r)
        except np.linalg.LinAlgError:
            pass
    return x


class SolverFailure(RuntimeError):
    """A nonlinear pasting system could not be solved to tolerance."""

    def __init__(self, message: str, x=None, residual=None):
        super().__init__(message)
        self.x = x
        self.residual = residual


def damped_newton(
    fun,
    x0,
    lo=None,
    hi=None,
    tol: float = 1e-11,
    max_iter: int = 120,
    fd_step: float = 1e-7,
):
    """Damped Newton with finite-difference Jacobian and box projection.

    Returns (x, max_abs_residual, converged).  `fun` may return non-finite
    values for bad iterates; the line search treats them as rejected steps.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    x = np.clip(x, lo, hi)

    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        return x, np.inf, False
    best_x, best_norm = x.copy(), np.max(np.abs(r))

    for _ in range(max_iter):
        norm = np.max(np.abs(r))
        if norm < tol:
            return x, norm, True
        jac = np.empty((n, n))
        singular = False
        for j in range(n):
            h = fd_step * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            rp = np.asarray(fun(xp), dtype=float)
            if not np.all(np.isfinite(rp)):
                xp[j] = x[j] - h
                rp = np.asarray(fun(xp), dtype=float)
                if not np.all(np.isfinite(rp)):
                    singular = True
                    break
                jac[:, j] = (r - rp) / h
            else:
                jac[:, j] = (rp - r) / h
        if singular:
            break
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam, accepted = 1.0, False
        for _ in range(60):
            xn = np.clip(x + lam * step, lo, hi)
            rn = np.asarray(fun(xn), dtype=float)
            if np.all(np.isfinite(rn)) and np.max(np.abs(rn)) < norm:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        x, r = xn, rn
        if np.max(np.abs(r)) < best_norm:
            best_x, best_norm = x.copy(), np.max(np.abs(r))

    return best_x, best_norm, best_norm < 1e-8


def multistart_newton(fun, seeds, lo=None, hi=None, tol: float = 1e-11):
    """Try Newton from several seeds; return the first converged root.

    Falls back to the best near-miss if nothing reaches tolerance.
    """
    best = None
    for seed in seeds:
        x, norm, ok = damped_newton(fun, seed, lo=lo, hi=hi, tol=tol)
        if ok:
            return x, norm, True
        if best is None or norm < best[1]:
            best = (x, norm)
    return best[0], best[1], False


def grid_seeds(lo, hi, per_axis: int):
    """Cartesian grid of seed points strictly inside the box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [np.linspace(l, h, per_axis + 2)[1:-1] for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def bracketed_roots(fun, lo: float, hi: float, n_scan: int = 200) -> list[float]:
    """All scalar roots found by a sign-change scan plus bisection refinement."""
    xs = np.linspace(lo, hi, n_scan)
    roots: list[float] = []
    prev_x, prev_f = None, None
    for x in xs:
        f = fun(x)
        if not math.isfinite(f):
            prev_x, prev_f = None, None
            continue
        if f == 0.0:
            roots.append(float(x))
        elif prev_f is not None and (prev_f < 0) != (f < 0):
            a, fa, b = prev_x, prev_f, x
            hit = None
            for _ in range(100):
                m = 0.5 * (a + b)
                fm = fun(m)
                if not math.isfinite(fm):
                    break
                if fm == 0.0:
                    hit = m
                    break
                if (fa < 0) != (fm < 0):
                    b = m
                else:
                    a, fa = m, fm
            roots.append(float(hit if hit is not None else 0.5 * (a + b)))
        prev_x, prev_f = x, f
    return roots


def bracketed_root(fun, lo: float, hi: float, n_scan: int = 200):
    """First root of a sign-change scan, or None when none exists."""
    roots = bracketed_roots(fun, lo, hi, n_scan)
    return roots[0] if roots else None
