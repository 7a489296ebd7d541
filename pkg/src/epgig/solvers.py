"""M-step solvers for weighted penalized least squares.

All solvers minimize

    (y - X b)^T W (y - X b) + sum_j w_j |b_j|^q,     q in {1, 2}

with W = diag(obs_weights).  Coordinates flagged ``pinned`` are held at
exactly zero (the w_j = inf case).
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit
from scipy import linalg

__all__ = [
    "SolverError",
    "SolverOptions",
    "SolveResult",
    "WeightedPenalizedLsProblem",
    "soft_threshold",
    "solve_weighted_l1",
    "solve_weighted_l2",
    "solve_grouped",
    "logistic_quadratic_approx",
    "W_FLOOR",
]

W_FLOOR = 1e-6


class SolverError(np.linalg.LinAlgError):
    pass


@dataclass
class SolverOptions:
    max_sweeps: int = 10_000
    tol: float = 1e-8
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


class SolveResult(NamedTuple):
    coef: np.ndarray
    sweeps: int
    converged: bool


@dataclass
class WeightedPenalizedLsProblem:
    X: np.ndarray
    y: np.ndarray
    coef_weights: np.ndarray
    obs_weights: Optional[np.ndarray] = None
    pinned: Optional[np.ndarray] = None
    q: int = 1
    _gram: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n, p = self.X.shape
        if self.y.shape != (n,):
            raise ValueError("y must have length n")
        w = np.asarray(self.coef_weights, dtype=float)
        if w.shape == ():
            w = np.full(p, float(w))
        if w.shape != (p,):
            raise ValueError("coef_weights must have length p")
        inf = np.isinf(w)
        self.pinned = inf if self.pinned is None else (np.asarray(self.pinned, dtype=bool) | inf)
        self.coef_weights = np.where(self.pinned, 0.0, w)
        if np.any(self.coef_weights < 0):
            raise ValueError("coef_weights must be >= 0")
        if self.obs_weights is None:
            self.obs_weights = np.ones(n)
        else:
            self.obs_weights = np.asarray(self.obs_weights, dtype=float)
            if self.obs_weights.shape != (n,) or np.any(self.obs_weights < 0):
                raise ValueError("obs_weights must be a nonnegative n-vector")
        if self.q not in (1, 2):
            raise ValueError("q must be 1 or 2")

    @property
    def gram(self):
        """(X^T W X, X^T W y, y^T W y), computed once."""
        if self._gram is None:
            xw = self.X * self.obs_weights[:, None]
            self._gram = (xw.T @ self.X, xw.T @ self.y, float(self.y @ (self.obs_weights * self.y)))
        return self._gram

    def objective(self, b):
        r = self.y - self.X @ b
        pen = np.abs(b[~self.pinned]) ** self.q @ self.coef_weights[~self.pinned]
        return float(r @ (self.obs_weights * r) + pen)

    def kkt_violation(self, b, tol):
        """Largest scaled violation of the l1 stationarity conditions (<= 0 means satisfied)."""
        G, c, _ = self.gram
        grad = 2.0 * (c - G @ b)
        slack = 2.0 * tol * np.diag(G)
        w = self.coef_weights
        active = (b != 0) & ~self.pinned
        zero = (b == 0) & ~self.pinned
        v = np.full(b.shape, -np.inf)
        v[active] = np.abs(grad[active] - w[active] * np.sign(b[active])) - slack[active]
        v[zero] = np.abs(grad[zero]) - w[zero] - slack[zero]
        return float(v.max()) if v.size else -np.inf


def soft_threshold(z, lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lambda must be >= 0")
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


@njit(cache=True)
def _cd_gram(G, c, w, pinned, b, max_sweeps, tol):
    p = b.shape[0]
    gb = G @ b
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if pinned[j]:
                continue
            a = G[j, j]
            old = b[j]
            if a <= 0.0:
                new = 0.0
            else:
                z = c[j] - gb[j] + a * old
                t = 0.5 * w[j]
                if z > t:
                    new = (z - t) / a
                elif z < -t:
                    new = (z + t) / a
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                b[j] = new
                for k in range(p):
                    gb[k] += G[k, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            # certify stationarity on a freshly computed gradient
            gb = G @ b
            ok = True
            for j in range(p):
                if pinned[j]:
                    continue
                g = 2.0 * (c[j] - gb[j])
                s = 2.0 * tol * G[j, j]
                if b[j] > 0.0:
                    r = abs(g - w[j])
                elif b[j] < 0.0:
                    r = abs(g + w[j])
                else:
                    r = abs(g) - w[j]
                if r > s:
                    ok = False
                    break
            if ok:
                return sweep, True
    return max_sweeps, False


@njit(cache=True)
def _cd_residual(X, ow, y, w, pinned, b, max_sweeps, tol):
    n, p = X.shape
    r = y - X @ b
    a = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += ow[i] * X[i, j] * X[i, j]
        a[j] = s
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if pinned[j]:
                continue
            old = b[j]
            if a[j] <= 0.0:
                new = 0.0
            else:
                z = a[j] * old
                for i in range(n):
                    z += ow[i] * X[i, j] * r[i]
                t = 0.5 * w[j]
                if z > t:
                    new = (z - t) / a[j]
                elif z < -t:
                    new = (z + t) / a[j]
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                b[j] = new
                for i in range(n):
                    r[i] -= X[i, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            r = y - X @ b
            ok = True
            for j in range(p):
                if pinned[j]:
                    continue
                g = 0.0
                for i in range(n):
                    g += ow[i] * X[i, j] * r[i]
                g *= 2.0
                s = 2.0 * tol * a[j]
                if b[j] > 0.0:
                    v = abs(g - w[j])
                elif b[j] < 0.0:
                    v = abs(g + w[j])
                else:
                    v = abs(g) - w[j]
                if v > s:
                    ok = False
                    break
            if ok:
                return sweep, True
    return max_sweeps, False


def _start(prob, opts):
    p = prob.X.shape[1]
    b = np.zeros(p) if opts.warm_start is None else np.array(opts.warm_start, dtype=float)
    b[prob.pinned] = 0.0
    return b


def solve_weighted_l1(prob, opts=None):
    """Cyclic coordinate descent for the q = 1 problem.

    Uses the cached Gram matrix when n >= p and running residuals otherwise.
    A run stops when the largest coordinate move is below ``tol`` and the
    subgradient conditions hold within ``tol * ||X_j||_W^2``.
    """
    opts = opts or SolverOptions()
    b = _start(prob, opts)
    n, p = prob.X.shape
    if n >= p:
        G, c, _ = prob.gram
        sweeps, ok = _cd_gram(G, c, prob.coef_weights, prob.pinned, b, opts.max_sweeps, opts.tol)
    else:
        X = np.ascontiguousarray(prob.X)
        sweeps, ok = _cd_residual(X, prob.obs_weights, prob.y, prob.coef_weights, prob.pinned, b,
                                  opts.max_sweeps, opts.tol)
    return SolveResult(b, int(sweeps), bool(ok))


def solve_weighted_l2(prob):
    """Generalized ridge: (X^T W X + diag(w)) b = X^T W y on the unpinned set."""
    G, c, _ = prob.gram
    p = G.shape[0]
    b = np.zeros(p)
    free = ~prob.pinned
    if not free.any():
        return SolveResult(b, 0, True)
    A = G[np.ix_(free, free)] + np.diag(prob.coef_weights[free])
    rhs = c[free]
    try:
        factor = linalg.cho_factor(A, check_finite=False)
        sol = linalg.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            "weighted ridge system is singular; give every free coefficient a positive weight "
            f"or drop collinear columns ({exc})"
        ) from None
    # one step of iterative refinement
    sol = sol + linalg.cho_solve(factor, rhs - A @ sol, check_finite=False)
    if not np.all(np.isfinite(sol)):
        raise SolverError("weighted ridge solve produced non-finite values")
    b[free] = sol
    return SolveResult(b, 1, True)


def solve_grouped(prob, groups, group_weights, opts=None):
    """Grouped penalty sum_l w_l ||b_l||_q^q, solved coordinatewise.

    Given the weights the penalty is separable, so each coordinate inherits
    its group's weight (an infinite weight pins the whole group).
    """
    w = np.empty(prob.X.shape[1])
    seen = np.zeros_like(w, dtype=bool)
    for idx, wl in zip(groups, np.asarray(group_weights, dtype=float)):
        w[idx] = wl
        seen[idx] = True
    if not seen.all():
        raise ValueError("groups must cover every coefficient")
    sub = WeightedPenalizedLsProblem(prob.X, prob.y, w, prob.obs_weights, prob.pinned, prob.q)
    sub._gram = prob._gram
    if prob.q == 1:
        return solve_weighted_l1(sub, opts)
    return solve_weighted_l2(sub)


def logistic_quadratic_approx(X, y, b):
    """Working response and IRLS weights of the logistic log-likelihood at ``b``."""
    eta = X @ b
    pi = 1.0 / (1.0 + np.exp(-eta))
    w = np.maximum(pi * (1.0 - pi), W_FLOOR)
    return eta + (y - pi) / w, w
