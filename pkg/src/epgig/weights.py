"""E-step weights E(eta^-1 | b) and the penalties they linearize.

Weight arrays use ``np.inf`` to mark a coefficient pinned at zero (a
reweighted-l1 weight of 1/|b| at b = 0).  Solvers never see the infinity:
``split_pinned`` turns it into a boolean mask at the solver boundary.
"""

import math
from dataclasses import dataclass

import numpy as np

from .distributions import PriorSpec, Variant, epgig_log_density
from .specfun import bessel_ratio_q

__all__ = [
    "WeightContext",
    "estep_weight",
    "jeffreys_weight",
    "bridge_prior_weight",
    "split_pinned",
    "penalty_value",
    "reweight_omega",
    "monotonicity_violations",
]

_ORDER_TOL = 1e-12


@dataclass(frozen=True)
class WeightContext:
    prior: PriorSpec
    sigma: float = 1.0
    group_size: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")

    @property
    def order(self):
        """Index of the GIG posterior, (gamma q - p_l) / q."""
        q = self.prior.q
        return (self.prior.gamma * q - self.group_size) / q


def _closed_form(nu, alpha, t):
    if abs(nu - 0.5) < _ORDER_TOL:
        return np.sqrt(alpha / t)
    root = np.sqrt(alpha * t)
    if abs(nu + 0.5) < _ORDER_TOL:
        return (1.0 + root) / t
    if abs(nu + 1.5) < _ORDER_TOL:
        return 3.0 / t + alpha / (1.0 + root)
    return None


def estep_weight(s, ctx, closed_form=True):
    """E(eta^-1 | b) for raw ``s`` = |b|^q (or ||b_l||_q^q for a group).

    The posterior is GIG(nu, beta + s / sigma, alpha) with
    nu = (gamma q - p_l) / q, giving alpha Q_nu(alpha (beta + s / sigma)).
    Posterior orders 1/2, -1/2 and -3/2 use elementary closed forms unless
    ``closed_form`` is False.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be >= 0")
    prior = ctx.prior
    if prior.variant is Variant.JEFFREYS:
        with np.errstate(divide="ignore"):
            out = 2.0 * ctx.group_size / (prior.q * (s / ctx.sigma))
        return float(out) if out.ndim == 0 else out
    nu = ctx.order
    alpha = prior.alpha
    t = prior.beta + s / ctx.sigma
    out = np.empty(s.shape)
    pos = t > 0
    if alpha == 0:
        # inverse-gamma posterior IG(-nu, t/2): mean of 1/eta is -2 nu / t
        out[pos] = -2.0 * nu / t[pos]
    else:
        tp = t[pos]
        cf = _closed_form(nu, alpha, tp) if closed_form else None
        out[pos] = cf if cf is not None else alpha * bessel_ratio_q(nu, alpha * tp)
    if (~pos).any():
        # beta = 0 and s = 0: gamma posterior G(nu, alpha/2); E(1/eta) is finite only for nu > 1
        out[~pos] = alpha / (2.0 * (nu - 1.0)) if nu > 1.0 else np.inf
    return float(out) if out.ndim == 0 else out


def jeffreys_weight(b, q, sigma=1.0):
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        out = 2.0 * sigma / (q * np.abs(b) ** q)
    return float(out) if out.ndim == 0 else out


def bridge_prior_weight(b, alpha, sigma=1.0):
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.sqrt(alpha * sigma / np.abs(b))
    return float(out) if out.ndim == 0 else out


def split_pinned(w):
    """(finite weights with zeros at pinned slots, pinned mask)."""
    w = np.asarray(w, dtype=float)
    pinned = np.isinf(w)
    return np.where(pinned, 0.0, w), pinned


def penalty_value(b, prior, b_ref=1.0):
    """-ln p(b), shifted so the penalty vanishes at b = 0 where p(0) is finite.

    Singular-at-origin priors are returned unshifted; the Jeffreys penalty is
    reported as ln|b| - ln|b_ref|.
    """
    b = np.asarray(b, dtype=float)
    if prior.variant is Variant.JEFFREYS:
        with np.errstate(divide="ignore"):
            out = np.log(np.abs(b)) - math.log(abs(b_ref))
    else:
        out = -epgig_log_density(b, prior)
        if not prior.singular_at_origin:
            out = out + epgig_log_density(0.0, prior)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def reweight_omega(b, prior):
    """d(-ln p)/d|b|^q, the reweighted-lq coefficient.

    For the Bessel family this is (alpha / 2) Q_nu(alpha (beta + |b|^q)) with
    nu = (gamma q - 1) / q.
    """
    b = np.asarray(b, dtype=float)
    s = np.abs(b) ** prior.q
    if prior.variant is Variant.JEFFREYS:
        with np.errstate(divide="ignore"):
            out = 1.0 / (prior.q * s)
    elif prior.alpha == 0:
        out = -prior.posterior_order / (prior.beta + s)
    else:
        t = prior.beta + s
        out = np.full(s.shape, np.inf)
        pos = t > 0
        out[pos] = 0.5 * prior.alpha * bessel_ratio_q(prior.posterior_order, prior.alpha * t[pos])
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def monotonicity_violations(prior, b_max=10.0, points=400, slack=1e-12):
    """Count finite-difference sign violations on a log-spaced |b| grid.

    Checks: the E-step weight is positive, nonincreasing and convex in |b|^q;
    for q <= 1 the penalty is concave in |b|.  Returns a dict of counts.
    """
    b = np.logspace(-3, math.log10(b_max), points)
    s = b**prior.q
    # uniform grid in s so second differences measure convexity in s
    s_grid = np.linspace(s[0], s[-1], points)
    w = estep_weight(s_grid, WeightContext(prior))
    scale = np.maximum(np.abs(w[:-2]), 1.0)
    d1 = np.diff(w)
    d2 = np.diff(w, 2)
    out = {
        "weight_nonpositive": int(np.sum(~(w > 0))),
        "weight_increasing": int(np.sum(d1 > slack * np.maximum(np.abs(w[:-1]), 1.0))),
        "weight_concave": int(np.sum(d2 < -slack * scale)),
        "penalty_convex": 0,
    }
    if prior.q <= 1.0:
        bl = np.linspace(b[0], b[-1], points)
        pen = penalty_value(bl, prior)
        d2p = np.diff(pen, 2)
        out["penalty_convex"] = int(np.sum(d2p > slack * np.maximum(np.abs(pen[1:-1]), 1.0)))
    return out
