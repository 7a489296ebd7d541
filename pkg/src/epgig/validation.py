"""Invariant suites behind ``epgig validate``.

Each check compares two computations that share as little code as possible
(e.g. our Bessel routine against scipy's linear-scale ``kv``, closed-form
densities against the Bessel form and the quadrature oracle) and reports
the measured error next to its tolerance.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import (
    CLOSED_FORMS,
    EpParams,
    LimitFamily,
    PriorSpec,
    closed_form_log_density,
    ep_log_density,
    epgig_log_density,
    gig_log_density,
    gig_moment,
    gig_sample,
    limit_check,
    mixture_density_oracle,
    posterior_gig,
)
from .solvers import SolverOptions, WeightedPenalizedLsProblem, solve_weighted_l1
from .specfun import bessel_ratio_q, log_bessel_k
from .weights import WeightContext, estep_weight, monotonicity_violations, reweight_omega

__all__ = ["CheckResult", "run_suite", "format_report", "mixture_priors", "roster_priors"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tol)


def mixture_priors():
    """Every prior with an elementary density, keyed by a short label."""
    out = {}
    for k, (gam, q) in enumerate(CLOSED_FORMS, start=1):
        out[f"example{k}(gamma={gam:g},q={q:g})"] = PriorSpec.generic(1.0, 1.0, gam, q)
    out["gt(q=1,tau=1)"] = PriorSpec.generalized_t(1.0, 1.0, 1)
    out["gt(q=2,tau=1)"] = PriorSpec.generalized_t(1.0, 1.0, 2)
    out["eg(q=1,gamma=3/2)"] = PriorSpec.gamma_mixing(1.0, 1.5, 1)
    return out


def roster_priors():
    """Priors of the simulation roster (hyperparameter set to 1), plus the bridge prior."""
    return {
        "method1": PriorSpec.generic(1.0, 1.0, 0.5, 1),
        "method2": PriorSpec.generic(1.0, 1.0, 1.5, 1),
        "method3": PriorSpec.generic(1.0, 1.0, -0.5, 1),
        "method4": PriorSpec.generalized_t(1.0, 1.0, 1),
        "method5": PriorSpec.generic(1.0, 1.0, 0.0, 2),
        "method6": PriorSpec.generic(1.0, 1.0, 1.0, 2),
        "method7": PriorSpec.generalized_t(1.0, 1.0, 2),
        "bridge": PriorSpec.gamma_mixing(1.0, 1.5, 1),
    }


def _check_bessel():
    worst = 0.0
    for nu in (0.0, 0.3, 1.0, 2.7, -1.3, 5.5):
        x = np.array([0.1, 0.5, 1.5, 2.0, 3.0, 10.0, 50.0])
        ref = np.log(special.kv(nu, x))
        worst = max(worst, float(np.max(np.abs(log_bessel_k(nu, x) - ref) / np.maximum(1.0, np.abs(ref)))))
    return CheckResult("bessel_k vs scipy kv", worst, 1e-12)


def _check_ratio():
    worst = 0.0
    for nu in (-1.5, -0.5, 0.25, 0.5, 2.0):
        z = np.array([0.01, 0.3, 1.0, 4.0, 100.0])
        x = np.sqrt(z)
        ref = special.kv(nu - 1, x) / (x * special.kv(nu, x))
        worst = max(worst, float(np.max(np.abs(bessel_ratio_q(nu, z) / ref - 1.0))))
    return CheckResult("ratio Q vs scipy kv", worst, 1e-12)


def _check_closed_forms():
    b = np.linspace(-5, 5, 50)
    out = []
    for (gam, q), _ in CLOSED_FORMS.items():
        for alpha, beta in ((1.0, 1.0), (0.4, 2.5)):
            prior = PriorSpec.generic(alpha, beta, gam, q)
            err = float(np.max(np.abs(closed_form_log_density(b, prior) - epgig_log_density(b, prior))))
            out.append(err)
    return CheckResult("closed-form vs Bessel density", max(out), 1e-10, f"{len(out)} priors")


def _check_weight_forms():
    s = np.logspace(-4, 2, 40)
    worst = 0.0
    for gam, q in ((0.5, 1), (1.5, 1), (-0.5, 1), (1.0, 2), (0.0, 2), (-1.0, 2)):
        for sigma in (0.5, 2.0):
            ctx = WeightContext(PriorSpec.generic(1.3, 0.7, gam, q), sigma)
            a = estep_weight(s, ctx, closed_form=True)
            b = estep_weight(s, ctx, closed_form=False)
            worst = max(worst, float(np.max(np.abs(a / b - 1.0))))
    return CheckResult("closed-form vs Bessel weights", worst, 1e-12)


def _random_priors(rng, k):
    out = []
    for _ in range(k):
        q = float(rng.choice([0.5, 1.0, 2.0]))
        out.append(PriorSpec.generic(rng.uniform(0.2, 3), rng.uniform(0.2, 3), rng.uniform(-2, 2), q))
    return out


def _check_conjugacy(seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for prior in _random_priors(rng, 20):
        b = rng.uniform(-3, 3)
        eta = math.exp(rng.uniform(-2, 2))
        joint = ep_log_density(b, EpParams(eta, prior.q)) + gig_log_density(eta, prior.mixing)
        post = gig_log_density(eta, posterior_gig(b, prior))
        worst = max(worst, abs(joint - epgig_log_density(b, prior) - post))
    return CheckResult("conjugacy (Bayes ratio)", worst, 1e-8, "20 random triples")


def _check_derivative(seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    ident = 0.0
    for prior in _random_priors(rng, 20):
        b = rng.uniform(0.2, 3)
        q = prior.q
        s = b**q
        h = 1e-4 * s

        def f(t):
            return -epgig_log_density(t ** (1.0 / q), prior)

        fd = (f(s + h) - f(s - h)) / (2.0 * h)
        om = reweight_omega(b, prior)
        worst = max(worst, abs(fd - om) / abs(om))
        sigma = rng.uniform(0.3, 3)
        scaled = PriorSpec.generic(prior.alpha / sigma, prior.beta * sigma, prior.gamma, q)
        w = estep_weight(s, WeightContext(prior, sigma), closed_form=False)
        # the reweighted problem carries lambda = sigma in front of omega
        ident = max(ident, abs(2.0 * sigma * reweight_omega(b, scaled) - w) / w)
    return [
        CheckResult("omega vs finite differences", worst, 1e-5, "20 random cases"),
        CheckResult("2 sigma omega = w under sigma scaling", ident, 1e-12),
    ]


def _check_gig_moments():
    worst = 0.0
    for gam in (0.5, -0.5, 1.5, -1.5):
        for alpha, beta in ((1.0, 1.0), (2.0, 0.3)):
            g = PriorSpec.generic(alpha, beta, gam, 1).mixing
            psi = math.sqrt(alpha * beta)
            for nu in (1, -1):
                ref = math.sqrt(beta / alpha) ** nu * special.kv(gam + nu, psi) / special.kv(gam, psi)
                worst = max(worst, abs(gig_moment(g, nu) / ref - 1.0))
    return CheckResult("GIG moments closed vs Bessel", worst, 1e-12)


def _check_solver(seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        X = rng.standard_normal((30, 5))
        y = X @ np.array([2.0, 0, -1, 0, 0.5]) + rng.standard_normal(30)
        prob = WeightedPenalizedLsProblem(X, y, rng.uniform(0.5, 5, 5))
        res = solve_weighted_l1(prob, SolverOptions(tol=1e-10))
        worst = max(worst, prob.kkt_violation(res.coef, 0.0))
    return CheckResult("coordinate descent KKT", worst, 1e-8)


def _check_mixture_identity():
    out = []
    b = np.linspace(-5, 5, 50)
    for label, prior in mixture_priors().items():
        grid = b[b != 0] if prior.singular_at_origin else b
        cf = closed_form_log_density(grid, prior)
        if cf is None:
            cf = epgig_log_density(grid, prior)
        quad = np.array([math.log(mixture_density_oracle(v, prior)) for v in grid])
        out.append(CheckResult(f"mixture identity {label}", float(np.max(np.abs(cf - quad))), 1e-6))
    return out


def _check_gamma_mixture_ep():
    # EP(b | 0, alpha^(-1/2)/2, q/2) as a gamma mixture of EP(b | 0, eta, q)
    worst = 0.0
    for q in (1.0, 2.0):
        for alpha in (0.5, 1.0, 4.0):
            prior = PriorSpec.gamma_mixing(alpha, 0.5 + 1.0 / q, q)
            target = EpParams(0.5 / math.sqrt(alpha), q / 2.0)
            for v in np.linspace(0.1, 5, 25):
                quad = math.log(mixture_density_oracle(v, prior))
                worst = max(worst, abs(quad - ep_log_density(v, target)))
    return CheckResult("EP(q/2) as gamma mixture", worst, 1e-6)


_LIMIT_CASES = (
    (LimitFamily.GT_TO_EP, 1e-2),
    (LimitFamily.EG_TO_EP, 5e-2),
    (LimitFamily.EGIG_GAMMA_UP, 5e-2),
    (LimitFamily.EGIG_GAMMA_DOWN, 5e-2),
    (LimitFamily.EGIG_PSI, 5e-2),
)
LIMIT_GRID = (10.0, 1e2, 1e3, 1e4)


def _check_limits():
    out = []
    for family, tol in _LIMIT_CASES:
        for q in (1.0, 2.0):
            gaps = [limit_check(family, s, q=q) for s in LIMIT_GRID]
            mono = all(b < a for a, b in zip(gaps, gaps[1:]))
            err = gaps[-1] if mono else np.inf
            out.append(CheckResult(f"limit {family.value} q={q:g}", err, tol, "gaps " + ", ".join(f"{g:.2e}" for g in gaps)))
    var = [limit_check(LimitFamily.GIG_TO_DELTA, s) for s in LIMIT_GRID]
    mono = all(b < a for a, b in zip(var, var[1:]))
    out.append(CheckResult("limit gig-delta variance", var[-1] if mono else np.inf, 5e-2))
    return out


def _check_sampler(seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = 20000
    for gam, beta, alpha in ((0.5, 1.0, 1.0), (-1.5, 2.0, 0.5), (3.0, 0.2, 4.0)):
        g = PriorSpec.generic(alpha, beta, gam, 1).mixing
        x = gig_sample(g, rng, n)
        m1, m2 = gig_moment(g, 1), gig_moment(g, 2)
        se = math.sqrt((m2 - m1 * m1) / n)
        worst = max(worst, abs(x.mean() - m1) / se)
    return CheckResult("GIG sampler mean (z-score)", worst, 5.0)


def _check_monotone():
    out = []
    rng = np.random.default_rng(5)
    priors = dict(roster_priors())
    for k, p in enumerate(_random_priors(rng, 20)):
        priors[f"random{k}"] = p
    total = 0
    for prior in priors.values():
        total += sum(monotonicity_violations(prior).values())
    out.append(CheckResult("complete-monotonicity signs", float(total), 0.0, f"{len(priors)} priors"))
    return out


FAST = (_check_bessel, _check_ratio, _check_closed_forms, _check_weight_forms, _check_conjugacy,
        _check_derivative, _check_gig_moments, _check_solver)
FULL = FAST + (_check_mixture_identity, _check_gamma_mixture_ep, _check_limits, _check_sampler, _check_monotone)


def run_suite(level="fast"):
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    results = []
    for check in FAST if level == "fast" else FULL:
        r = check()
        results.extend(r if isinstance(r, list) else [r])
    return results


def format_report(results):
    lines = []
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        extra = f"  ({r.detail})" if r.detail else ""
        lines.append(f"{tag}  {r.name:<40} err={r.error:.3e} tol={r.tol:.1e}{extra}")
    return "\n".join(lines)
