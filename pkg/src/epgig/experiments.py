"""Simulation designs, replicate metrics and table runners."""

import csv
import dataclasses
import json
import math
import os
import sys
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .em import (
    ROSTER_SE_RULE,
    Zero,
    Dataset,
    EmConfig,
    cross_validate,
    fit_grouped,
    get_method,
    one_step_estimator,
    report_zeros,
)

__all__ = [
    "FANLI_B",
    "GROUPED_B",
    "GROUPED_GROUPS",
    "SimDesign",
    "ReplicateMetrics",
    "stream",
    "generate_fanli",
    "generate_grouped",
    "evaluate_replicate",
    "run_table",
    "table3_designs",
    "table5_designs",
    "TableRow",
    "write_csv",
    "write_json",
    "oracle_study",
    "thread_count",
]

FANLI_B = np.array([3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])
GROUPED_B = np.zeros(32)
GROUPED_B[0:4] = (3.0, 1.5, 2.0, 0.5)
GROUPED_B[8:12] = (6.0, 3.0, 4.0, 1.0)
GROUPED_B[16:20] = (6.0, 3.0, 4.0, 1.0)
GROUPED_B[24:28] = (1.5, 0.75, 1.0, 0.25)
GROUPED_GROUPS = tuple(tuple(range(4 * l, 4 * l + 4)) for l in range(8))


def stream(master_seed, purpose, index=0):
    """Generator for a named stream: depends only on (seed, purpose, index)."""
    key = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(key, int(index))))


@dataclass(frozen=True)
class SimDesign:
    b_true: tuple
    n: int
    noise_sd: float
    corr_decay: float = 0.5
    groups: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "b_true", tuple(float(v) for v in self.b_true))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0 <= self.corr_decay < 1:
            raise ValueError("corr_decay must lie in [0, 1)")
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(tuple(int(j) for j in g) for g in self.groups))
            flat = sorted(j for g in self.groups for j in g)
            if flat != list(range(self.p)):
                raise ValueError("groups must partition the coefficients")

    @property
    def p(self):
        return len(self.b_true)

    @property
    def b(self):
        return np.array(self.b_true)

    def covariance(self):
        i = np.arange(self.p)
        return self.corr_decay ** np.abs(i[:, None] - i[None, :])

    def params(self):
        return {"n": self.n, "delta": self.noise_sd, "p": self.p, "rho": self.corr_decay}


@dataclass(frozen=True)
class ReplicateMetrics:
    mse: float
    correct_zeros: int
    incorrect_zeros: int


def generate_fanli(design, rng):
    """X rows ~ N(0, Sigma) through the Cholesky factor; y = X b* + delta * eps."""
    L = np.linalg.cholesky(design.covariance())
    X = rng.standard_normal((design.n, design.p)) @ L.T
    y0 = X @ design.b
    y = y0 + design.noise_sd * rng.standard_normal(design.n) if design.noise_sd > 0 else y0.copy()
    return Dataset(X, y, y0)


def generate_grouped(rng, n=120, noise_sd=1.0):
    design = SimDesign(GROUPED_B, n, noise_sd, groups=GROUPED_GROUPS)
    return generate_fanli(design, rng), [list(g) for g in GROUPED_GROUPS]


def evaluate_replicate(b_hat, design, X, y0=None, q=1):
    b_hat = np.asarray(b_hat, dtype=float)
    X = np.asarray(X, dtype=float)
    if y0 is None:
        y0 = X @ design.b
    r = y0 - X @ b_hat
    zero_hat = report_zeros(b_hat, q)
    true_zero = design.b == 0
    return ReplicateMetrics(
        float(r @ r) / X.shape[0],
        int(np.sum(zero_hat & true_zero)),
        int(np.sum(zero_hat & ~true_zero)),
    )


@dataclass(frozen=True)
class TableRow:
    design: dict
    method: str
    mse_mean: float
    mse_std: float
    c_mean: float
    ic_mean: float
    replicates: int
    failures: int
    seed: int
    zero_rule: str

    def as_dict(self):
        out = dict(self.design)
        out.update(
            method=self.method,
            mse_mean=self.mse_mean,
            mse_std=self.mse_std,
            c_mean=self.c_mean,
            ic_mean=self.ic_mean,
            replicates=self.replicates,
            failures=self.failures,
            seed=self.seed,
            zero_rule=self.zero_rule,
        )
        return out


def table3_designs():
    return [SimDesign(FANLI_B, n, d) for n, d in ((60, 3.0), (120, 3.0), (120, 1.0))]


def table5_designs():
    return [SimDesign(GROUPED_B, n, d, groups=GROUPED_GROUPS) for n, d in ((60, 3.0), (120, 3.0), (120, 1.0))]


class GroupedMethod:
    """Grouped version of an EP-GIG roster method: one mixing scale per group.

    Uses the base method's prior and tuning direction; the fit starts from
    zero on the raw (centered) columns.
    """

    def __init__(self, base, groups, se_rule=ROSTER_SE_RULE):
        if isinstance(base, str):
            base = get_method(base)
        if base.prior(1.0) is None:
            raise ValueError(f"{base.name} has no EP-GIG prior to group")
        self.base = base
        self.name = base.name + "'"
        self.q = base.q
        self.sparser_high = base.sparser_high
        self.groups = [list(g) for g in groups]
        self.se_rule = se_rule

    def __call__(self, data, h, cfg=None):
        prior = self.base.prior(h)
        # group norms pool several coefficients, so a zero start no longer
        # drops true signals and avoids the least squares start's local optima
        cfg = EmConfig(prior, init=Zero()) if cfg is None else dataclasses.replace(cfg, prior=prior)
        return fit_grouped(data, self.groups, cfg)


def _resolve(method, design):
    if not isinstance(method, str):
        return method
    key = method.lower()
    if key.endswith("'") or key.endswith("_grouped"):
        if design.groups is None:
            raise ValueError(f"{method!r} needs a design with groups")
        return GroupedMethod(key.rstrip("'").replace("_grouped", ""), design.groups)
    return get_method(key)


def _one_replicate(args):
    design, method_name, seed, rep, grid, folds = args
    method = _resolve(method_name, design)
    rng = stream(seed, f"data/{design.n}/{design.noise_sd}/{design.p}", rep)
    data = generate_fanli(design, rng)
    cv_rng = stream(seed, f"cv/{method.name}/{design.n}/{design.noise_sd}/{design.p}", rep)
    try:
        h = cross_validate(data, method, grid=grid, folds=folds, rng=cv_rng)
        fit = method(data, h)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        return None, repr(exc)
    return evaluate_replicate(fit.b_hat, design, data.X, data.y0, method.q), None


def thread_count():
    env = os.environ.get("EPGIG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


def run_table(designs, methods, replicates, seed, grid=None, folds=5, workers=None, progress=False):
    """Mean/std MSE and mean C/IC per (design, method).

    Every replicate draws its data and CV folds from streams keyed by the
    design and replicate index, so rows do not depend on scheduling or on
    which other methods run.  More than 1% failed fits raises RuntimeError.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    workers = thread_count() if workers is None else workers
    rows = []
    for design in designs:
        for m in methods:
            method = _resolve(m, design)
            jobs = [(design, m, seed, r, grid, folds) for r in range(replicates)]
            results = _map(_one_replicate, jobs, workers)
            ok = [r for r, err in results if r is not None]
            failures = len(results) - len(ok)
            if failures > 0.01 * replicates:
                errs = sorted({e for _, e in results if e})
                raise RuntimeError(f"{failures} of {replicates} fits failed for {method.name}: {errs[:3]}")
            mse = np.array([r.mse for r in ok])
            rows.append(
                TableRow(
                    design.params(),
                    method.name,
                    float(mse.mean()),
                    float(mse.std(ddof=1)) if mse.size > 1 else 0.0,
                    float(np.mean([r.correct_zeros for r in ok])),
                    float(np.mean([r.incorrect_zeros for r in ok])),
                    len(ok),
                    failures,
                    int(seed),
                    "exact zero" if method.q == 1 else "|b| < 1e-4 max|b|",
                )
            )
            if progress:
                r = rows[-1]
                print(f"{method.name:>9} n={design.n} delta={design.noise_sd}: mse={r.mse_mean:.4f} "
                      f"C={r.c_mean:.2f} IC={r.ic_mean:.2f}", file=sys.stderr)
    return rows


def write_csv(rows, path):
    dicts = [r.as_dict() for r in rows]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(dicts[0]))
        writer.writeheader()
        writer.writerows(dicts)


def write_json(rows, path, meta=None):
    with open(path, "w") as fh:
        json.dump({"meta": meta or {}, "rows": [r.as_dict() for r in rows]}, fh, indent=2)


@dataclass(frozen=True)
class OracleRow:
    n: int
    selection_rate: float
    error_mean: float
    scaled_error_mean: float
    regime_warning: bool


def oracle_study(n_grid, lambda_rule, alpha_rule, beta_rule, gamma, replicates, seed, noise_sd=1.0):
    """Support recovery rate and error on the true support for the one-step estimator."""
    rows = []
    support = FANLI_B != 0
    for n in n_grid:
        lam = float(lambda_rule(n))
        warn = lam / math.sqrt(n) >= lambda_rule(n_grid[0]) / math.sqrt(n_grid[0]) and len(n_grid) > 1 and n != n_grid[0]
        design = SimDesign(FANLI_B, n, noise_sd)
        hits = 0
        errs = np.empty(replicates)
        for r in range(replicates):
            data = generate_fanli(design, stream(seed, f"oracle/{n}", r))
            b = one_step_estimator(data, lam, float(alpha_rule(n)), float(beta_rule(n)), gamma)
            hits += bool(np.array_equal(b != 0, support))
            errs[r] = np.linalg.norm(b[support] - FANLI_B[support])
        if warn:
            warnings.warn(f"lambda_n / sqrt(n) is not decreasing at n={n}", RuntimeWarning)
        rows.append(OracleRow(n, hits / replicates, float(errs.mean()), float(errs.mean() * math.sqrt(n)), warn))
    return rows
