"""Numerical self-checks of the robust likelihood solvers.

Each suite returns a plain dict with a ``passed`` flag and enough detail to
see by how much it passed or failed.
"""

import math
import time

import numpy as np

from . import dro
from .oracles import chi2_oracle, kl_oracle
from .validation import make_rng


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        out["seconds"] = round(time.perf_counter() - t0, 4)
        return out
    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def closed_form_suite(lam=0.01, n_bags=1000, seed=0, solver=dro.chi2_robust_weights):
    """Chi-square value equals mean + sqrt(lam Var / n) on interior bags."""
    rng = make_rng(seed)
    worst, used = 0.0, 0
    for _ in range(n_bags):
        f = rng.random(int(rng.integers(4, 65)))
        if not dro.interior_condition(f, lam):
            continue
        used += 1
        closed = dro.variance_regularized_value(f, math.sqrt(lam))
        worst = max(worst, abs(solver(f, lam).value - closed))
    return {"bags": n_bags, "interior_bags": used, "max_abs_error": worst,
            "tolerance": 1e-9, "passed": used > 0 and worst <= 1e-9}


@_timed
def oracle_suite(lam=0.01, n_bags=200, seed=1, solver=dro.chi2_robust_weights):
    """Both solvers against the slow reference maximizers on bags of size <= 5.

    Radii are drawn on a log scale around ``lam`` so that a good share of
    the bags are outside the chi-square interior regime.
    """
    rng = make_rng(seed)
    chi2_err = kl_err = 0.0
    non_interior = 0
    for i in range(n_bags):
        n = int(rng.integers(1, 6))
        f = rng.random(n)
        if i % 4 == 0:
            f = np.round(f, 1)  # ties and repeated maxima
        r = lam * 10 ** rng.uniform(-1, 3)
        if n > 1 and dro.empirical_variance(f) > 0 and not dro.interior_condition(f, r):
            non_interior += 1
        chi2_err = max(chi2_err, abs(solver(f, r).value - chi2_oracle(f, r)[0]))
        kl_err = max(kl_err, abs(dro.kl_robust_weights(f, r).value - kl_oracle(f, r)))
    return {"bags": n_bags, "non_interior_bags": non_interior,
            "chi2_max_abs_error": chi2_err, "kl_max_abs_error": kl_err, "tolerance": 1e-5,
            "passed": non_interior > 0 and max(chi2_err, kl_err) <= 1e-5}


@_timed
def probability_suite(lam=0.01, trials=10_000, seed=2, n=100, sigma_sq=0.25):
    rep = dro.theorem1_probability_check(n, sigma_sq, lam=lam, trials=trials, seed=seed)
    return {"n": rep.n, "sigma_sq": rep.sigma_sq, "trials": rep.trials,
            "empirical_frequency": rep.empirical_frequency, "bound": rep.bound_rhs,
            "standard_error": rep.standard_error, "condition_held": rep.condition_held,
            "equivalence_error": rep.equivalence_error, "passed": rep.passed}


@_timed
def kl_expansion_suite(lam=0.01, n_bags=500, seed=3):
    """KL value against its second-order expansion, error within 10 (lam/n)^1.5."""
    rng = make_rng(seed)
    worst_ratio, done, tries = 0.0, 0, 0
    while done < n_bags and tries < 100 * n_bags:
        tries += 1
        n = int(rng.integers(10, 200))
        if lam / n > 1e-3:
            continue
        f = rng.random(n) ** rng.uniform(0.5, 3)
        if dro.empirical_variance(f) < 0.01:
            continue
        done += 1
        err = abs(dro.kl_robust_weights(f, lam).value - dro.kl_expansion(f, lam))
        worst_ratio = max(worst_ratio, err / (10 * (lam / n) ** 1.5))
    return {"bags": done, "max_error_over_bound": worst_ratio,
            "passed": done == n_bags and worst_ratio <= 1.0}


def skewed_chi2(f, lam, variance_floor=1e-12):
    """Deliberately wrong solver used to prove the checks can fail."""
    rw = dro.chi2_robust_weights(f, lam, variance_floor)
    return dro.RobustWeights(p=rw.p, value=rw.value + 1e-4, interior=rw.interior)


def run_all(lam=0.01, trials=10_000, seed=0, inject_fault=False):
    solver = skewed_chi2 if inject_fault else dro.chi2_robust_weights
    checks = {
        "closed_form": closed_form_suite(lam, seed=seed, solver=solver),
        "oracle": oracle_suite(lam, seed=seed + 1, solver=solver),
        "probability_bound": probability_suite(lam, trials, seed=seed + 2),
        "kl_expansion": kl_expansion_suite(lam, seed=seed + 3),
    }
    return {"passed": all(c["passed"] for c in checks.values()), "checks": checks}
