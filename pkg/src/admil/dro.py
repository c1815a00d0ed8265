"""Robust bag likelihoods over divergence balls around the uniform distribution.

For scores ``f`` of the ``n`` live instances of a positive bag, the robust
likelihood is ``max_p sum_i p_i f_i`` over probability vectors with
``D(p || 1/n) <= lam / n``. Two divergences are supported:

* ``"chi2"``: ``D = n * ||p - 1/n||^2``, i.e. the Euclidean ball
  ``||p - 1/n||^2 <= lam / n^2`` intersected with the simplex.
* ``"kl"``: ``D = sum_i p_i log(n p_i)``; the maximizer is an exponential
  tilt of the uniform distribution.

All variances are the biased (divide-by-n) empirical variance.
"""

import math
from dataclasses import dataclass

import numpy as np

from .validation import ConfigError, check_nonnegative, check_scores, make_rng

DIVERGENCES = ("chi2", "kl")

_FEAS_TOL = 1e-12


class RootFindingError(RuntimeError):
    """The KL tilt could not be bracketed or resolved within the iteration cap."""


@dataclass(frozen=True)
class DroConfig:
    lam: float = 0.01
    divergence: str = "chi2"
    variance_floor: float = 1e-12

    def __post_init__(self):
        check_nonnegative(self.lam, "lambda")
        if self.divergence not in DIVERGENCES:
            raise ConfigError("divergence", f"must be one of {DIVERGENCES}, got {self.divergence!r}")
        if not self.variance_floor > 0:
            raise ConfigError("variance_floor", "must be positive")


@dataclass(frozen=True, eq=False)
class RobustWeights:
    p: np.ndarray
    value: float
    beta_star: float = None
    interior: bool = None


def empirical_variance(f):
    f = np.asarray(f, dtype=np.float64)
    d = f - f.mean()
    return float(np.dot(d, d) / f.size)


def divergence(p, kind):
    """``D(p || uniform)`` for ``kind`` in ``("chi2", "kl")``."""
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    if kind == "chi2":
        u = p - 1.0 / n
        return float(n * np.dot(u, u))
    if kind == "kl":
        q = p[p > 0]
        return float(np.sum(q * np.log(n * q)))
    raise ValueError(f"unknown divergence {kind!r}")


def variance_regularized_value(f, C):
    """Mean score plus ``C * sqrt(Var_n(f) / n)``."""
    f = check_scores(f)
    check_nonnegative(C, "C")
    return float(f.mean() + C * math.sqrt(empirical_variance(f) / f.size))


def interior_condition(f, lam):
    """Whether the unclipped chi-square maximizer is nonnegative everywhere.

    True iff ``min_i sqrt(lam) (f_i - mean) / sqrt(n Var_n) >= -1``.
    Undefined for constant scores; callers must branch on that first.
    """
    f = check_scores(f)
    lam = check_nonnegative(lam, "lambda")
    var = empirical_variance(f)
    if var <= 0.0:
        raise ValueError("interior condition is undefined for zero-variance scores")
    return bool(_interior_margin(f, lam, var) >= -1.0)


def _interior_margin(f, lam, var):
    return math.sqrt(lam) * float(np.min(f - f.mean())) / math.sqrt(f.size * var)


def _uniform(f, **kw):
    n = f.size
    return RobustWeights(p=np.full(n, 1.0 / n), value=float(f.mean()), **kw)


def chi2_robust_weights(f, lam, variance_floor=1e-12):
    """Exact maximizer of ``p . f`` over the chi-square ball on the simplex.

    Under the interior condition the Cauchy-Schwarz closed form
    ``p_i = 1/n + sqrt(lam) (f_i - mean) / (n sqrt(n Var_n))`` is returned.
    Otherwise the optimum is ``p_i = max(0, a + g f_i)``, supported on the
    top-``m`` scores; every support size is tried and the best feasible one
    kept.
    """
    f = check_scores(f)
    lam = check_nonnegative(lam, "lambda")
    n = f.size
    var = empirical_variance(f)
    if lam == 0.0 or var < variance_floor:
        return _uniform(f, interior=True)

    if _interior_margin(f, lam, var) >= -1.0:
        d = f - f.mean()
        p = 1.0 / n + math.sqrt(lam) * d / (n * math.sqrt(n * var))
        value = f.mean() + math.sqrt(lam * var / n)
        return RobustWeights(p=p, value=float(value), interior=True)

    order = np.argsort(-f, kind="stable")
    fs = f[order]
    centered = fs - f.mean()
    m = np.arange(1, n + 1)
    s1 = np.cumsum(centered)
    s2 = np.cumsum(centered * centered)
    mean_m = s1 / m
    ss = np.maximum(s2 - s1 * mean_m, 0.0)
    slack = lam / n**2 - (n - m) / (n * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where((ss > 0) & (slack > 0), np.sqrt(np.maximum(slack, 0) / ss), 0.0)
    p_min = 1.0 / m + gamma * (centered - mean_m)
    feasible = (slack >= -_FEAS_TOL) & (p_min >= -_FEAS_TOL)
    # m = 1 (the argmax vertex) is feasible whenever the ball reaches it
    values = np.where(feasible, f.mean() + mean_m + gamma * ss, -np.inf)
    best = int(np.argmax(values))
    k = best + 1
    p_sorted = np.zeros(n)
    p_sorted[:k] = np.maximum(1.0 / k + gamma[best] * (centered[:k] - mean_m[best]), 0.0)
    p_sorted /= p_sorted.sum()
    p = np.empty(n)
    p[order] = p_sorted
    return RobustWeights(p=p, value=float(np.dot(p, f)), interior=False)


def _log_mean_exp(s):
    top = s.max()
    return top + math.log(np.mean(np.exp(s - top)))


def _tilt(f, beta):
    """Tilted distribution ``q ~ exp(beta f)`` and ``KL(q || uniform)``."""
    s = beta * (f - f.mean())
    lme = _log_mean_exp(s)
    log_nq = s - lme
    q = np.exp(log_nq) / f.size
    return q, float(np.dot(q, log_nq))


def kl_robust_weights(f, lam, variance_floor=1e-12, tol=1e-12, max_iter=200):
    """Exact maximizer of ``p . f`` over the KL ball on the simplex.

    The optimizer is ``p ~ exp(beta* f)`` where ``beta*`` solves
    ``beta psi'(beta) - psi(beta) = lam / n`` with
    ``psi(beta) = log mean exp(beta f)``. The left side is the KL divergence
    of the tilt and is strictly increasing in ``beta``, so bisection after
    doubling the upper bracket converges. When the ball already contains the
    uniform distribution over the argmax set, that distribution is returned
    with ``beta_star = inf``.
    """
    f = check_scores(f)
    lam = check_nonnegative(lam, "lambda")
    n = f.size
    if lam == 0.0 or empirical_variance(f) < variance_floor:
        return _uniform(f, beta_star=0.0)
    target = lam / n

    top = f == f.max()
    if target >= math.log(n / top.sum()):
        p = top / top.sum()
        return RobustWeights(p=p, value=float(f.max()), beta_star=math.inf)

    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if _tilt(f, hi)[1] >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise RootFindingError(f"could not bracket the KL tilt for lam/n={target:g}")

    q, h = _tilt(f, lo)
    beta = lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        q_mid, h_mid = _tilt(f, mid)
        if h_mid <= target:
            lo, q, h, beta = mid, q_mid, h_mid, mid
        else:
            hi = mid
        if target - h <= tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    if abs(target - h) > 1e3 * tol and hi - lo > 4 * np.finfo(float).eps * hi:
        raise RootFindingError(f"KL tilt did not converge: residual {target - h:g}")
    return RobustWeights(p=q, value=float(np.dot(q, f)), beta_star=beta)


def robust_weights(f, config):
    """Dispatch to the solver named by ``config.divergence``."""
    if config.divergence == "chi2":
        return chi2_robust_weights(f, config.lam, config.variance_floor)
    return kl_robust_weights(f, config.lam, config.variance_floor)


def kl_expansion(f, lam):
    """Second-order expansion of the KL robust value in ``lam / n``."""
    f = check_scores(f)
    n = f.size
    var = empirical_variance(f)
    d = f - f.mean()
    kappa3 = float(np.mean(d**3))
    return float(f.mean() + math.sqrt(2 * lam * var / n) + lam / (3 * n) * kappa3 / var)


@dataclass(frozen=True)
class TheoremCheckReport:
    n: int
    lam: float
    sigma_sq: float
    trials: int
    empirical_gap: float
    condition_held: bool
    bound_rhs: float
    empirical_frequency: float
    standard_error: float
    equivalence_error: float
    passed: bool


def theorem1_sample_floor(sigma_sq, lam):
    """Smallest bag size for which the high-probability chi-square equivalence is claimed."""
    sigma = math.sqrt(sigma_sq)
    return max(2.0, lam / sigma_sq * max(8 * sigma, 44))


def theorem1_probability_check(n, sigma_sq_target, lam=0.01, trials=10_000, seed=0):
    """Monte-Carlo check of the variance-concentration event behind the chi-square equivalence.

    Scores are drawn from a two-point distribution on {0, 1} whose population
    variance is ``sigma_sq_target``. The empirical frequency of
    ``Var_n >= sigma^2 / 43`` must be at least ``1 - exp(-7 n sigma^2 / 20)``
    less three standard errors. On every sample where the event holds the
    chi-square solver is also compared with the variance-regularized value;
    ``equivalence_error`` is the largest discrepancy seen.
    """
    if not 0.0 < sigma_sq_target <= 0.25:
        raise ValueError("sigma_sq_target must lie in (0, 0.25] for scores in [0, 1]")
    if n < 2:
        raise ValueError("n must be at least 2")
    if trials < 100:
        raise ValueError("trials must be at least 100")
    lam = check_nonnegative(lam, "lambda")
    rng = make_rng(seed)
    q = 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * sigma_sq_target))
    samples = (rng.random((trials, n)) < q).astype(np.float64)
    var_n = samples.var(axis=1)
    event = var_n >= sigma_sq_target / 43.0
    freq = float(event.mean())
    bound = 1.0 - math.exp(-7.0 * n * sigma_sq_target / 20.0)
    se = math.sqrt(max(freq * (1 - freq), bound * (1 - bound)) / trials)
    condition = n >= theorem1_sample_floor(sigma_sq_target, lam)

    err = 0.0
    if condition:
        for f in samples[event][:2000]:
            closed = variance_regularized_value(f, math.sqrt(lam))
            err = max(err, abs(chi2_robust_weights(f, lam).value - closed))
    passed = (not condition) or (freq >= bound - 3 * se and err <= 1e-9)
    return TheoremCheckReport(
        n=n, lam=lam, sigma_sq=sigma_sq_target, trials=trials,
        empirical_gap=freq - bound, condition_held=bool(condition), bound_rhs=bound,
        empirical_frequency=freq, standard_error=se, equivalence_error=err,
        passed=bool(passed))
