"""Input validation helpers shared by the solvers, losses and estimators."""

import numbers

import numpy as np


class DegenerateBagError(ValueError):
    """A mutation would leave a bag without live instances."""


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending setting."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def check_scores(f, name="f", allow_empty=False):
    """Return ``f`` as a 1-d float array with every entry finite and in [0, 1]."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        f = f.ravel()
    if f.size == 0 and not allow_empty:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    if f.size and (f.min() < 0.0 or f.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return f


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ConfigError(name, f"must be a finite nonnegative real, got {value!r}")
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name, closed_right=False):
    ok = isinstance(value, numbers.Real) and 0.0 <= value and (
        value <= 1.0 if closed_right else value < 1.0)
    if not ok:
        bracket = "]" if closed_right else ")"
        raise ConfigError(name, f"must lie in [0, 1{bracket}, got {value!r}")
    return float(value)


def check_features(X, n_features=None, name="X"):
    """2-d finite float array, optionally with a fixed column count."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"{name} has {X.shape[1]} features, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_bag_labels(y):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("bag labels must be 1-dimensional")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("bag labels must be +1 or -1")
    return y.astype(int)


def make_rng(seed):
    """``numpy.random.Generator`` from an int, None, or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
