"""Three-layer fully connected instance scorer with manual backpropagation.

Architecture: ``D -> 32 -> 16 -> 1`` with ReLU hidden activations, inverted
dropout after each hidden activation and a sigmoid output. Logits are
clamped to [-30, 30] so scores stay strictly inside (0, 1).
"""

import json
from dataclasses import dataclass

import numpy as np

from .validation import check_features, make_rng

HIDDEN = (32, 16)
LOGIT_CLAMP = 30.0
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True, eq=False)
class ScorerParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: float

    def __post_init__(self):
        D = np.shape(self.W1)[1]
        shapes = {"W1": (HIDDEN[0], D), "b1": (HIDDEN[0],), "W2": (HIDDEN[1], HIDDEN[0]),
                  "b2": (HIDDEN[1],), "W3": (1, HIDDEN[1])}
        for name, shape in shapes.items():
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        b3 = float(self.b3)
        if not np.isfinite(b3):
            raise ValueError("b3 is not finite")
        object.__setattr__(self, "b3", b3)

    @property
    def n_features(self):
        return self.W1.shape[1]

    def arrays(self):
        return [np.atleast_1d(getattr(self, k)) for k in PARAM_NAMES]

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec, n_features):
        vec = np.asarray(vec, dtype=np.float64)
        shapes = _shapes(n_features)
        if vec.size != sum(int(np.prod(s)) for s in shapes):
            raise ValueError("parameter vector has the wrong length")
        parts, i = [], 0
        for s in shapes:
            k = int(np.prod(s))
            parts.append(vec[i:i + k].reshape(s))
            i += k
        parts[-1] = float(parts[-1][0])
        return cls(*parts)

    def __eq__(self, other):
        if not isinstance(other, ScorerParams):
            return NotImplemented
        return np.array_equal(self.flat(), other.flat())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScorerGrad:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: float

    def arrays(self):
        return [np.atleast_1d(getattr(self, k)) for k in PARAM_NAMES]

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def __add__(self, other):
        return ScorerGrad(*(a + b for a, b in zip(self._raw(), other._raw())))

    def scale(self, c):
        return ScorerGrad(*(c * a for a in self._raw()))

    def _raw(self):
        return [getattr(self, k) for k in PARAM_NAMES]

    @classmethod
    def zeros_like(cls, params):
        return cls(*(np.zeros_like(np.asarray(getattr(params, k), dtype=float))
                     for k in PARAM_NAMES[:-1]), 0.0)


def _shapes(D):
    return [(HIDDEN[0], D), (HIDDEN[0],), (HIDDEN[1], HIDDEN[0]), (HIDDEN[1],), (1, HIDDEN[1]), (1,)]


def init(seed, n_features):
    """Weights uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, zero biases."""
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    rng = make_rng(seed)
    dims = (n_features,) + HIDDEN + (1,)
    Ws = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        Ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
    return ScorerParams(Ws[0], np.zeros(HIDDEN[0]), Ws[1], np.zeros(HIDDEN[1]), Ws[2], 0.0)


def zeros(n_features):
    return ScorerParams(np.zeros((HIDDEN[0], n_features)), np.zeros(HIDDEN[0]),
                        np.zeros((HIDDEN[1], HIDDEN[0])), np.zeros(HIDDEN[1]),
                        np.zeros((1, HIDDEN[1])), 0.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class ForwardCache:
    params: ScorerParams
    X: np.ndarray
    h1: np.ndarray
    m1: np.ndarray
    h2: np.ndarray
    m2: np.ndarray
    logit: np.ndarray
    score: np.ndarray


def forward(params, X, mode="eval", rng=None, dropout_rate=0.0, shared_mask=False):
    """Scores for the rows of ``X`` plus the cache needed by :func:`backward`.

    In ``"train"`` mode each hidden unit is zeroed with probability
    ``dropout_rate`` and survivors are scaled by ``1 / (1 - dropout_rate)``,
    so ``"eval"`` mode applies no rescaling. With ``shared_mask`` one mask
    is drawn per hidden layer and applied to every row, so all rows are
    scored by the same thinned network.
    """
    X = check_features(X, params.n_features)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    dropping = mode == "train" and dropout_rate > 0.0
    if dropping and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")

    def mask(shape):
        if not dropping:
            return None
        if shared_mask:
            shape = (1, shape[1])
        keep = rng.random(shape) >= dropout_rate
        return keep / (1.0 - dropout_rate)

    h1 = np.maximum(X @ params.W1.T + params.b1, 0.0)
    m1 = mask(h1.shape)
    a1 = h1 if m1 is None else h1 * m1
    h2 = np.maximum(a1 @ params.W2.T + params.b2, 0.0)
    m2 = mask(h2.shape)
    a2 = h2 if m2 is None else h2 * m2
    logit = (a2 @ params.W3.T).ravel() + params.b3
    score = _sigmoid(np.clip(logit, -LOGIT_CLAMP, LOGIT_CLAMP))
    return score, ForwardCache(params, X, h1, m1, h2, m2, logit, score)


def backward(params, cache, dscore):
    """Gradient of ``sum_r dscore[r] * score[r]`` with respect to the parameters."""
    if cache.params is not params:
        raise ValueError("stale cache: forward was run with different parameters")
    dscore = np.broadcast_to(np.asarray(dscore, dtype=np.float64), cache.score.shape)
    s = cache.score
    dlogit = dscore * s * (1.0 - s) * (np.abs(cache.logit) < LOGIT_CLAMP)
    a1 = cache.h1 if cache.m1 is None else cache.h1 * cache.m1
    a2 = cache.h2 if cache.m2 is None else cache.h2 * cache.m2

    dW3 = dlogit[None, :] @ a2
    db3 = float(dlogit.sum())
    da2 = np.outer(dlogit, params.W3[0])
    dh2 = da2 if cache.m2 is None else da2 * cache.m2
    dz2 = dh2 * (cache.h2 > 0)
    dW2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ params.W2
    dh1 = da1 if cache.m1 is None else da1 * cache.m1
    dz1 = dh1 * (cache.h1 > 0)
    dW1 = dz1.T @ cache.X
    db1 = dz1.sum(axis=0)
    return ScorerGrad(dW1, db1, dW2, db2, dW3, db3)


def predict_scores(params, X):
    return forward(params, X, mode="eval")[0]


class NonFiniteGradientError(FloatingPointError):
    pass


def sgd_step(params, grad, learning_rate):
    """``params - learning_rate * grad``; refuses non-finite gradients."""
    for name in PARAM_NAMES:
        g = np.asarray(getattr(grad, name), dtype=float)
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise NonFiniteGradientError(f"{bad} non-finite entries in gradient {name}")
        if np.shape(g) != np.shape(getattr(params, name)):
            raise ValueError(f"gradient {name} has shape {np.shape(g)}")
    return ScorerParams(*(getattr(params, k) - learning_rate * getattr(grad, k)
                          for k in PARAM_NAMES))


def save_checkpoint(params, path, seed=None):
    """JSON checkpoint: header (D, seed, layer order) plus the flat parameter vector."""
    doc = {"format": "admil-scorer/1", "n_features": params.n_features, "seed": seed,
           "layers": list(PARAM_NAMES),
           "shapes": [list(s) for s in _shapes(params.n_features)],
           "params": params.flat().tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "admil-scorer/1":
        raise ValueError(f"{path}: not a scorer checkpoint")
    return ScorerParams.from_flat(doc["params"], doc["n_features"]), doc.get("seed")
