"""Bag-pair hinge losses, instance BCE and the hybrid training objective.

Every bag loss has the form ``max(0, 1 - s(f_pos) + max(f_neg))`` where the
positive-bag score ``s`` is the max (MS-MIL), a top-k mean, the
variance-regularized mean, or the robust bag likelihood. Gradients with
respect to the positive scores are ``-ds/df_pos`` while the hinge is active;
for the robust likelihood the maximizer ``p`` is held fixed (envelope
theorem).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import network
from .dro import DroConfig, RobustWeights, empirical_variance, robust_weights
from .validation import check_nonnegative, check_scores

BAG_LOSSES = ("drbl", "ms", "topk", "var", "mean")


def _hinge(pos_score, f_neg):
    return max(0.0, 1.0 - pos_score + float(np.max(f_neg)))


def ms_mil_loss(f_pos, f_neg):
    f_pos = check_scores(f_pos, "f_pos")
    f_neg = check_scores(f_neg, "f_neg")
    return _hinge(float(f_pos.max()), f_neg)


def topk_mil_loss(f_pos, f_neg, k):
    f_pos = check_scores(f_pos, "f_pos")
    f_neg = check_scores(f_neg, "f_neg")
    if not 1 <= k <= f_pos.size:
        raise ValueError(f"k={k} out of range for a bag of {f_pos.size}")
    return _hinge(float(np.sort(f_pos)[-k:].mean()), f_neg)


def mean_score_loss(f_pos, f_neg):
    f_pos = check_scores(f_pos, "f_pos")
    f_neg = check_scores(f_neg, "f_neg")
    return _hinge(float(f_pos.mean()), f_neg)


def _var_value(f, C):
    return float(f.mean() + C * math.sqrt(empirical_variance(f) / f.size))


def variance_regularized_loss(f_pos, f_neg, C):
    f_pos = check_scores(f_pos, "f_pos")
    f_neg = check_scores(f_neg, "f_neg")
    check_nonnegative(C, "C")
    return _hinge(_var_value(f_pos, C), f_neg)


def drbl_hinge_loss(f_pos, f_neg, config=DroConfig()):
    """Hinge loss on the robust bag likelihood; also returns the maximizer."""
    f_pos = check_scores(f_pos, "f_pos")
    f_neg = check_scores(f_neg, "f_neg")
    rw = robust_weights(f_pos, config)
    return _hinge(rw.value, f_neg), rw


def _argmax_onehot(f):
    g = np.zeros(f.size)
    g[int(np.argmax(f))] = 1.0  # np.argmax picks the lowest index on ties
    return g


def drbl_loss_grad(f_pos, f_neg, config=DroConfig()):
    """Envelope gradient of :func:`drbl_hinge_loss` w.r.t. both score vectors."""
    loss, rw = drbl_hinge_loss(f_pos, f_neg, config)
    f_neg = np.asarray(f_neg, dtype=float)
    if loss <= 0.0:
        return np.zeros(len(rw.p)), np.zeros(f_neg.size)
    return -rw.p, _argmax_onehot(f_neg)


def positive_bag_weights(f_pos, kind, config=DroConfig(), k=1, C=0.1):
    """Positive-bag score and its gradient ``ds/df`` for each loss family."""
    n = f_pos.size
    if kind == "drbl":
        rw = robust_weights(f_pos, config)
        return rw.value, rw.p, rw
    if kind == "ms":
        return float(f_pos.max()), _argmax_onehot(f_pos), None
    if kind == "mean":
        return float(f_pos.mean()), np.full(n, 1.0 / n), None
    if kind == "topk":
        kk = min(k, n)
        top = np.argsort(-f_pos, kind="stable")[:kk]
        w = np.zeros(n)
        w[top] = 1.0 / kk
        return float(f_pos[top].mean()), w, None
    if kind == "var":
        var = empirical_variance(f_pos)
        w = np.full(n, 1.0 / n)
        if var > 0:
            w = w + C * (f_pos - f_pos.mean()) / (n**2 * math.sqrt(var / n))
        return _var_value(f_pos, C), w, None
    raise ValueError(f"unknown bag loss {kind!r}; expected one of {BAG_LOSSES}")


def bce_loss(f, t):
    f = np.asarray(f, dtype=float)
    t = np.asarray(t, dtype=float)
    if f.size == 0:
        raise ValueError("bce_loss needs at least one labeled instance")
    if f.shape != t.shape:
        raise ValueError("scores and labels differ in length")
    if np.any((f <= 0) | (f >= 1)):
        raise ValueError("scores must lie strictly inside (0, 1)")
    return float(-np.mean(t * np.log(f) + (1 - t) * np.log1p(-f)))


def bce_grad(f, t):
    f = np.asarray(f, dtype=float)
    t = np.asarray(t, dtype=float)
    return (f - t) / (f * (1 - f)) / f.size


@dataclass(eq=False)
class LossBreakdown:
    drbl: float
    bce: float
    total: float
    p_per_bag: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LossSpec:
    """Which bag loss to train with, and its knobs."""

    kind: str = "drbl"
    dro: DroConfig = DroConfig()
    k: int = 1
    C: float = 0.1

    def __post_init__(self):
        if self.kind not in BAG_LOSSES:
            raise ValueError(f"unknown bag loss {self.kind!r}; expected one of {BAG_LOSSES}")


def ledger_arrays(ledger, bags):
    """Features and revealed labels of every ledger entry, in ledger order."""
    by_id = {b.id: b for b in bags}
    X, t = [], []
    for bag_id, index, label in ledger.items():
        X.append(by_id[bag_id].features[index])
        t.append(label)
    if not X:
        return None
    return np.vstack(X), np.asarray(t, dtype=float)


def hybrid_loss_and_grad(pairs, labeled, params, loss=LossSpec(), beta=1.0,
                         mode="eval", rng=None, dropout_rate=0.0, need_grad=True,
                         shared_mask=False):
    """Mean pair hinge loss plus ``beta`` times BCE over the labeled set.

    ``pairs`` is a sequence of ``(positive Bag, negative Bag)``; only live
    positive instances enter the loss. ``labeled`` is ``(X, t)`` or None.
    All rows are pushed through the network in one forward pass.
    """
    if isinstance(loss, DroConfig):
        loss = LossSpec(dro=loss)
    beta = check_nonnegative(beta, "beta")
    blocks, spans = [], []
    for pos, neg in pairs:
        if pos.label != 1 or neg.label != -1:
            raise ValueError(f"pair ({pos.id}, {neg.id}) is not (positive, negative)")
        start = sum(len(b) for b in blocks)
        blocks.extend([pos.live_features, neg.features])
        spans.append((start, start + int(pos.live.sum()), start + int(pos.live.sum()) + len(neg)))
    use_bce = labeled is not None and beta > 0 and len(labeled[1]) > 0
    n_bag_rows = sum(len(b) for b in blocks)
    if use_bce:
        blocks.append(labeled[0])
    if not blocks:
        raise ValueError("nothing to evaluate: no pairs and no labeled instances")

    X = np.vstack(blocks)
    score, cache = network.forward(params, X, mode=mode, rng=rng, dropout_rate=dropout_rate,
                                   shared_mask=shared_mask)
    dscore = np.zeros_like(score)
    bag_total = 0.0
    p_per_bag = {}
    for (pos, neg), (a, b, c) in zip(pairs, spans):
        f_pos, f_neg = score[a:b], score[b:c]
        value, w, rw = positive_bag_weights(f_pos, loss.kind, loss.dro, loss.k, loss.C)
        if rw is not None:
            p_per_bag[pos.id] = rw
        h = _hinge(value, f_neg)
        bag_total += h
        if h > 0.0:
            dscore[a:b] -= w / len(pairs)
            dscore[b + int(np.argmax(f_neg))] += 1.0 / len(pairs)
    mil = bag_total / len(pairs) if pairs else 0.0

    bce = 0.0
    if use_bce:
        f_l = score[n_bag_rows:]
        t_l = labeled[1]
        bce = bce_loss(f_l, t_l)
        dscore[n_bag_rows:] += beta * bce_grad(f_l, t_l)
    out = LossBreakdown(drbl=mil, bce=bce, total=mil + beta * bce, p_per_bag=p_per_bag)
    if not need_grad:
        return out, None
    return out, network.backward(params, cache, dscore)


def hybrid_loss(pairs, labeled, params, loss=LossSpec(), beta=1.0):
    """Eval-mode hybrid loss value (see :func:`hybrid_loss_and_grad`)."""
    return hybrid_loss_and_grad(pairs, labeled, params, loss, beta, need_grad=False)[0]
