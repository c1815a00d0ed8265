import numpy as np


def average_precision(scores, labels):
    """Area under the step precision-recall curve.

    ``sum_k (R_k - R_{k-1}) P_k`` over descending score thresholds, where all
    instances sharing a score form a single threshold.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be binary")
    if not labels.any():
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    ends = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp_at = tp[ends]
    precision = tp_at / (ends + 1)
    recall = tp_at / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


mean_average_precision = average_precision


def bag_pool_map(bags, scorer, pooled=True):
    """Instance-level mAP over a collection of bags.

    ``pooled`` ranks all instances together; otherwise AP is averaged over the
    bags that contain at least one positive instance. ``scorer`` maps a
    feature matrix to scores. All instances count, live or not.
    """
    if pooled:
        X = np.vstack([b.features for b in bags])
        t = np.concatenate([b.oracle_labels for b in bags])
        return average_precision(scorer(X), t)
    aps = [average_precision(scorer(b.features), b.oracle_labels)
           for b in bags if b.oracle_labels.any()]
    return float(np.mean(aps))
