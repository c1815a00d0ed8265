"""scikit-learn style estimator around the instance scorer and the bag losses."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import network
from .bags import Bag
from .dro import DroConfig
from .losses import LossSpec, hybrid_loss_and_grad
from .validation import (check_bag_labels, check_features, check_nonnegative,
                         check_positive_int, check_unit_interval, make_rng)


def as_bags(bags, y=None):
    """Accept ``Bag`` objects, or feature matrices plus bag labels.

    Array bags get placeholder instance labels consistent with their bag
    label; those labels are never read during training.
    """
    bags = list(bags)
    if all(isinstance(b, Bag) for b in bags):
        return bags
    if y is None:
        raise ValueError("bag labels y are required when bags are arrays")
    y = check_bag_labels(y)
    if len(y) != len(bags):
        raise ValueError(f"{len(bags)} bags but {len(y)} labels")
    out = []
    for i, (X, label) in enumerate(zip(bags, y)):
        X = check_features(X, name=f"bag {i}")
        t = np.zeros(len(X), int)
        t[0] = label == 1
        out.append(Bag(f"bag{i:05d}", int(label), X, t))
    return out


class DRBLMILClassifier(ClassifierMixin, BaseEstimator):
    """Instance scorer trained from bag labels with a robust bag likelihood.

    Positive and negative training bags are shuffled and zipped into pairs
    each epoch; every mini-batch of ``batch_pairs`` pairs takes one SGD step
    on the mean pair hinge loss, plus ``beta`` times BCE over any labeled
    instances passed to :meth:`fit` or :meth:`fine_tune`.

    ``loss`` selects the positive-bag score: ``"drbl"`` (robust likelihood
    over a ``divergence`` ball of radius ``lam``), ``"ms"`` (max score),
    ``"topk"`` (mean of the top ``k``), ``"var"`` (mean plus ``C`` times the
    standard error) or ``"mean"``.
    """

    def __init__(self, loss="drbl", lam=0.01, divergence="chi2", k=1, C=0.1,
                 learning_rate=0.01, dropout=0.6, epochs=100, batch_pairs=1,
                 beta=1.0, dropout_mask="instance", random_state=0):
        self.loss = loss
        self.lam = lam
        self.divergence = divergence
        self.k = k
        self.C = C
        self.learning_rate = learning_rate
        self.dropout = dropout
        self.epochs = epochs
        self.batch_pairs = batch_pairs
        self.beta = beta
        self.dropout_mask = dropout_mask
        self.random_state = random_state

    def _loss_spec(self):
        return LossSpec(kind=self.loss, dro=DroConfig(lam=self.lam, divergence=self.divergence),
                        k=self.k, C=self.C)

    def _validate_params(self):
        check_nonnegative(self.learning_rate, "learning_rate")
        check_unit_interval(self.dropout, "dropout")
        check_nonnegative(self.beta, "beta")
        check_positive_int(self.epochs, "epochs", minimum=0)
        check_positive_int(self.batch_pairs, "batch_pairs")
        return self._loss_spec()

    def fit(self, bags, y=None, labeled=None):
        """Train from scratch for ``epochs`` epochs.

        ``labeled`` is an optional ``(X, t)`` pair of queried instances and
        their revealed 0/1 labels.
        """
        self._validate_params()
        bags = as_bags(bags, y)
        self.n_features_in_ = bags[0].n_features
        self.classes_ = np.array([0, 1])
        self._rng = make_rng(self.random_state)
        self.params_ = network.init(self._rng, self.n_features_in_)
        self.initial_params_ = self.params_
        self.loss_curve_ = []
        return self.fine_tune(bags, labeled=labeled, epochs=self.epochs)

    def fine_tune(self, bags, labeled=None, epochs=None, y=None):
        """Continue training the current parameters (warm start)."""
        check_is_fitted(self, "params_")
        spec = self._validate_params()
        bags = as_bags(bags, y)
        pos = [b for b in bags if b.label == 1]
        neg = [b for b in bags if b.label == -1]
        if not pos or not neg:
            raise ValueError("training needs at least one positive and one negative bag")
        if labeled is not None:
            labeled = (check_features(labeled[0], self.n_features_in_, "labeled X"),
                       np.asarray(labeled[1], dtype=float))
        epochs = self.epochs if epochs is None else check_positive_int(epochs, "epochs", 0)
        for _ in range(epochs):
            self.loss_curve_.append(self._epoch(pos, neg, labeled, spec))
        return self

    def _epoch(self, pos, neg, labeled, spec):
        rng = self._rng
        pos_order = rng.permutation(len(pos))
        neg_order = rng.permutation(len(neg))
        pairs = [(pos[i], neg[j]) for i, j in zip(pos_order, neg_order)]
        total, mil, bce = [], [], []
        for start in range(0, len(pairs), self.batch_pairs):
            batch = pairs[start:start + self.batch_pairs]
            out, grad = hybrid_loss_and_grad(
                batch, labeled, self.params_, spec, self.beta, mode="train",
                rng=rng, dropout_rate=self.dropout,
                shared_mask=self.dropout_mask == "shared")
            self.params_ = network.sgd_step(self.params_, grad, self.learning_rate)
            total.append(out.total)
            mil.append(out.drbl)
            bce.append(out.bce)
        return {"mil": float(np.mean(mil)), "bce": float(np.mean(bce)),
                "total": float(np.mean(total))}

    def decision_scores(self, X):
        """Eval-mode instance scores in (0, 1)."""
        check_is_fitted(self, "params_")
        return network.predict_scores(self.params_, check_features(X, self.n_features_in_))

    def predict_proba(self, X):
        s = self.decision_scores(X)
        return np.column_stack([1.0 - s, s])

    def decision_function(self, X):
        return self.decision_scores(X)

    def predict(self, X):
        return (self.decision_scores(X) >= 0.5).astype(int)

    def predict_bags(self, bags):
        """Bag labels in {+1, -1} from the max instance score."""
        out = []
        for b in bags:
            X = b.features if isinstance(b, Bag) else b
            out.append(1 if self.decision_scores(X).max() >= 0.5 else -1)
        return np.array(out)

    def score(self, X, y, sample_weight=None):
        """Average precision of instance scores against 0/1 instance labels."""
        from .metrics import average_precision
        return average_precision(self.decision_scores(X), y)
