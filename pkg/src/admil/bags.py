"""MIL data model: bags, datasets and the query ledger."""

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import DegenerateBagError, check_features


@dataclass(frozen=True)
class Instance:
    features: np.ndarray
    oracle_label: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Bag:
    """A bag of instance rows.

    ``oracle_labels`` are the hidden instance labels; learners only see them
    through a :class:`QueryLedger`. Removed instances are masked out of
    ``live`` rather than deleted so that indices stay stable.
    """

    id: str
    label: int
    features: np.ndarray
    oracle_labels: np.ndarray
    live: np.ndarray = None

    def __post_init__(self):
        X = check_features(self.features, name=f"bag {self.id} features")
        t = np.asarray(self.oracle_labels).astype(int).ravel()
        live = np.ones(len(t), bool) if self.live is None else np.asarray(self.live, bool)
        if self.label not in (1, -1):
            raise ValueError(f"bag {self.id}: label must be +1 or -1, got {self.label}")
        if len(X) == 0:
            raise DegenerateBagError(f"bag {self.id} has no instances")
        if len(t) != len(X) or live.shape != t.shape:
            raise ValueError(f"bag {self.id}: features, labels and mask lengths differ")
        if not np.all(np.isin(t, (0, 1))):
            raise ValueError(f"bag {self.id}: instance labels must be 0 or 1")
        if not live.any():
            raise DegenerateBagError(f"bag {self.id} has no live instances")
        if self.label == 1 and not t[live].any():
            raise ValueError(f"bag {self.id}: positive bag has no live positive instance")
        if self.label == -1 and t.any():
            raise ValueError(f"bag {self.id}: negative bag contains a positive instance")
        object.__setattr__(self, "features", _frozen(X, np.float64))
        object.__setattr__(self, "oracle_labels", _frozen(t, np.int64))
        object.__setattr__(self, "live", _frozen(live, bool))

    def __len__(self):
        return len(self.oracle_labels)

    def __eq__(self, other):
        if not isinstance(other, Bag):
            return NotImplemented
        return (self.id == other.id and self.label == other.label
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.oracle_labels, other.oracle_labels)
                and np.array_equal(self.live, other.live))

    __hash__ = None

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def live_indices(self):
        return np.flatnonzero(self.live)

    @property
    def live_features(self):
        return self.features[self.live]

    @property
    def instances(self):
        return [Instance(x, int(t)) for x, t in zip(self.features, self.oracle_labels)]


@dataclass(frozen=True, eq=False)
class MilDataset:
    train_pos: tuple
    train_neg: tuple
    test_pos: tuple
    test_neg: tuple
    feature_dim: int

    def __post_init__(self):
        for name in ("train_pos", "train_neg", "test_pos", "test_neg"):
            bags = tuple(getattr(self, name))
            object.__setattr__(self, name, bags)
            want = 1 if name.endswith("pos") else -1
            for bag in bags:
                if bag.label != want:
                    raise ValueError(f"bag {bag.id} has label {bag.label} in {name}")
                if bag.n_features != self.feature_dim:
                    raise ValueError(
                        f"bag {bag.id} has {bag.n_features} features, expected {self.feature_dim}")
        ids = [b.id for b in self.all_bags()]
        if len(set(ids)) != len(ids):
            raise ValueError("bag ids must be unique")

    def __eq__(self, other):
        if not isinstance(other, MilDataset):
            return NotImplemented
        return self.feature_dim == other.feature_dim and all(
            tuple(getattr(self, k)) == tuple(getattr(other, k))
            for k in ("train_pos", "train_neg", "test_pos", "test_neg"))

    __hash__ = None

    def all_bags(self):
        return self.train_pos + self.train_neg + self.test_pos + self.test_neg

    def split(self, which):
        """Bags of the ``"train"`` or ``"test"`` split, positives first."""
        if which == "train":
            return self.train_pos + self.train_neg
        if which == "test":
            return self.test_pos + self.test_neg
        raise ValueError(f"unknown split {which!r}")

    def replace_bags(self, bags):
        """New snapshot with the given bags swapped in by id."""
        by_id = {b.id: b for b in bags}
        swap = lambda seq: tuple(by_id.get(b.id, b) for b in seq)
        return replace(self, train_pos=swap(self.train_pos), train_neg=swap(self.train_neg),
                       test_pos=swap(self.test_pos), test_neg=swap(self.test_neg))

    def positive_instance_fraction(self, which="train"):
        pos = [b for b in self.split(which) if b.label == 1]
        n = sum(len(b) for b in pos)
        return sum(int(b.oracle_labels.sum()) for b in pos) / n if n else 0.0


@dataclass
class QueryLedger:
    """Revealed instance labels keyed by bag id, then instance index."""

    entries: dict = field(default_factory=dict)

    def record(self, bag_id, index, label):
        seen = self.entries.setdefault(bag_id, {})
        index = int(index)
        if index in seen:
            raise ValueError(f"instance ({bag_id}, {index}) already queried")
        if label not in (0, 1):
            raise ValueError(f"revealed label must be 0 or 1, got {label!r}")
        seen[index] = int(label)

    def __contains__(self, key):
        bag_id, index = key
        return int(index) in self.entries.get(bag_id, {})

    def queried(self, bag_id):
        return self.entries.get(bag_id, {})

    def has_positive(self, bag_id):
        return any(v == 1 for v in self.entries.get(bag_id, {}).values())

    @property
    def cumulative_count(self):
        return sum(len(v) for v in self.entries.values())

    def __len__(self):
        return self.cumulative_count

    def items(self):
        """(bag_id, index, label) triples in insertion order."""
        for bag_id, seen in self.entries.items():
            for index, label in seen.items():
                yield bag_id, index, label

    def copy(self):
        return QueryLedger({k: dict(v) for k, v in self.entries.items()})


def remove_labeled_negative(bag, index, ledger=None):
    """Mask out a revealed-negative instance of a positive bag.

    When a ledger is given the revealed label is read from it; otherwise the
    instance's oracle label is used (the removal is only legal for negatives).
    """
    if bag.label != 1:
        raise ValueError(f"bag {bag.id}: removal only applies to positive bags")
    index = int(index)
    if not 0 <= index < len(bag) or not bag.live[index]:
        raise ValueError(f"bag {bag.id}: instance {index} is not live")
    if ledger is not None:
        revealed = ledger.queried(bag.id).get(index)
        if revealed is None:
            raise ValueError(f"bag {bag.id}: instance {index} has not been labeled")
    else:
        revealed = int(bag.oracle_labels[index])
    if revealed != 0:
        raise ValueError(f"bag {bag.id}: instance {index} is labeled positive")
    if bag.live.sum() == 1:
        raise DegenerateBagError(f"bag {bag.id}: removing instance {index} empties the bag")
    live = bag.live.copy()
    live[index] = False
    return replace(bag, live=live)


def live_scores(bag, scorer):
    """Eval-mode scores of the live instances, in index order.

    ``scorer`` is anything with a ``predict_proba``-style instance scorer:
    either :class:`~admil.network.ScorerParams` or a fitted estimator.
    """
    from .network import ScorerParams, predict_scores

    X = bag.live_features
    if isinstance(scorer, ScorerParams):
        return predict_scores(scorer, X)
    return np.asarray(scorer.decision_scores(X))
