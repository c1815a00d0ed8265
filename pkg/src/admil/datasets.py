"""Synthetic MIL datasets and the dataset CSV format.

CSV layout, one row per instance, rows of a bag contiguous::

    bag_id,bag_label,instance_label,f_0,...,f_{D-1}

``bag_label`` is 1 or -1, ``instance_label`` 0 or 1, floats are written with
9 significant digits. Bags whose id starts with ``test`` form the test split,
all others the training split. If any instance has been removed from its bag
an extra ``live`` column (0/1) follows ``instance_label``.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bags import Bag, MilDataset
from .validation import ConfigError, check_positive_int, make_rng

FLOAT_FMT = "{:.9g}"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    """Gaussian-mixture bag generator settings.

    Positive bags draw their positives from one of ``n_positive_modes``
    modes (one mode per bag); all other instances come from a background of
    ``n_negative_modes`` negative modes. ``mode_weights`` skews how often
    each positive mode is used. A fraction ``outlier_rate`` of negatives are
    outliers placed ``10 * cluster_separation`` from the origin.
    """

    feature_dim: int = 8
    n_pos_bags: int = 30
    n_neg_bags: int = 30
    n_test_pos_bags: int = 20
    n_test_neg_bags: int = 20
    bag_size: int = 40
    bag_size_max: int = None
    positives_min: int = 1
    positives_max: int = 3
    n_positive_modes: int = 1
    n_negative_modes: int = 4
    mode_weights: tuple = None
    outlier_rate: float = 0.0
    cluster_separation: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("feature_dim", "n_pos_bags", "n_neg_bags", "n_test_pos_bags",
                     "n_test_neg_bags", "bag_size", "positives_min", "positives_max",
                     "n_positive_modes", "n_negative_modes"):
            check_positive_int(getattr(self, name), name)
        if self.positives_max < self.positives_min:
            raise ConfigError("positives_max", "must be >= positives_min")
        if self.bag_size_max is not None and self.bag_size_max < self.bag_size:
            raise ConfigError("bag_size_max", "must be >= bag_size")
        if self.bag_size < self.positives_max:
            raise ConfigError("bag_size", f"{self.bag_size} cannot hold up to "
                              f"{self.positives_max} positives")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ConfigError("outlier_rate", "must lie in [0, 1)")
        if not self.cluster_separation >= 0:
            raise ConfigError("cluster_separation", "must be nonnegative")
        if self.mode_weights is not None:
            w = tuple(float(x) for x in self.mode_weights)
            if len(w) != self.n_positive_modes or min(w) < 0 or sum(w) <= 0:
                raise ConfigError("mode_weights", "need one nonnegative weight per positive mode")
            object.__setattr__(self, "mode_weights", w)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown SynthConfig field")
        return cls(**doc)

    def to_dict(self):
        d = asdict(self)
        if d["mode_weights"] is not None:
            d["mode_weights"] = list(d["mode_weights"])
        return d


def _round9(a):
    return np.array([float(FLOAT_FMT.format(v)) for v in a.ravel()]).reshape(a.shape)


def _unit(rng, D):
    v = rng.normal(size=D)
    return v / np.linalg.norm(v)


def _mode_directions(rng, k, D):
    """``k`` unit vectors, mutually orthogonal while ``k <= D``."""
    Q, _ = np.linalg.qr(rng.normal(size=(D, D)))
    dirs = list(Q.T[:min(k, D)])
    dirs += [_unit(rng, D) for _ in range(k - len(dirs))]
    return np.array(dirs)


def generate(config=SynthConfig()):
    """Draw a :class:`MilDataset`; features are stored at CSV precision."""
    rng = make_rng(config.seed)
    D, sep = config.feature_dim, config.cluster_separation
    centers = sep * _mode_directions(rng, config.n_negative_modes + config.n_positive_modes, D)
    neg_centers = centers[:config.n_negative_modes]
    pos_centers = centers[config.n_negative_modes:]
    weights = np.ones(config.n_positive_modes) if config.mode_weights is None \
        else np.asarray(config.mode_weights)
    weights = weights / weights.sum()

    def negatives(m):
        X = neg_centers[rng.integers(config.n_negative_modes, size=m)] + rng.normal(size=(m, D))
        outlier = rng.random(m) < config.outlier_rate
        for i in np.flatnonzero(outlier):
            X[i] = 10 * sep * _unit(rng, D) + rng.normal(size=D)
        return X

    def bag_size():
        if config.bag_size_max is None:
            return config.bag_size
        return int(rng.integers(config.bag_size, config.bag_size_max + 1))

    def make(prefix, label, count):
        out = []
        for j in range(count):
            n = bag_size()
            X = negatives(n)
            t = np.zeros(n, int)
            if label == 1:
                n_pos = int(rng.integers(config.positives_min, config.positives_max + 1))
                mode = rng.choice(config.n_positive_modes, p=weights)
                slots = rng.choice(n, size=n_pos, replace=False)
                X[slots] = pos_centers[mode] + rng.normal(size=(n_pos, D))
                t[slots] = 1
            out.append(Bag(f"{prefix}-{'pos' if label == 1 else 'neg'}-{j:03d}", label,
                           _round9(X), t))
        return out

    return MilDataset(
        train_pos=make("train", 1, config.n_pos_bags),
        train_neg=make("train", -1, config.n_neg_bags),
        test_pos=make("test", 1, config.n_test_pos_bags),
        test_neg=make("test", -1, config.n_test_neg_bags),
        feature_dim=D)


def write_dataset(dataset, path):
    bags = dataset.all_bags()
    with_live = any(not b.live.all() for b in bags)
    header = ["bag_id", "bag_label", "instance_label"] + (["live"] if with_live else []) \
        + [f"f_{j}" for j in range(dataset.feature_dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for bag in bags:
            for i in range(len(bag)):
                row = [bag.id, bag.label, int(bag.oracle_labels[i])]
                if with_live:
                    row.append(int(bag.live[i]))
                row += [FLOAT_FMT.format(v) for v in bag.features[i]]
                w.writerow(row)


def read_dataset(path):
    """Parse and validate a dataset CSV; errors carry the offending line number."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["bag_id", "bag_label", "instance_label"]:
        raise DatasetFormatError(f"{path}:1: missing header bag_id,bag_label,instance_label,f_0,...")
    with_live = len(header) > 3 and header[3] == "live"
    lead = 4 if with_live else 3
    D = len(header) - lead
    if D < 1 or header[lead:] != [f"f_{j}" for j in range(D)]:
        raise DatasetFormatError(f"{path}:1: feature columns must be f_0..f_{{D-1}}")

    groups, order, closed = {}, [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        bag_id = row[0]
        try:
            bag_label, inst = int(row[1]), int(row[2])
            live = int(row[3]) if with_live else 1
            feats = [float(v) for v in row[lead:]]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
        if bag_label not in (1, -1):
            raise DatasetFormatError(f"{path}:{lineno}: bag_label must be 1 or -1, got {bag_label}")
        if inst not in (0, 1) or live not in (0, 1):
            raise DatasetFormatError(f"{path}:{lineno}: instance_label/live must be 0 or 1")
        if not all(math.isfinite(v) for v in feats):
            raise DatasetFormatError(f"{path}:{lineno}: non-finite feature value")
        if bag_id in closed:
            raise DatasetFormatError(f"{path}:{lineno}: rows of bag {bag_id} are not contiguous")
        if order and order[-1] != bag_id:
            closed.add(order[-1])
        if bag_id not in groups:
            groups[bag_id] = {"label": bag_label, "t": [], "live": [], "X": [], "line": lineno}
            order.append(bag_id)
        g = groups[bag_id]
        if g["label"] != bag_label:
            raise DatasetFormatError(f"{path}:{lineno}: bag {bag_id} changes its bag_label")
        g["t"].append(inst)
        g["live"].append(bool(live))
        g["X"].append(feats)
    if not order:
        raise DatasetFormatError(f"{path}: no data rows")

    split = {"train_pos": [], "train_neg": [], "test_pos": [], "test_neg": []}
    for bag_id in order:
        g = groups[bag_id]
        try:
            bag = Bag(bag_id, g["label"], np.array(g["X"]), np.array(g["t"]), np.array(g["live"]))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{g['line']}: {exc}") from None
        key = ("test" if bag_id.startswith("test") else "train") + ("_pos" if bag.label == 1 else "_neg")
        split[key].append(bag)
    return MilDataset(feature_dim=D, **split)
