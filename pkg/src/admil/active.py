"""Pool-based multiple-instance active learning loop."""

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .bags import QueryLedger, remove_labeled_negative
from .dro import DroConfig, robust_weights
from .estimator import DRBLMILClassifier
from .losses import BAG_LOSSES, ledger_arrays
from .metrics import bag_pool_map
from .sampling import (STRATEGIES, SamplerConfig, check_query_set, entropy_select,
                       f_entropy, pf_select, random_select)
from .validation import (ConfigError, check_nonnegative, check_positive_int,
                         check_unit_interval, make_rng)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    dropout_rate: float = 0.6
    seed: int = 0
    epochs_initial: int = 100
    epochs_per_step: int = 20
    batch_pairs: int = 1
    dropout_mask: str = "instance"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be positive")
        check_unit_interval(self.dropout_rate, "dropout_rate")
        check_positive_int(self.epochs_initial, "epochs_initial", minimum=0)
        check_positive_int(self.epochs_per_step, "epochs_per_step", minimum=0)
        check_positive_int(self.batch_pairs, "batch_pairs")
        if self.dropout_mask not in ("instance", "shared"):
            raise ConfigError("dropout_mask", "must be 'instance' or 'shared'")


@dataclass(frozen=True)
class ALConfig:
    strategy: str = "pf"
    steps: int = 10
    sampler: SamplerConfig = SamplerConfig()
    dro: DroConfig = DroConfig()
    train: TrainConfig = TrainConfig()
    beta: float = 1.0
    seed: int = 0
    loss: str = "drbl"
    pooled_map: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.loss not in BAG_LOSSES:
            raise ConfigError("loss", f"must be one of {BAG_LOSSES}, got {self.loss!r}")
        check_positive_int(self.steps, "steps", minimum=0)
        check_nonnegative(self.beta, "beta")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CurveRow:
    step: int
    cumulative_queries: int
    train_map: float
    test_map: float


@dataclass(eq=False)
class ALCurve:
    rows: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    ledger: QueryLedger = None
    estimator: DRBLMILClassifier = None

    def append(self, row):
        if self.rows and (row.step <= self.rows[-1].step
                          or row.cumulative_queries < self.rows[-1].cumulative_queries):
            raise ValueError("curve steps must increase and query counts must not decrease")
        self.rows.append(row)

    @property
    def final_test_map(self):
        return self.rows[-1].test_map

    def __len__(self):
        return len(self.rows)


def make_estimator(config, loss=None):
    return DRBLMILClassifier(
        loss=loss or config.loss, lam=config.dro.lam, divergence=config.dro.divergence,
        learning_rate=config.train.learning_rate, dropout=config.train.dropout_rate,
        epochs=config.train.epochs_initial, batch_pairs=config.train.batch_pairs,
        dropout_mask=config.train.dropout_mask, beta=config.beta, random_state=config.seed)


def train_passive(dataset, config=ALConfig()):
    """Passive training on bag labels only; returns the fitted estimator."""
    if not dataset.train_pos or not dataset.train_neg:
        raise ValueError("passive training needs positive and negative training bags")
    return make_estimator(config).fit(dataset.split("train"))


def oracle_label(dataset, queries, ledger):
    """Reveal the true labels of ``queries`` into ``ledger``; returns the delta."""
    by_id = {b.id: b for b in dataset.all_bags()}
    seen = set()
    for q in queries:
        bag = by_id.get(q.bag_id)
        if bag is None:
            raise ValueError(f"unknown bag {q.bag_id!r}")
        if not 0 <= q.index < len(bag) or not bag.live[q.index]:
            raise ValueError(f"instance ({q.bag_id}, {q.index}) is not live")
        key = (q.bag_id, int(q.index))
        if key in ledger or key in seen:
            raise ValueError(f"instance {key} was already queried")
        seen.add(key)
    delta = []
    for q in queries:
        label = int(by_id[q.bag_id].oracle_labels[q.index])
        ledger.record(q.bag_id, q.index, label)
        delta.append((q.bag_id, int(q.index), label))
    return delta


def _evaluate(est, dataset, pooled):
    scorer = est.decision_scores
    return (bag_pool_map(dataset.split("train"), scorer, pooled),
            bag_pool_map(dataset.split("test"), scorer, pooled))


def _check_positive_bags(dataset):
    for bag in dataset.train_pos:
        if not bag.oracle_labels[bag.live].any():
            raise AssertionError(f"positive bag {bag.id} lost its last positive instance")


def _pool_left(bags, ledger):
    return any((b.id, int(i)) not in ledger for b in bags for i in b.live_indices)


def run_al(dataset, config=ALConfig()):
    """Passive training, then ``config.steps`` rounds of query, label, prune, fine-tune, evaluate."""
    est = train_passive(dataset, config)
    ledger = QueryLedger()
    curve = ALCurve(ledger=ledger, estimator=est)
    curve.append(CurveRow(0, 0, *_evaluate(est, dataset, config.pooled_map)))
    pick_rng = make_rng([config.seed, 7919])

    for step in range(1, config.steps + 1):
        pos = dataset.train_pos
        scores = {b.id: est.decision_scores(b.features) for b in pos}
        if config.strategy == "pf":
            p = {b.id: robust_weights(scores[b.id][b.live], config.dro) for b in pos}
            queries = pf_select(pos, p, scores, ledger, config.sampler)
        elif config.strategy == "entropy":
            queries = entropy_select(pos, scores, ledger, config.sampler.bsize)
        else:
            queries = random_select(pos, ledger, config.sampler.bsize, pick_rng)
        if not queries and not _pool_left(pos, ledger):
            break
        check_query_set(queries, ledger, config.sampler.bsize)
        delta = oracle_label(dataset, queries, ledger)

        by_id = {b.id: b for b in pos}
        for (bag_id, index, label), q in zip(delta, queries):
            f = float(scores[bag_id][index])
            curve.queries.append((step, bag_id, index, q.source, f, f_entropy(f)))
            if label == 0:
                by_id[bag_id] = remove_labeled_negative(by_id[bag_id], index, ledger)
        dataset = dataset.replace_bags(by_id.values())
        _check_positive_bags(dataset)

        labeled = ledger_arrays(ledger, dataset.train_pos)
        est.fine_tune(dataset.split("train"), labeled=labeled,
                      epochs=config.train.epochs_per_step)
        curve.append(CurveRow(step, ledger.cumulative_count,
                              *_evaluate(est, dataset, config.pooled_map)))
    return curve


def _fmt7(v):
    return f"{v:.7g}"


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "cumulative_queries", "train_map", "test_map"])
        for r in curve.rows:
            w.writerow([r.step, r.cumulative_queries, _fmt7(r.train_map), _fmt7(r.test_map)])


def read_curve(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CurveRow(int(r["step"]), int(r["cumulative_queries"]),
                     float(r["train_map"]), float(r["test_map"])) for r in rows]


def write_query_log(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "bag_id", "instance_index", "source", "score", "entropy"])
        for step, bag_id, index, source, f, h in curve.queries:
            w.writerow([step, bag_id, index, source, _fmt7(f), _fmt7(h)])


def write_training_log(estimator, path):
    """Per-epoch loss breakdown (epoch, drbl, bce, total)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "drbl", "bce", "total"])
        for e, rec in enumerate(estimator.loss_curve_, start=1):
            w.writerow([e, _fmt7(rec["mil"]), _fmt7(rec["bce"]), _fmt7(rec["total"])])


def mean_curves(curves):
    """Element-wise mean of several curves of equal length (seed averaging)."""
    n = min(len(c.rows) for c in curves)
    out = []
    for i in range(n):
        rows = [c.rows[i] for c in curves]
        out.append(CurveRow(rows[0].step,
                            int(round(np.mean([r.cumulative_queries for r in rows]))),
                            float(np.mean([r.train_map for r in rows])),
                            float(np.mean([r.test_map for r in rows]))))
    return out
