"""Instance query strategies for positive training bags.

Only live, not-yet-queried instances of positive bags are ever candidates;
negative bags carry no information worth an annotation.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .validation import ConfigError, check_positive_int, make_rng

PF, ENTROPY, RANDOM = "PF", "ENTROPY", "RANDOM"
STRATEGIES = ("pf", "entropy", "random")


def f_entropy(f):
    """Binary entropy in nats of a prediction score, with ``0 log 0 = 0``."""
    f = np.clip(np.asarray(f, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(f > 0, f * np.log(f), 0.0)
        b = np.where(f < 1, (1 - f) * np.log1p(-f), 0.0)
    h = -(a + b)
    return float(h) if h.ndim == 0 else h


# entropy of a 0.1 / 0.9 prediction, in nats
DEFAULT_TH_H = f_entropy(0.1)


@dataclass(frozen=True)
class SamplerConfig:
    th_pf: float = 0.3
    th_h: float = DEFAULT_TH_H
    bsize: int = 10
    k: int = 2

    def __post_init__(self):
        if not 0.0 < self.th_pf < 1.0:
            raise ConfigError("th_pf", f"must lie in (0, 1), got {self.th_pf!r}")
        if not self.th_h >= 0:
            raise ConfigError("th_h", f"must be nonnegative, got {self.th_h!r}")
        check_positive_int(self.bsize, "bsize")
        check_positive_int(self.k, "k")


class Query(NamedTuple):
    bag_id: str
    index: int
    source: str


def _per_instance(bag, values, what):
    """Align per-live-instance or per-instance values with the full bag."""
    if isinstance(values, (int, float)):
        raise TypeError(f"{what} for bag {bag.id} must be a sequence")
    v = np.asarray(getattr(values, "p", values), dtype=float)
    if v.size == len(bag):
        return v
    if v.size == int(bag.live.sum()):
        full = np.full(len(bag), np.nan)
        full[bag.live] = v
        return full
    raise ValueError(f"{what} for bag {bag.id} has length {v.size}, bag has {len(bag)}")


def _candidates(bag, ledger, taken=()):
    return [int(i) for i in bag.live_indices
            if (bag.id, int(i)) not in ledger and (bag.id, int(i)) not in taken]


def _by_desc(values, idx):
    # stable sort on -value keeps the lowest index first on ties
    return sorted(idx, key=lambda i: -values[i])


def _entropy_fill(bags, scores, ledger, budget, th_h, taken, source):
    pool = []
    for bag in bags:
        f = _per_instance(bag, scores[bag.id], "scores")
        for i in _candidates(bag, ledger, taken):
            h = f_entropy(f[i])
            if h >= th_h:
                pool.append((-h, bag.id, i))
    pool.sort()
    return [Query(bag_id, i, source) for _, bag_id, i in pool[:max(budget, 0)]]


def pf_select(bags, p_per_bag, scores, ledger, config=SamplerConfig()):
    """Bag exploration on the difficult bags, then F-Entropy with what budget is left.

    For each positive bag the representative instance ``b*`` is the unqueried
    live instance with the largest robust weight ``p``. Bags whose ``b*``
    scores at most ``th_pf`` are explored in ascending order of that score,
    taking up to ``k`` unqueried instances each by descending score; bags
    with an already revealed positive are skipped. The remaining budget goes
    to instances with entropy at least ``th_h``, highest first.
    """
    bags = [b for b in bags if b.label == 1]
    unexplored = []
    for order, bag in enumerate(bags):
        cand = _candidates(bag, ledger)
        if not cand:
            continue
        p = _per_instance(bag, p_per_bag[bag.id], "p")
        f = _per_instance(bag, scores[bag.id], "scores")
        b_star = _by_desc(p, cand)[0]
        if f[b_star] <= config.th_pf:
            unexplored.append((f[b_star], order, bag, f, cand))
    unexplored.sort(key=lambda u: (u[0], u[1]))

    picked = []
    for _, _, bag, f, cand in unexplored:
        if len(picked) >= config.bsize:
            break
        if ledger.has_positive(bag.id):
            continue
        for i in _by_desc(f, cand)[:config.k]:
            if len(picked) >= config.bsize:
                break
            picked.append(Query(bag.id, i, PF))

    taken = {(q.bag_id, q.index) for q in picked}
    picked += _entropy_fill(bags, scores, ledger, config.bsize - len(picked),
                            config.th_h, taken, ENTROPY)
    return picked


def entropy_select(bags, scores, ledger, bsize):
    """Top-``bsize`` unqueried instances by F-Entropy; ties by (bag id, index)."""
    check_positive_int(bsize, "bsize")
    bags = [b for b in bags if b.label == 1]
    return _entropy_fill(bags, scores, ledger, bsize, -math.inf, set(), ENTROPY)


def random_select(bags, ledger, bsize, rng=None):
    check_positive_int(bsize, "bsize")
    rng = make_rng(rng)
    pool = [(b.id, i) for b in bags if b.label == 1 for i in _candidates(b, ledger)]
    if not pool:
        return []
    pick = rng.choice(len(pool), size=min(bsize, len(pool)), replace=False)
    return [Query(pool[j][0], pool[j][1], RANDOM) for j in pick]


def check_query_set(queries, ledger, bsize):
    seen = set()
    for q in queries:
        key = (q.bag_id, q.index)
        if key in seen or key in ledger:
            raise ValueError(f"duplicate query {key}")
        seen.add(key)
    if len(queries) > bsize:
        raise ValueError(f"{len(queries)} queries exceed the budget of {bsize}")
