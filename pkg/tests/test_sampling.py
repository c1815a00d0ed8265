import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admil.bags import Bag, QueryLedger, remove_labeled_negative
from admil.sampling import (DEFAULT_TH_H, ENTROPY, PF, RANDOM, Query, SamplerConfig,
                            check_query_set, entropy_select, f_entropy, pf_select, random_select)
from admil.validation import ConfigError


def bag(bag_id, n, positives=(0,), live=None):
    t = np.zeros(n, int)
    t[list(positives)] = 1
    return Bag(bag_id, 1, np.arange(n, dtype=float).reshape(-1, 1), t, live)


def fixture_bags():
    A = bag("A", 3)
    B = bag("B", 2)
    p = {"A": np.array([0.40, 0.35, 0.25]), "B": np.array([0.6, 0.4])}
    f = {"A": np.array([0.05, 0.02, 0.01]), "B": np.array([0.25, 0.10])}
    return [A, B], p, f


def test_f_entropy_values():
    assert f_entropy(0.5) == pytest.approx(math.log(2))
    assert f_entropy(0.0) == 0.0 and f_entropy(1.0) == 0.0
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(f_entropy(x), f_entropy(1 - x), atol=1e-15)
    assert DEFAULT_TH_H == pytest.approx(-(0.1 * math.log(0.1) + 0.9 * math.log(0.9)))


def test_pf_hand_trace():
    bags, p, f = fixture_bags()
    cfg = SamplerConfig(th_pf=0.3, k=2, bsize=3)
    q = pf_select(bags, p, f, QueryLedger(), cfg)
    assert q == [Query("A", 0, PF), Query("A", 1, PF), Query("B", 0, PF)]
    assert pf_select(bags, p, f, QueryLedger(), cfg) == q


def test_pf_all_easy_goes_to_entropy():
    bags, p, _ = fixture_bags()
    f = {"A": np.array([0.9, 0.5, 0.4]), "B": np.array([0.8, 0.45])}
    q = pf_select(bags, p, f, QueryLedger(), SamplerConfig(bsize=3))
    assert [x.source for x in q] == [ENTROPY] * 3
    assert q == entropy_select(bags, f, QueryLedger(), 3)


def test_pf_skips_bags_with_revealed_positive():
    bags, p, f = fixture_bags()
    led = QueryLedger()
    led.record("A", 2, 1)
    q = pf_select(bags, p, f, led, SamplerConfig(th_pf=0.3, k=2, bsize=2, th_h=0.0))
    assert [(x.bag_id, x.source) for x in q[:1]] == [("B", PF)]
    assert all(x.bag_id != "A" or x.source == ENTROPY for x in q)


def test_pf_readmits_bags_with_only_negatives():
    bags, p, f = fixture_bags()
    led = QueryLedger()
    led.record("A", 0, 0)
    q = pf_select(bags, p, f, led, SamplerConfig(th_pf=0.3, k=2, bsize=2))
    assert q == [Query("A", 1, PF), Query("A", 2, PF)]


def test_pf_accepts_live_only_p():
    A = bag("A", 3, positives=(2,), live=[False, True, True])
    q = pf_select([A], {"A": np.array([0.3, 0.7])}, {"A": np.array([0.0, 0.1, 0.2])},
                  QueryLedger(), SamplerConfig(k=1, bsize=1))
    assert q == [Query("A", 2, PF)]


def test_entropy_select_examples():
    b = bag("A", 3)
    assert entropy_select([b], {"A": np.array([0.5, 0.99, 0.01])}, QueryLedger(), 1) == \
        [Query("A", 0, ENTROPY)]
    c = bag("B", 2)
    flat = {"A": np.full(3, 0.5), "B": np.full(2, 0.5)}
    assert entropy_select([c, b], flat, QueryLedger(), 3) == \
        [Query("A", 0, ENTROPY), Query("A", 1, ENTROPY), Query("A", 2, ENTROPY)]
    led = QueryLedger()
    led.record("A", 0, 0)
    assert Query("A", 0, ENTROPY) not in entropy_select([b], flat, led, 3)


def test_random_select():
    bags = [bag("A", 3), bag("B", 2)]
    full = random_select(bags, QueryLedger(), 10, 0)
    assert sorted((q.bag_id, q.index) for q in full) == [("A", 0), ("A", 1), ("A", 2),
                                                        ("B", 0), ("B", 1)]
    assert {q.source for q in full} == {RANDOM}
    assert random_select(bags, QueryLedger(), 2, 4) == random_select(bags, QueryLedger(), 2, 4)


def test_random_select_uniform():
    bags = [bag("A", 6), bag("B", 4)]
    rng = np.random.default_rng(0)
    trials, counts = 10_000, np.zeros(10)
    keys = [("A", i) for i in range(6)] + [("B", i) for i in range(4)]
    for _ in range(trials):
        for q in random_select(bags, QueryLedger(), 3, rng):
            counts[keys.index((q.bag_id, q.index))] += 1
    freq = counts / trials
    p = 0.3
    se = math.sqrt(p * (1 - p) / trials)
    assert np.all(np.abs(freq - p) <= 3 * se)


def test_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig(th_pf=1.0)
    with pytest.raises(ConfigError):
        SamplerConfig(th_h=-0.1)
    with pytest.raises(ConfigError):
        SamplerConfig(bsize=0)


def test_check_query_set():
    led = QueryLedger()
    led.record("A", 0, 0)
    with pytest.raises(ValueError):
        check_query_set([Query("A", 0, PF)], led, 5)
    with pytest.raises(ValueError):
        check_query_set([Query("A", 1, PF)] * 2, led, 5)
    with pytest.raises(ValueError):
        check_query_set([Query("A", 1, PF), Query("A", 2, PF)], led, 1)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**31 - 1),
       st.floats(0.05, 0.95), st.floats(0, 0.7))
def test_pf_invariants(n_bags, k, bsize, seed, th_pf, th_h):
    rng = np.random.default_rng(seed)
    bags, p, f = [], {}, {}
    for j in range(n_bags):
        n = int(rng.integers(1, 7))
        bags.append(bag(f"b{j}", n, positives=(int(rng.integers(n)),)))
        p[f"b{j}"] = rng.dirichlet(np.ones(n))
        f[f"b{j}"] = rng.random(n)
    led = QueryLedger()
    for b in bags:
        if rng.random() < 0.3:
            led.record(b.id, 0, int(b.oracle_labels[0]))
    cfg = SamplerConfig(th_pf=th_pf, th_h=th_h, k=k, bsize=bsize)
    q = pf_select(bags, p, f, led, cfg)
    check_query_set(q, led, bsize)
    assert q == pf_select(bags, p, f, led, cfg)
    for x in q:
        if x.source == PF:
            cand = [i for i in range(len(f[x.bag_id])) if (x.bag_id, i) not in led]
            b_star = max(cand, key=lambda i: (p[x.bag_id][i], -i))
            assert f[x.bag_id][b_star] <= th_pf
            assert not led.has_positive(x.bag_id)
        else:
            assert f_entropy(f[x.bag_id][x.index]) >= th_h


def test_exploration_progress():
    """Fixed scores, repeated selection: every instance queried within ceil(n/k) steps."""
    n, k = 7, 2
    b = bag("A", n, positives=(6,))
    f = np.linspace(0.2, 0.01, n)
    p = np.full(n, 1 / n)
    led = QueryLedger()
    cfg = SamplerConfig(th_pf=0.3, k=k, bsize=k, th_h=10.0)
    for step in range(math.ceil(n / k)):
        q = pf_select([b], {"A": p}, {"A": f}, led, cfg)
        if not q:
            break
        for x in q:
            led.record("A", x.index, int(b.oracle_labels[x.index]))
            if b.oracle_labels[x.index] == 0:
                b = remove_labeled_negative(b, x.index, led)
        if led.has_positive("A"):
            break
    assert led.has_positive("A")
