import numpy as np
import pytest

from admil.bags import Bag, MilDataset
from admil.datasets import SynthConfig, generate


@pytest.fixture
def tiny_dataset():
    cfg = SynthConfig(n_pos_bags=4, n_neg_bags=4, n_test_pos_bags=3, n_test_neg_bags=3,
                      bag_size=6, feature_dim=3, seed=3)
    return generate(cfg)


def make_bag(bag_id, label, t, D=2, seed=0, live=None):
    rng = np.random.default_rng(seed)
    t = np.asarray(t)
    return Bag(bag_id, label, rng.normal(size=(len(t), D)), t, live)


@pytest.fixture
def bag_factory():
    return make_bag


@pytest.fixture
def hand_dataset():
    pos = (make_bag("p0", 1, [0, 1, 0], seed=1), make_bag("p1", 1, [1, 0], seed=2))
    neg = (make_bag("n0", -1, [0, 0], seed=3), make_bag("n1", -1, [0, 0, 0], seed=4))
    tpos = (make_bag("test-p0", 1, [1, 0], seed=5),)
    tneg = (make_bag("test-n0", -1, [0, 0], seed=6),)
    return MilDataset(pos, neg, tpos, tneg, feature_dim=2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
