import numpy as np
import pytest

from specalign import metrics
from specalign.errors import CapacityError, DimensionError


def test_accuracy_all_correct():
    assert metrics.accuracy(np.array([1, 0, 2]), np.array([1, 0, 2])) == 1.0


def test_accuracy_hand_case():
    got = metrics.accuracy(np.array([0, 1, 1, 0]), np.array([0, 1, 0, 0]))
    assert got == pytest.approx(0.75)


def test_accuracy_permutation_invariant():
    rng = np.random.default_rng(0)
    pred = rng.integers(0, 3, 50)
    labels = rng.integers(0, 3, 50)
    base = metrics.accuracy(pred, labels)
    perm = rng.permutation(50)
    assert metrics.accuracy(pred[perm], labels[perm]) == pytest.approx(base)


def test_accuracy_shape_mismatch():
    with pytest.raises(DimensionError):
        metrics.accuracy(np.zeros(3), np.zeros(4))


def test_per_class_accuracy_empty_class_sentinel():
    pred = np.array([0, 0, 1])
    labels = np.array([0, 1, 1])
    per = metrics.per_class_accuracy(pred, labels, class_count=3)
    assert per[0] == 1.0
    assert per[1] == 0.5
    assert np.isnan(per[2])
    macro = metrics.macro_accuracy(pred, labels, class_count=3)
    assert macro == pytest.approx(0.75)  # the empty class is excluded


def test_a_distance_identical_distributions_near_zero():
    rng = np.random.default_rng(1)
    values = []
    for seed in range(5):
        a = rng.normal(size=(100, 4))
        b = rng.normal(size=(100, 4))
        values.append(metrics.a_distance(a, b, seed=seed))
    assert abs(np.mean(values)) < 0.3


def test_a_distance_separated_clouds_near_two():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(100, 3))
    b = rng.normal(size=(100, 3)) + 10.0
    assert metrics.a_distance(a, b, seed=0) > 1.9


def test_a_distance_clamped_and_deterministic():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(50, 2))
    b = rng.normal(size=(50, 2))
    d1 = metrics.a_distance(a, b, seed=7)
    d2 = metrics.a_distance(a, b, seed=7)
    assert d1 == d2
    assert 0.0 <= d1 <= 2.0


def test_a_distance_capacity_check():
    rng = np.random.default_rng(4)
    with pytest.raises(CapacityError):
        metrics.a_distance(rng.normal(size=(10, 2)), rng.normal(size=(30, 2)))
