"""Accuracy metrics and the proxy A-distance probe."""

import numpy as np

from .errors import CapacityError, DimensionError

EMPTY_CLASS = float("nan")  # sentinel for classes absent from the eval set


def accuracy(predictions, labels):
    """Fraction of matching entries."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DimensionError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    return float((predictions == labels).mean())


def per_class_accuracy(predictions, labels, class_count):
    """Per-class accuracy; classes with no eval samples report NaN."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DimensionError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    out = np.full(class_count, EMPTY_CLASS)
    for cls in range(class_count):
        mask = labels == cls
        if mask.any():
            out[cls] = float((predictions[mask] == cls).mean())
    return out


def macro_accuracy(predictions, labels, class_count):
    """Mean of per-class accuracies over the classes that actually appear."""
    per = per_class_accuracy(predictions, labels, class_count)
    seen = ~np.isnan(per)
    return float(per[seen].mean()) if seen.any() else EMPTY_CLASS


def a_distance(features_s, features_t, seed=0, probe_steps=200):
    """Proxy A-distance 2(1 - 2 eps) from a linear domain probe, clamped to [0, 2].

    eps is the holdout error rate of a logistic probe trained on a 50/50
    split of the pooled, domain-labeled features.
    """
    features_s = np.asarray(features_s, dtype=np.float64)
    features_t = np.asarray(features_t, dtype=np.float64)
    if features_s.shape[0] < 20 or features_t.shape[0] < 20:
        raise CapacityError("a_distance needs at least 20 samples per domain")
    rng = np.random.default_rng(seed)

    def split(x):
        idx = rng.permutation(x.shape[0])
        half = x.shape[0] // 2
        return x[idx[:half]], x[idx[half:]]

    s_train, s_test = split(features_s)
    t_train, t_test = split(features_t)
    x_train = np.vstack([s_train, t_train])
    y_train = np.concatenate([np.ones(s_train.shape[0]), np.zeros(t_train.shape[0])])
    x_test = np.vstack([s_test, t_test])
    y_test = np.concatenate([np.ones(s_test.shape[0]), np.zeros(t_test.shape[0])])

    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 1e-9, std, 1.0)
    xtr = np.hstack([(x_train - mean) / std, np.ones((x_train.shape[0], 1))])
    xte = np.hstack([(x_test - mean) / std, np.ones((x_test.shape[0], 1))])
    w = np.zeros(xtr.shape[1])
    v = np.zeros_like(w)
    for _ in range(probe_steps):
        z = 1.0 / (1.0 + np.exp(-(xtr @ w)))
        grad = xtr.T @ (z - y_train) / xtr.shape[0]
        v = 0.9 * v + grad
        w = w - 0.5 * v
    predicted = (xte @ w > 0.0).astype(np.float64)
    eps = float((predicted != y_test).mean())
    return float(np.clip(2.0 * (1.0 - 2.0 * eps), 0.0, 2.0))
