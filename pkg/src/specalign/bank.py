"""Target-domain memory bank: sharpened prediction storage with EMA updates.

Entries are keyed by the global target sample index. Stored probability
vectors stay valid distributions under any update sequence; the class marginal
is maintained incrementally between the exact per-epoch refreshes.
"""

import json

import numpy as np

from .errors import CapacityError, DegenerateInputError, ParameterError

MARGINAL_FLOOR = 1e-6


def sharpen(p, tau, literal_negative=False):
    """Temperature-sharpen a probability vector and renormalize.

    The default exponent is 1/tau, which concentrates mass on the argmax as
    tau -> 0. `literal_negative` switches to the exponent -tau instead, which
    inverts the ordering; it exists only for compatibility experiments.
    """
    p = np.asarray(p, dtype=np.float64)
    if tau <= 0.0:
        raise ParameterError(f"sharpening temperature must be positive, got {tau}")
    total = p.sum()
    if total <= 0.0:
        raise DegenerateInputError("cannot sharpen an all-zero probability vector")
    exponent = -tau if literal_negative else 1.0 / tau
    powered = p ** exponent if not literal_negative else np.where(p > 0, p, MARGINAL_FLOOR) ** exponent
    return powered / powered.sum()


def class_balance(p, marginal):
    """Divide by the running class marginal (floored) and renormalize."""
    p = np.asarray(p, dtype=np.float64)
    marginal = np.maximum(np.asarray(marginal, dtype=np.float64), MARGINAL_FLOOR)
    scaled = p / marginal
    return scaled / scaled.sum()


class MemoryBank:
    """Per-target-sample sharpened probabilities and features, EMA-updated."""

    def __init__(self, capacity, class_count, feature_dim, tau=0.5, xi=0.5):
        if tau <= 0.0:
            raise ParameterError(f"tau must be positive, got {tau}")
        if not 0.0 <= xi < 1.0:
            raise ParameterError(f"xi must lie in [0, 1), got {xi}")
        self.capacity = int(capacity)
        self.class_count = int(class_count)
        self.feature_dim = int(feature_dim)
        self.tau = float(tau)
        self.xi = float(xi)
        self.probs = np.full((capacity, class_count), 1.0 / class_count)
        self.features = np.zeros((capacity, feature_dim))
        self.present = np.zeros(capacity, dtype=bool)
        self.class_marginal = np.full(class_count, 1.0 / class_count)

    @property
    def size(self):
        return int(self.present.sum())

    def _check_index(self, index):
        if not 0 <= index < self.capacity:
            raise KeyError(f"index {index} outside bank capacity {self.capacity}")

    def refine(self, p):
        """Sharpen a raw prediction and balance it by the running marginal."""
        return class_balance(sharpen(p, self.tau), self.class_marginal)

    def ema_update(self, index, p_new, f_new):
        """EMA-merge one refined entry: p <- xi*p_old + (1-xi)*p_new, renormalized.

        A first write to an empty slot inserts the new values directly. The
        class marginal is adjusted incrementally on every call.
        """
        self._check_index(index)
        p_new = np.asarray(p_new, dtype=np.float64)
        f_new = np.asarray(f_new, dtype=np.float64)
        n_present = self.size
        if self.present[index]:
            old = self.probs[index].copy()
            merged = self.xi * old + (1.0 - self.xi) * p_new
            merged = merged / merged.sum()
            self.probs[index] = merged
            self.features[index] = self.xi * self.features[index] + (1.0 - self.xi) * f_new
            self.class_marginal = self.class_marginal + (merged - old) / n_present
        else:
            self.probs[index] = p_new / p_new.sum()
            self.features[index] = f_new
            self.present[index] = True
            if n_present == 0:
                self.class_marginal = self.probs[index].copy()
            else:
                self.class_marginal = (
                    self.class_marginal * n_present + self.probs[index]
                ) / (n_present + 1)

    def refresh_class_marginal(self):
        """Recompute the marginal exactly from stored entries (per-epoch)."""
        if self.size == 0:
            self.class_marginal = np.full(self.class_count, 1.0 / self.class_count)
        else:
            self.class_marginal = self.probs[self.present].mean(axis=0)

    def knn_query(self, feature, k, exclude_index=None):
        """Indices of the k stored entries most cosine-similar to `feature`.

        Ties break toward the smaller index. `exclude_index` removes the
        query's own bank slot from consideration.
        """
        feature = np.asarray(feature, dtype=np.float64)
        candidates = np.flatnonzero(self.present)
        if exclude_index is not None:
            candidates = candidates[candidates != exclude_index]
        if candidates.size < k:
            raise CapacityError(f"bank holds {candidates.size} usable entries, need {k}")
        norm = np.linalg.norm(feature)
        if norm == 0.0:
            raise DegenerateInputError("cannot query with a zero feature vector")
        stored = self.features[candidates]
        stored_norms = np.linalg.norm(stored, axis=1)
        stored_norms = np.where(stored_norms > 0.0, stored_norms, 1.0)
        sims = stored @ feature / (stored_norms * norm)
        order = np.argsort(-sims, kind="stable")[:k]
        return candidates[order]

    def knn_query_batch(self, features, k, exclude_indices=None):
        """Vectorized knn_query for a batch; returns an (n, k) index array."""
        features = np.asarray(features, dtype=np.float64)
        candidates = np.flatnonzero(self.present)
        norms = np.linalg.norm(features, axis=1, keepdims=True)
        if (norms == 0.0).any():
            raise DegenerateInputError("cannot query with a zero feature vector")
        stored = self.features[candidates]
        stored_norms = np.linalg.norm(stored, axis=1)
        stored_norms = np.where(stored_norms > 0.0, stored_norms, 1.0)
        sims = (features / norms) @ (stored / stored_norms[:, None]).T
        if exclude_indices is not None:
            position = np.full(self.capacity, -1, dtype=np.int64)
            position[candidates] = np.arange(candidates.size)
            for row, idx in enumerate(np.asarray(exclude_indices)):
                pos = position[idx] if 0 <= idx < self.capacity else -1
                if pos >= 0:
                    sims[row, pos] = -np.inf
        usable = (sims > -np.inf).sum(axis=1).min()
        if usable < k:
            raise CapacityError(f"bank holds {usable} usable entries, need {k}")
        order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        return candidates[order]

    def dump(self, path):
        """Write one JSON record per stored entry (index, probs, feature)."""
        with open(path, "w", encoding="utf-8") as fh:
            for index in np.flatnonzero(self.present):
                record = {
                    "index": int(index),
                    "probs": self.probs[index].tolist(),
                    "feature": self.features[index].tolist(),
                }
                fh.write(json.dumps(record) + "\n")
