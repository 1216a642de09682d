"""Neighbor-aware propagation, its confidence-weighted losses, and LPA oracles.

Closed-form label propagation lives here purely as a testing oracle for the
iterative bank-based mechanism; the training loop never solves the global
system.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import DegenerateInputError, DimensionError, ParameterError

LOG_FLOOR = 1e-12


@dataclass
class PropagationResult:
    """Neighbor-averaged predictions with pseudo-labels and confidences."""

    q: np.ndarray
    pseudo_labels: np.ndarray
    confidence: np.ndarray
    neighbor_indices: np.ndarray


def neighbor_average(memory, features, model_probs, k, self_indices=None):
    """Average each sample's k bank neighbors' stored predictions.

    The pseudo-label is the argmax of the model's own prediction row, not of
    the neighbor average; the confidence is the neighbor-average mass at that
    pseudo-label. Rows of q are used as-is, without renormalization.
    """
    features = np.asarray(features, dtype=np.float64)
    model_probs = np.asarray(model_probs, dtype=np.float64)
    neighbors = memory.knn_query_batch(features, k, exclude_indices=self_indices)
    q = memory.probs[neighbors].mean(axis=1)
    pseudo = model_probs.argmax(axis=1)
    confidence = q[np.arange(q.shape[0]), pseudo]
    return PropagationResult(q, pseudo, confidence, neighbors)


def nap_loss(p, prop):
    """Confidence-weighted pseudo-label cross-entropy, averaged over the batch.

    Gradients flow to `p` only; q and the pseudo-labels are constants.
    """
    n = ad.value(p).shape[0]
    if n != prop.pseudo_labels.shape[0]:
        raise DimensionError("predictions and propagation result disagree in size")
    picked = ad.take2d(p, np.arange(n), prop.pseudo_labels)
    logs = ad.log(ad.clip_min(picked, LOG_FLOOR))
    return -(prop.confidence * logs).sum() / float(n)


def nap_plus_loss(p, p_aug, prop, conf_threshold, average=False):
    """Gated variant: clean-prediction confidence gates, augmented log-term.

    Only samples whose clean max-probability reaches `conf_threshold`
    contribute; the log is evaluated on the augmented prediction at the clean
    pseudo-label. The default is the plain sum over samples; `average=True`
    restores 1/n scaling for comparability with nap_loss.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ParameterError(f"confidence threshold must be in [0,1], got {conf_threshold}")
    clean = ad.value(p)
    n = clean.shape[0]
    gate = (clean.max(axis=1) >= conf_threshold).astype(np.float64)
    picked = ad.take2d(p_aug, np.arange(n), prop.pseudo_labels)
    logs = ad.log(ad.clip_min(picked, LOG_FLOOR))
    total = -(gate * prop.confidence * logs).sum()
    return total / float(n) if average else total


def lpa_closed_form(adjacency, seed_labels, pi):
    """Closed-form label propagation: Z = (I - pi * D^{-1/2} A D^{-1/2})^{-1} Y."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    seed_labels = np.asarray(seed_labels, dtype=np.float64)
    if not 0.0 <= pi < 1.0:
        raise ParameterError(f"pi must lie in [0, 1), got {pi}")
    degree = adjacency.sum(axis=1)
    if (degree <= 0.0).any():
        raise DegenerateInputError("cannot normalize a graph with zero degree")
    dm = degree ** -0.5
    s = dm[:, None] * adjacency * dm[None, :]
    n = adjacency.shape[0]
    return linalg.solve(np.eye(n) - pi * s, seed_labels)


def lpa_iterative(adjacency, seed_labels, pi, steps=500):
    """Fixed-point oracle for lpa_closed_form: Z <- pi * S * Z + Y."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    seed_labels = np.asarray(seed_labels, dtype=np.float64)
    degree = adjacency.sum(axis=1)
    dm = degree ** -0.5
    s = dm[:, None] * adjacency * dm[None, :]
    z = seed_labels.copy()
    for _ in range(steps):
        z = pi * (s @ z) + seed_labels
    return z


def lpa_pseudo_labels(z):
    """Row argmax of a propagated label matrix."""
    return np.asarray(z).argmax(axis=1)


def smoothing_gap(adjacency, x, m, i):
    """Both sides of the label-smoothing bound at node i for a linear map.

    With y = x @ m.T and eps_i the feature smoothing residual
    x_i - (1/D_ii) sum_j A_ij x_j, returns
    (||y_i - (1/D_ii) sum_j A_ij y_j||, ||m||_op * ||eps_i||). For a linear
    map the higher-order remainder vanishes, so lhs <= bound holds exactly.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    degree = adjacency.sum(axis=1)
    if degree[i] <= 0.0:
        raise DegenerateInputError(f"node {i} has zero degree")
    y = x @ m.T
    x_avg = adjacency[i] @ x / degree[i]
    y_avg = adjacency[i] @ y / degree[i]
    eps = x[i] - x_avg
    lhs = float(np.linalg.norm(y[i] - y_avg))
    gram_top = linalg.sym_eig(m.T @ m).values[0]
    operator_norm = float(np.sqrt(max(gram_top, 0.0)))
    return lhs, operator_norm * float(np.linalg.norm(eps))
