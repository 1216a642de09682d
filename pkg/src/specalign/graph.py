"""Dynamic per-batch graph construction: similarity, k-NN sparsification, Laplacians.

The numeric helpers accept either plain numpy arrays or autodiff Tensors, so the
same code path serves both direct evaluation and gradient-tracked training. The
k-NN selection mask is always computed from forward values and treated as a
constant during backward; gradients flow only through the kept edge weights.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DegenerateInputError, DimensionError, ParameterError

SIMILARITY_KINDS = ("cosine", "gaussian", "euclidean")
LAPLACIAN_KINDS = ("sym", "rwk")

_TINY_SQ_DIST = 1e-24  # floor under squared distances before sqrt


@dataclass
class FeatureBatch:
    """An n x d block of feature vectors with optional labels and a domain tag."""

    features: np.ndarray
    labels: np.ndarray | None = None
    domain_tag: str = "source"
    indices: np.ndarray | None = None
    source_mask: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DimensionError(f"features must be n x d with n > 0, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise DegenerateInputError("features contain non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.indices is None:
            self.indices = np.arange(self.features.shape[0])
        else:
            self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.domain_tag not in ("source", "target", "augmented"):
            raise ParameterError(f"unknown domain tag {self.domain_tag!r}")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


def pairwise_sq_dists(features):
    """Matrix of squared Euclidean distances; works on arrays and Tensors."""
    sq = (features * features).sum(axis=1, keepdims=True)
    return sq + ad.transpose(sq) - 2.0 * (features @ ad.transpose(features))


def similarity_matrix(features, kind="gaussian"):
    """Symmetric nonnegative similarity matrix with an exactly zero diagonal.

    cosine    -> (1 + cos)/2
    gaussian  -> exp(-||f_i - f_j||^2 / (2 sigma^2)), sigma = median pairwise distance
    euclidean -> 1 / (1 + ||f_i - f_j||)
    """
    if kind not in SIMILARITY_KINDS:
        raise ParameterError(f"unknown similarity kind {kind!r}")
    data = ad.value(features)
    n = data.shape[0]
    if n < 2:
        raise DimensionError("need at least 2 samples to build a graph")
    off_diag = 1.0 - np.eye(n)

    if kind == "cosine":
        norms_sq = (features * features).sum(axis=1, keepdims=True)
        if (ad.value(norms_sq) <= 0.0).any():
            raise DegenerateInputError("cosine similarity undefined for zero-norm features")
        unit = features / ad.sqrt(norms_sq)
        cos = unit @ ad.transpose(unit)
        return 0.5 * (1.0 + cos) * off_diag

    d_sq = pairwise_sq_dists(features)
    if kind == "gaussian":
        iu = np.ravel_multi_index(np.triu_indices(n, k=1), (n, n))
        dists = ad.sqrt(ad.clip_min(ad.take_flat(d_sq, iu), _TINY_SQ_DIST))
        sigma = ad.clip_min(ad.median_of(dists), 1e-12)
        sim = ad.exp(d_sq / (-2.0 * sigma * sigma))
        return sim * off_diag

    dist = ad.sqrt(ad.clip_min(d_sq, _TINY_SQ_DIST))
    return (1.0 / (1.0 + dist)) * off_diag


def pairwise_similarity(batch, kind="gaussian"):
    """Spec-level wrapper: similarity matrix of a FeatureBatch."""
    return similarity_matrix(batch.features, kind)


def knn_mask(values, k):
    """Boolean OR-symmetrized mask keeping each row's k largest off-diagonal entries."""
    n = values.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    ranked = values.copy()
    np.fill_diagonal(ranked, -np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n)[:, None], order] = True
    return mask | mask.T


def knn_sparsify(s, k):
    """Keep each row's k strongest off-diagonal similarities, then symmetrize.

    For plain arrays this is the literal row-top-k followed by elementwise
    max(A, A^T). For Tensors (which always carry symmetric similarity values)
    the equivalent OR-mask is applied so that gradients pass through kept
    edges only.
    """
    if isinstance(s, ad.Tensor):
        return s * knn_mask(s.data, k).astype(np.float64)
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    ranked = s.copy()
    np.fill_diagonal(ranked, -np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    kept = np.zeros_like(s)
    rows = np.arange(n)[:, None]
    kept[rows, order] = s[rows, order]
    np.fill_diagonal(kept, 0.0)
    return np.maximum(kept, kept.T)


@dataclass
class DomainGraph:
    """Symmetric weighted adjacency with degrees and a Laplacian kind."""

    adjacency: np.ndarray
    laplacian_kind: str = "sym"
    k: int = 5
    similarity_kind: str = "gaussian"
    batch: FeatureBatch | None = None
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if self.laplacian_kind not in LAPLACIAN_KINDS:
            raise ParameterError(f"unknown laplacian kind {self.laplacian_kind!r}")
        if np.abs(a - a.T).max() > 1e-12:
            raise DegenerateInputError("adjacency is not symmetric within 1e-12")
        if np.abs(np.diag(a)).max() != 0.0:
            raise DegenerateInputError("adjacency diagonal must be exactly zero")
        if (a < 0.0).any():
            raise DegenerateInputError("adjacency weights must be nonnegative")
        self.degree = a.sum(axis=1)
        if (self.degree <= 0.0).any():
            raise DegenerateInputError("graph has an isolated vertex (zero degree)")

    @property
    def n(self):
        return self.adjacency.shape[0]


def build_graph(batch, similarity="gaussian", k=5, laplacian="sym"):
    """Similarity -> k-NN sparsification -> DomainGraph for one batch."""
    sim = pairwise_similarity(batch, similarity)
    adjacency = knn_sparsify(sim, k)
    return DomainGraph(
        adjacency,
        laplacian_kind=laplacian,
        k=k,
        similarity_kind=similarity,
        batch=batch,
    )


def laplacian_from_parts(adjacency, degree, kind):
    """Laplacian matrix from adjacency and degree; polymorphic over Tensors.

    sym -> I - D^{-1/2} A D^{-1/2}
    rwk -> D^{-1} A  (the random-walk transition matrix, written exactly so)
    """
    n = ad.value(adjacency).shape[0]
    if kind == "rwk":
        inv = degree ** -1.0
        return inv.reshape((n, 1)) * adjacency
    if kind == "sym":
        dm = degree ** -0.5
        return np.eye(n) - dm.reshape((n, 1)) * adjacency * dm.reshape((1, n))
    raise ParameterError(f"unknown laplacian kind {kind!r}")


def normalized_adjacency(adjacency, degree):
    """D^{-1/2} A D^{-1/2}; shares its spectrum with the random-walk matrix."""
    n = ad.value(adjacency).shape[0]
    dm = degree ** -0.5
    return dm.reshape((n, 1)) * adjacency * dm.reshape((1, n))


def laplacian(g):
    """Spec-level wrapper: Laplacian of a DomainGraph per its configured kind."""
    if (g.degree <= 0.0).any():
        raise DegenerateInputError("cannot normalize a graph with zero degree")
    return laplacian_from_parts(g.adjacency, g.degree, g.laplacian_kind)
