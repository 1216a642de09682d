"""Laplacian spectra, the spectral distance, and the alignment penalties.

The alignment losses are built on the autodiff tape: features -> similarity ->
k-NN mask (constant) -> degrees -> normalized Laplacian -> eigenvalues ->
p-norm of the sorted spectrum difference. Random-walk spectra are computed from
the similarity-transformed symmetric matrix D^{-1/2} A D^{-1/2}, which shares
its eigenvalues with D^{-1} A.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graph as graph_mod
from .errors import DimensionError, ParameterError


@dataclass
class Spectrum:
    """Descending-sorted Laplacian eigenvalues of one graph."""

    values: np.ndarray
    laplacian_kind: str = "sym"
    origin: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if (np.diff(self.values) > 1e-12).any():
            raise ParameterError("spectrum values must be sorted descending")


def _spectral_operator(adjacency, degree, kind):
    if kind == "rwk":
        return graph_mod.normalized_adjacency(adjacency, degree)
    if kind == "sym":
        return graph_mod.laplacian_from_parts(adjacency, degree, "sym")
    raise ParameterError(f"unknown laplacian kind {kind!r}")


def spectrum(g, origin=""):
    """Eigenvalue spectrum of a DomainGraph, sorted descending."""
    op = _spectral_operator(g.adjacency, g.degree, g.laplacian_kind)
    values = ad.sym_eigvals(op)
    return Spectrum(values, laplacian_kind=g.laplacian_kind, origin=origin)


def spectral_distance(a, b, p=2.0):
    """p-norm of the difference of two equal-length descending spectra."""
    va = a.values if isinstance(a, Spectrum) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, Spectrum) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionError(f"spectra differ in length: {va.shape} vs {vb.shape}")
    if not p >= 1.0:
        raise ParameterError(f"norm order must be >= 1, got {p}")
    return float(np.linalg.norm(va - vb, ord=p))


def spectrum_tensor(features, similarity="gaussian", k=5, laplacian="sym"):
    """Tape-tracked spectrum of the graph built from `features`.

    k=None keeps the raw (dense) similarity graph instead of sparsifying.
    """
    sim = graph_mod.similarity_matrix(features, similarity)
    adj = sim if k is None else graph_mod.knn_sparsify(sim, k)
    degree = adj.sum(axis=1)
    return ad.sym_eigvals(_spectral_operator(adj, degree, laplacian))


def alignment_loss(
    features_s,
    features_t,
    similarity="gaussian",
    k=5,
    laplacian="sym",
    p=2.0,
    detach_source=True,
):
    """Spectral alignment penalty between source and target feature batches."""
    if not p >= 1.0:
        raise ParameterError(f"norm order must be >= 1, got {p}")
    if ad.value(features_s).shape[0] != ad.value(features_t).shape[0]:
        raise DimensionError("source and target batches must have equal size")
    if detach_source and isinstance(features_s, ad.Tensor):
        features_s = features_s.detach()
    spec_s = spectrum_tensor(features_s, similarity, k, laplacian)
    spec_t = spectrum_tensor(features_t, similarity, k, laplacian)
    return ad.pnorm(spec_s - spec_t, p)


def alignment_loss_plus(
    features_s,
    features_t,
    features_a,
    similarity="gaussian",
    k=5,
    laplacian="sym",
    p=2.0,
    detach_source=True,
):
    """Augmented penalty: distance(source, target) + distance(source, augmented)."""
    if detach_source and isinstance(features_s, ad.Tensor):
        features_s = features_s.detach()
    spec_s = spectrum_tensor(features_s, similarity, k, laplacian)
    spec_t = spectrum_tensor(features_t, similarity, k, laplacian)
    spec_a = spectrum_tensor(features_a, similarity, k, laplacian)
    return ad.pnorm(spec_s - spec_t, p) + ad.pnorm(spec_s - spec_a, p)


@dataclass
class AlignmentResult:
    """Loss value plus gradients w.r.t. the participating feature batches."""

    value: float
    source_grad: np.ndarray | None
    target_grad: np.ndarray
    augmented_grad: np.ndarray | None = None


def _check_pair(gs, gt, p):
    if gs.n != gt.n:
        raise DimensionError(f"graphs differ in size: {gs.n} vs {gt.n}")
    if gs.laplacian_kind != gt.laplacian_kind:
        raise ParameterError("graphs must share the laplacian kind")
    if not p >= 1.0:
        raise ParameterError(f"norm order must be >= 1, got {p}")


def gsa_loss(gs, gt, p=2.0, detach_source=True):
    """Alignment penalty for two built graphs, with feature gradients.

    Both graphs must have been produced by build_graph so that they carry the
    feature batches the penalty differentiates against.
    """
    _check_pair(gs, gt, p)
    fs = ad.Tensor(gs.batch.features, requires_grad=not detach_source)
    ft = ad.Tensor(gt.batch.features, requires_grad=True)
    loss = alignment_loss(
        fs, ft,
        similarity=gs.similarity_kind, k=gs.k,
        laplacian=gs.laplacian_kind, p=p,
        detach_source=detach_source,
    )
    loss.backward()
    source_grad = fs.grad if not detach_source else None
    return AlignmentResult(float(loss.data), source_grad, ft.grad)


def gsa_plus_loss(gs, gt, ga, p=2.0, detach_source=True):
    """Augmented alignment penalty for three built graphs."""
    _check_pair(gs, gt, p)
    _check_pair(gs, ga, p)
    fs = ad.Tensor(gs.batch.features, requires_grad=not detach_source)
    ft = ad.Tensor(gt.batch.features, requires_grad=True)
    fa = ad.Tensor(ga.batch.features, requires_grad=True)
    loss = alignment_loss_plus(
        fs, ft, fa,
        similarity=gs.similarity_kind, k=gs.k,
        laplacian=gs.laplacian_kind, p=p,
        detach_source=detach_source,
    )
    loss.backward()
    source_grad = fs.grad if not detach_source else None
    return AlignmentResult(float(loss.data), source_grad, ft.grad, fa.grad)
