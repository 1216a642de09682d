import numpy as np
import pytest

from specalign import autodiff as ad
from specalign import graph, linalg, spectral
from specalign.errors import DimensionError, ParameterError
from specalign.graph import DomainGraph, FeatureBatch, build_graph
from specalign.verify import finite_difference


def k3_graph(kind="sym"):
    return DomainGraph(np.ones((3, 3)) - np.eye(3), laplacian_kind=kind, k=2)


def p3_graph(kind="sym"):
    a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    return DomainGraph(a, laplacian_kind=kind, k=1)


def test_spectrum_k3_sym():
    spec = spectral.spectrum(k3_graph())
    assert np.allclose(spec.values, [1.5, 1.5, 0.0], atol=1e-9)


def test_spectrum_k3_rwk():
    spec = spectral.spectrum(k3_graph("rwk"))
    assert np.allclose(spec.values, [1.0, -0.5, -0.5], atol=1e-9)


def test_spectral_distance_identical_zero():
    a = spectral.spectrum(k3_graph())
    assert spectral.spectral_distance(a, a) == 0.0


def test_spectral_distance_k3_vs_p3():
    d = spectral.spectral_distance(
        spectral.spectrum(k3_graph()), spectral.spectrum(p3_graph()), 2.0
    )
    assert d == pytest.approx(np.sqrt(0.5), abs=1e-9)


def test_spectral_distance_p1_hand_case():
    d = spectral.spectral_distance(np.array([2.0, 1.0, 0.0]), np.array([1.0, 1.0, 0.0]), 1.0)
    assert d == pytest.approx(1.0)


def test_spectral_distance_validation():
    with pytest.raises(DimensionError):
        spectral.spectral_distance(np.ones(3), np.ones(4))
    with pytest.raises(ParameterError):
        spectral.spectral_distance(np.ones(3), np.ones(3), p=0.5)


def test_pseudo_metric_properties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(4, 12))
        graphs = [build_graph(FeatureBatch(rng.normal(size=(n, 3))), k=3) for _ in range(3)]
        s = [spectral.spectrum(g).values for g in graphs]
        dab = spectral.spectral_distance(s[0], s[1])
        dba = spectral.spectral_distance(s[1], s[0])
        dac = spectral.spectral_distance(s[0], s[2])
        dbc = spectral.spectral_distance(s[1], s[2])
        assert dab >= 0.0
        assert dab == pytest.approx(dba, abs=1e-15)
        assert dac <= dab + dbc + 1e-9


def test_isomorphic_graphs_distance_zero():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = 8
        g = build_graph(FeatureBatch(rng.normal(size=(n, 3))), k=3)
        perm = rng.permutation(n)
        permuted = DomainGraph(g.adjacency[np.ix_(perm, perm)], laplacian_kind="sym", k=3)
        d = spectral.spectral_distance(
            spectral.spectrum(g).values, spectral.spectrum(permuted).values
        )
        assert d < 1e-9


def test_partial_sums_monotone_and_bounded():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(2, 17))
        b1 = rng.normal(size=(n, n))
        b2 = rng.normal(size=(n, n))
        a, b = b1.T @ b1 / n, b2.T @ b2 / n
        la, lb = linalg.sym_eig(a).values, linalg.sym_eig(b).values
        partial = np.cumsum((la - lb) ** 2)
        assert (np.diff(partial) >= -1e-12).all()
        assert partial[-1] <= np.linalg.norm(a - b) ** 2 + 1e-9


def test_sym_spectrum_scale_invariance():
    rng = np.random.default_rng(3)
    g = build_graph(FeatureBatch(rng.normal(size=(10, 3))), k=4)
    scaled = DomainGraph(7.5 * g.adjacency, laplacian_kind="sym", k=4)
    d = spectral.spectral_distance(
        spectral.spectrum(g).values, spectral.spectrum(scaled).values
    )
    assert d < 1e-9


def test_gsa_loss_same_features_zero_with_zero_grad():
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(10, 3))
    gs = build_graph(FeatureBatch(feats.copy()), k=3)
    gt = build_graph(FeatureBatch(feats.copy()), k=3)
    result = spectral.gsa_loss(gs, gt)
    assert result.value == 0.0
    assert np.allclose(result.target_grad, 0.0)


def test_gsa_loss_gradient_matches_fd():
    rng = np.random.default_rng(5)
    fs = rng.normal(size=(8, 3))
    ft = rng.normal(size=(8, 3))
    gs = build_graph(FeatureBatch(fs), k=3)
    gt = build_graph(FeatureBatch(ft), k=3)
    result = spectral.gsa_loss(gs, gt)
    fd = finite_difference(
        lambda v: spectral.alignment_loss(fs, v, k=3), ft
    )
    rel = np.linalg.norm(result.target_grad - fd) / np.linalg.norm(fd)
    assert rel < 1e-4
    assert result.source_grad is None  # detached by default


def test_gsa_loss_source_grad_when_not_detached():
    rng = np.random.default_rng(6)
    gs = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    gt = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    result = spectral.gsa_loss(gs, gt, detach_source=False)
    assert result.source_grad is not None
    assert np.linalg.norm(result.source_grad) > 0


def test_gsa_descends_under_gradient_steps():
    rng = np.random.default_rng(7)
    fs = np.vstack([rng.normal(size=(4, 2)) + [3, 0], rng.normal(size=(4, 2)) - [3, 0]])
    ft = rng.normal(size=(8, 2)) * 2.0
    losses = []
    features = ft.copy()
    for _ in range(50):
        leaf = ad.Tensor(features, requires_grad=True)
        loss = spectral.alignment_loss(fs, leaf, k=3)
        loss.backward()
        losses.append(float(loss.data))
        features = features - 0.05 * leaf.grad
    decreases = sum(b < a for a, b in zip(losses, losses[1:]))
    assert decreases >= 45
    assert losses[-1] < losses[0]


def test_gsa_plus_identity_augmentation_doubles():
    rng = np.random.default_rng(8)
    gs = build_graph(FeatureBatch(rng.normal(size=(9, 3))), k=3)
    tf = rng.normal(size=(9, 3))
    gt = build_graph(FeatureBatch(tf.copy()), k=3)
    ga = build_graph(FeatureBatch(tf.copy()), k=3)
    pair = spectral.gsa_loss(gs, gt)
    aug = spectral.gsa_plus_loss(gs, gt, ga)
    assert aug.value == pytest.approx(2.0 * pair.value, abs=1e-15)
    assert aug.augmented_grad is not None


def test_gsa_plus_equals_sum_of_pairs():
    rng = np.random.default_rng(9)
    gs = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    gt = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    ga = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    total = spectral.gsa_plus_loss(gs, gt, ga)
    d1 = spectral.gsa_loss(gs, gt)
    d2 = spectral.gsa_loss(gs, ga)
    assert total.value == pytest.approx(d1.value + d2.value, abs=1e-12)


def test_gsa_loss_size_mismatch():
    rng = np.random.default_rng(10)
    gs = build_graph(FeatureBatch(rng.normal(size=(8, 3))), k=3)
    gt = build_graph(FeatureBatch(rng.normal(size=(6, 3))), k=3)
    with pytest.raises(DimensionError):
        spectral.gsa_loss(gs, gt)


def test_rwk_spectrum_matches_direct_eigenvalues():
    # the symmetrized similar matrix shares its spectrum with D^{-1} A
    rng = np.random.default_rng(11)
    g = build_graph(FeatureBatch(rng.normal(size=(10, 3))), k=4, laplacian="rwk")
    ours = spectral.spectrum(g).values
    direct = np.sort(np.linalg.eigvals(graph.laplacian(g)).real)[::-1]
    assert np.allclose(ours, direct, atol=1e-8)


def test_spectrum_tensor_raw_graph_option():
    rng = np.random.default_rng(12)
    feats = rng.normal(size=(7, 3))
    sparse = spectral.spectrum_tensor(feats, k=3)
    dense = spectral.spectrum_tensor(feats, k=None)
    assert sparse.shape == dense.shape
    assert not np.allclose(sparse, dense)
