import numpy as np
import pytest

from specalign import autodiff as ad
from specalign import model
from specalign.errors import DimensionError, NumericalError, ParameterError
from specalign.verify import finite_difference


def small_params(seed=0, d=3, c=3):
    return model.MlpParams(d, c, np.random.default_rng(seed), hidden=8, feature_dim=4)


def test_zero_weight_network_gives_uniform_probs():
    params = small_params()
    for _, tensor, _ in params.parameters():
        tensor.data = np.zeros_like(tensor.data)
    _, probs, _ = model.forward(params, np.random.default_rng(1).normal(size=(5, 3)))
    assert np.allclose(probs.data, 1.0 / 3.0)


def test_forward_deterministic_and_normalized():
    params = small_params()
    x = np.random.default_rng(2).normal(size=(7, 3))
    f1, p1, d1 = model.forward(params, x)
    f2, p2, d2 = model.forward(params, x)
    assert np.array_equal(p1.data, p2.data)
    assert np.array_equal(f1.data, f2.data)
    assert np.abs(p1.data.sum(axis=1) - 1.0).max() < 1e-9
    assert np.isfinite(d1.data).all()


def test_forward_dimension_check():
    params = small_params()
    with pytest.raises(DimensionError):
        model.forward(params, np.zeros((4, 5)))


def test_cls_loss_perfect_prediction_zero():
    probs = ad.Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    loss = model.cls_loss(probs, np.array([0, 1]), smoothing=0.0)
    assert float(loss.data) == pytest.approx(0.0)


def test_cls_loss_uniform_prediction_is_log_c():
    for c in (2, 4, 7):
        probs = ad.Tensor(np.full((3, c), 1.0 / c))
        labels = np.zeros(3, dtype=int)
        for eps in (0.0, 0.1, 0.3):
            loss = model.cls_loss(probs, labels, smoothing=eps)
            assert float(loss.data) == pytest.approx(np.log(c))


def test_cls_loss_hand_value_with_smoothing():
    probs = ad.Tensor(np.array([[0.7, 0.3]]))
    loss = model.cls_loss(probs, np.array([0]), smoothing=0.1)
    expected = -(0.9 * np.log(0.7) + 0.1 * np.log(0.3))
    assert float(loss.data) == pytest.approx(expected)


def test_cls_loss_validation():
    probs = ad.Tensor(np.full((2, 3), 1 / 3))
    with pytest.raises(ParameterError):
        model.cls_loss(probs, np.array([0, 3]))
    with pytest.raises(DimensionError):
        model.cls_loss(probs, np.array([0]))
    with pytest.raises(ParameterError):
        model.cls_loss(probs, np.array([0, 1]), smoothing=1.0)


def test_adv_loss_half_logits_give_log2():
    zeros = ad.Tensor(np.zeros((4, 1)))
    loss = model.adv_loss(zeros, ad.Tensor(np.zeros((3, 1))))
    assert float(loss.data) == pytest.approx(np.log(2.0))


def test_adv_loss_gradient_reversal_contract():
    rng = np.random.default_rng(3)
    params = small_params()
    x_s = rng.normal(size=(5, 3))
    x_t = rng.normal(size=(5, 3))

    def loss_of_lambda(lam):
        params.zero_grad()
        _, _, dl_s = model.forward(params, x_s, lam)
        _, _, dl_t = model.forward(params, x_t, lam)
        model.adv_loss(dl_s, dl_t).backward()
        return np.concatenate([
            t.grad.ravel() if t.grad is not None else np.zeros(t.data.size)
            for n, t, _ in params.parameters() if n.startswith("extractor")
        ])

    # lambda = 0 blocks the extractor entirely
    assert np.allclose(loss_of_lambda(0.0), 0.0)
    # the reversal scales linearly and flips the sign
    g1 = loss_of_lambda(1.0)
    g_half = loss_of_lambda(0.5)
    assert np.allclose(g_half, 0.5 * g1, atol=1e-12)
    assert np.linalg.norm(g1) > 0


def test_adv_loss_gradient_matches_fd_through_discriminator():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(4, 1))
    b = rng.normal(size=(1,))
    fs = rng.normal(size=(5, 4))
    ft = rng.normal(size=(5, 4))

    def fn(wv):
        ls, lt = fs @ wv + b, ft @ wv + b
        ps, pt = 1 / (1 + np.exp(-ls)), 1 / (1 + np.exp(-lt))
        return float((-np.log(ps).sum() - np.log(1 - pt).sum()) / 10)

    wt = ad.Tensor(w, requires_grad=True)
    bt = ad.Tensor(b)
    loss = model.adv_loss(ad.Tensor(fs) @ wt + bt, ad.Tensor(ft) @ wt + bt)
    loss.backward()
    fd = finite_difference(fn, w)
    assert np.linalg.norm(wt.grad - fd) / np.linalg.norm(fd) < 1e-6


def test_adv_loss_masked_matches_unmasked_for_pure_batches():
    rng = np.random.default_rng(5)
    dl_s = ad.Tensor(rng.normal(size=(4, 1)))
    dl_t = ad.Tensor(rng.normal(size=(4, 1)))
    reference = model.adv_loss(dl_s, dl_t)
    mixed = (
        4 * model.adv_loss_masked(dl_s, np.ones(4, dtype=bool))
        + 4 * model.adv_loss_masked(dl_t, np.zeros(4, dtype=bool))
    ) / 8.0
    assert float(mixed.data) == pytest.approx(float(reference.data))


def test_lambda_schedule_endpoints():
    assert model.lambda_schedule(0.0) == pytest.approx(0.0)
    assert model.lambda_schedule(1.0) == pytest.approx(2 / (1 + np.exp(-10)) - 1)
    assert model.lambda_schedule(1.0) < 1.0


def test_lr_schedule():
    assert model.lr_schedule(0.01, 0.0) == pytest.approx(0.01)
    assert model.lr_schedule(0.01, 1.0) == pytest.approx(0.01 * 11 ** -0.75)


def test_sgd_zero_gradient_no_motion():
    params = small_params()
    state = model.OptimizerState(params)
    before = [t.data.copy() for _, t, _ in params.parameters()]
    params.zero_grad()
    model.sgd_step(params, state, lr0=0.1, momentum=0.9, weight_decay=0.0, progress=0.0)
    for prev, (_, t, _) in zip(before, params.parameters()):
        assert np.array_equal(prev, t.data)


def test_sgd_hand_computed_momentum_step():
    params = small_params()
    state = model.OptimizerState(params)
    name, tensor, group = params.parameters()[0]
    tensor.grad = np.ones_like(tensor.data)
    before = tensor.data.copy()
    model.sgd_step(params, state, lr0=0.1, momentum=0.9, weight_decay=0.01, progress=0.0)
    want_v = np.ones_like(before) + 0.01 * before
    assert np.allclose(state.velocity[name], want_v)
    assert np.allclose(tensor.data, before - 0.1 * want_v)

    # second step folds the previous velocity in
    tensor.grad = np.ones_like(tensor.data)
    prev_v = state.velocity[name].copy()
    before2 = tensor.data.copy()
    model.sgd_step(params, state, lr0=0.1, momentum=0.9, weight_decay=0.01, progress=0.0)
    want_v2 = 0.9 * prev_v + np.ones_like(before2) + 0.01 * before2
    assert np.allclose(state.velocity[name], want_v2)
    assert np.allclose(tensor.data, before2 - 0.1 * want_v2)


def test_sgd_head_runs_ten_times_hotter():
    params = small_params()
    state = model.OptimizerState(params)
    back = params.extractor[0][0]
    head = params.classifier[0]
    back.grad = np.ones_like(back.data)
    head.grad = np.ones_like(head.data)
    b0, h0 = back.data.copy(), head.data.copy()
    model.sgd_step(params, state, lr0=0.01, momentum=0.0, weight_decay=0.0, progress=0.0)
    assert np.allclose(b0 - back.data, 0.01)
    assert np.allclose(h0 - head.data, 0.1)


def test_sgd_rejects_non_finite_gradient():
    params = small_params()
    state = model.OptimizerState(params)
    tensor = params.classifier[0]
    tensor.grad = np.full_like(tensor.data, np.nan)
    before = [t.data.copy() for _, t, _ in params.parameters()]
    with pytest.raises(NumericalError):
        model.sgd_step(params, state, 0.1, 0.9, 0.0, 0.0)
    for prev, (_, t, _) in zip(before, params.parameters()):
        assert np.array_equal(prev, t.data)


def test_supervised_path_fits_separable_data():
    rng = np.random.default_rng(6)
    n = 64
    x = np.vstack([rng.normal(size=(n, 2)) + [3, 0], rng.normal(size=(n, 2)) - [3, 0]])
    y = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
    params = model.MlpParams(2, 2, rng)
    state = model.OptimizerState(params)
    for step in range(500):
        idx = rng.permutation(2 * n)[:32]
        feats = model.extract_features(params, x[idx])
        loss = model.cls_loss(model.classify(params, feats), y[idx], smoothing=0.1)
        params.zero_grad()
        loss.backward()
        model.sgd_step(params, state, 0.01, 0.9, 0.005, 0.0)
        if step % 50 == 0:
            _, probs, _ = model.forward(params, x)
            if (probs.data.argmax(axis=1) == y).all():
                break
    _, probs, _ = model.forward(params, x)
    assert (probs.data.argmax(axis=1) == y).mean() == 1.0


def test_cls_gradient_matches_fd_on_small_network():
    rng = np.random.default_rng(7)
    params = small_params(seed=8)
    x = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, 6)

    def fn(v):
        _, probs, _ = model.forward(params, v)
        return float(model.cls_loss(probs, labels, smoothing=0.1).data)

    leaf = ad.Tensor(x, requires_grad=True)
    feats = model.extract_features(params, leaf)
    model.cls_loss(model.classify(params, feats), labels, smoothing=0.1).backward()
    fd = finite_difference(fn, x)
    assert np.linalg.norm(leaf.grad - fd) / np.linalg.norm(fd) < 1e-4


def test_checkpoint_roundtrip(tmp_path):
    params = small_params(seed=9)
    path = tmp_path / "checkpoint.bin"
    model.save_checkpoint(params, path)
    other = small_params(seed=10)
    assert not np.array_equal(other.extractor[0][0].data, params.extractor[0][0].data)
    model.load_checkpoint(other, path)
    for (_, a, _), (_, b, _) in zip(params.parameters(), other.parameters()):
        assert np.array_equal(a.data, b.data)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ParameterError):
        model.load_checkpoint(small_params(), path)
