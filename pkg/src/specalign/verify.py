"""Self-check suites: eigensolver contracts, spectral bounds, smoothing
consistency, the label-propagation oracle pair, and finite-difference gradient
checks. Each suite returns (ok, message); on failure the message carries the
first counterexample found.

These back both the `verify` CLI subcommand and the acceptance tests.
"""

import numpy as np

from . import augment as augment_mod
from . import autodiff as ad
from . import graph as graph_mod
from . import linalg
from . import model as model_mod
from . import propagate as propagate_mod
from . import spectral as spectral_mod
from .graph import FeatureBatch

GRAD_REL_TOL = 1e-4
FD_STEP = 1e-5


def finite_difference(fn, x, step=FD_STEP):
    """Central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.copy().ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = fn(xf.reshape(x.shape))
        xf[i] = orig - step
        lo = fn(xf.reshape(x.shape))
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def _rel_error(got, want):
    scale = max(np.linalg.norm(got.ravel()), np.linalg.norm(want.ravel()), 1e-8)
    return float(np.linalg.norm((got - want).ravel()) / scale)


def _matrix_str(m):
    return np.array2string(np.asarray(m), precision=6, max_line_width=100)


def _random_symmetric(rng, n):
    m = rng.normal(size=(n, n))
    return 0.5 * (m + m.T)


def _random_psd(rng, n):
    b = rng.normal(size=(n, n))
    return b.T @ b / n


def _random_graph(rng, n, d=3, k=3):
    batch = FeatureBatch(rng.normal(size=(n, d)))
    return graph_mod.build_graph(batch, similarity="gaussian", k=min(k, n - 1))


# ----- suites -------------------------------------------------------------


def check_eig(trials=200, seed=0):
    """Eigendecomposition reconstruction and orthonormality on random inputs."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(2, 17))
        m = _random_symmetric(rng, n)
        decomp = linalg.sym_eig(m)
        v, lam = decomp.vectors, decomp.values
        fro = np.linalg.norm(m)
        recon = np.abs((v * lam) @ v.T - m).max()
        ortho = np.abs(v.T @ v - np.eye(n)).max()
        if recon > 1e-6 * max(fro, 1e-12):
            return False, (
                f"trial {trial}: reconstruction error {recon:.3e} exceeds "
                f"1e-6*||M||_F for\n{_matrix_str(m)}"
            )
        if ortho > 1e-8:
            return False, (
                f"trial {trial}: V^T V deviates from I by {ortho:.3e} for\n"
                f"{_matrix_str(m)}"
            )
        if (np.diff(lam) > 1e-12).any():
            return False, f"trial {trial}: eigenvalues not sorted descending: {lam}"
    return True, f"{trials} random symmetric matrices reconstructed and orthonormal"


def check_spectral(trials=200, seed=0):
    """Partial-sum monotonicity, the Frobenius bound, metric axioms, and the
    triangle-vs-path worked value."""
    rng = np.random.default_rng(seed)
    # worked value: K3 vs P3 symmetric-normalized spectra at p=2
    k3 = np.ones((3, 3)) - np.eye(3)
    p3 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    spec_k3 = linalg.sym_eig(graph_mod.laplacian_from_parts(k3, k3.sum(1), "sym")).values
    spec_p3 = linalg.sym_eig(graph_mod.laplacian_from_parts(p3, p3.sum(1), "sym")).values
    worked = spectral_mod.spectral_distance(spec_k3, spec_p3, 2.0)
    if abs(worked - np.sqrt(0.5)) > 1e-9:
        return False, f"K3 vs P3 distance {worked!r} != sqrt(1/2)"

    for trial in range(trials):
        n = int(rng.integers(2, 17))
        a = _random_psd(rng, n)
        b = _random_psd(rng, n)
        la = linalg.sym_eig(a).values
        lb = linalg.sym_eig(b).values
        partial = np.cumsum((la - lb) ** 2)
        if (np.diff(partial) < -1e-12).any():
            return False, f"trial {trial}: partial sums decreased: {partial}"
        bound = np.linalg.norm(a - b) ** 2
        if partial[-1] > bound + 1e-9:
            return False, (
                f"trial {trial}: sum {partial[-1]:.6e} exceeds ||A-B||_F^2 "
                f"= {bound:.6e} for\nA=\n{_matrix_str(a)}\nB=\n{_matrix_str(b)}"
            )

    for trial in range(min(trials, 100)):
        n = int(rng.integers(4, 13))
        graphs = [_random_graph(rng, n) for _ in range(3)]
        spectra = [spectral_mod.spectrum(g).values for g in graphs]
        dab = spectral_mod.spectral_distance(spectra[0], spectra[1])
        dba = spectral_mod.spectral_distance(spectra[1], spectra[0])
        dac = spectral_mod.spectral_distance(spectra[0], spectra[2])
        dbc = spectral_mod.spectral_distance(spectra[1], spectra[2])
        if dab < 0.0 or abs(dab - dba) > 1e-12:
            return False, f"trial {trial}: symmetry/nonnegativity violated"
        if dac > dab + dbc + 1e-9:
            return False, f"trial {trial}: triangle inequality violated"
        perm = rng.permutation(n)
        permuted = graph_mod.DomainGraph(
            graphs[0].adjacency[np.ix_(perm, perm)],
            laplacian_kind=graphs[0].laplacian_kind,
            k=graphs[0].k,
        )
        iso = spectral_mod.spectral_distance(
            spectra[0], spectral_mod.spectrum(permuted).values
        )
        if iso > 1e-9:
            return False, f"trial {trial}: isomorphic graphs at distance {iso:.3e}"
    return True, f"{trials} PSD pairs satisfy the partial-sum and Frobenius bounds"


def check_smoothing(trials=100, seed=0):
    """Label-smoothing bound for random graphs and random linear maps."""
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(4, 21))
        d = int(rng.integers(1, 5))
        out_dim = int(rng.integers(1, 4))
        g = _random_graph(rng, n, d=d)
        x = rng.normal(size=(n, d))
        m = rng.normal(size=(out_dim, d))
        for i in range(n):
            lhs, bound = propagate_mod.smoothing_gap(g.adjacency, x, m, i)
            if lhs > bound + 1e-9:
                return False, (
                    f"trial {trial}, node {i}: lhs {lhs:.6e} exceeds bound "
                    f"{bound:.6e} for map\n{_matrix_str(m)}"
                )
    return True, f"{trials} random graphs satisfy the smoothing bound at every node"


def check_lpa(trials=12, seed=0):
    """Closed-form label propagation against the 500-step fixed-point oracle."""
    rng = np.random.default_rng(seed)
    sizes = [8, 16, 32, 64]
    for trial in range(trials):
        n = sizes[trial % len(sizes)]
        g = _random_graph(rng, n, d=3, k=min(5, n - 1))
        c = int(rng.integers(2, 5))
        y = np.zeros((n, c))
        seeds = rng.permutation(n)[: max(2, n // 4)]
        y[seeds, rng.integers(0, c, seeds.size)] = 1.0
        for pi in (0.1, 0.5, 0.9):
            closed = propagate_mod.lpa_closed_form(g.adjacency, y, pi)
            iterated = propagate_mod.lpa_iterative(g.adjacency, y, pi, steps=500)
            gap = np.abs(closed - iterated).max()
            if gap > 1e-6:
                return False, (
                    f"trial {trial}, pi={pi}: closed-form and iterative disagree "
                    f"by {gap:.3e} on an n={n} graph"
                )
    return True, f"{trials} graphs x 3 propagation strengths agree within 1e-6"


def _grad_check_cls(rng):
    n, d, c = 6, 3, 3
    params = model_mod.MlpParams(d, c, rng, hidden=8, feature_dim=4)
    x = rng.normal(size=(n, d))
    labels = rng.integers(0, c, n)

    def fn(xv):
        _, probs, _ = model_mod.forward(params, xv)
        return float(model_mod.cls_loss(probs, labels, smoothing=0.1).data)

    leaf = ad.Tensor(x, requires_grad=True)
    feats = model_mod.extract_features(params, leaf)
    loss = model_mod.cls_loss(model_mod.classify(params, feats), labels, smoothing=0.1)
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, x))


def _grad_check_adv(rng):
    n, fd = 5, 4
    w = rng.normal(size=(fd, 1))
    b = rng.normal(size=(1,))
    fs = rng.normal(size=(n, fd))
    ft = rng.normal(size=(n, fd))
    lam = float(rng.uniform(0.2, 1.0))

    def fn(fsv):
        ls = fsv @ w + b
        lt = ft @ w + b
        ps, pt = 1.0 / (1.0 + np.exp(-ls)), 1.0 / (1.0 + np.exp(-lt))
        return float(
            (-np.log(np.maximum(ps, 1e-12)).sum()
             - np.log(np.maximum(1.0 - pt, 1e-12)).sum()) / (2 * n)
        )

    leaf = ad.Tensor(fs, requires_grad=True)
    wt, bt = ad.Tensor(w), ad.Tensor(b)
    logits_s = ad.reverse_grad(leaf, lam) @ wt + bt
    logits_t = ad.Tensor(ft) @ wt + bt
    loss = model_mod.adv_loss(logits_s, logits_t)
    loss.backward()
    # through the reversal node the feature gradient must be -lam times the
    # true derivative of the loss
    return _rel_error(leaf.grad, -lam * finite_difference(fn, fs))


def _grad_check_gsa(rng):
    n, d = 8, 3
    fs = rng.normal(size=(n, d))
    ft = rng.normal(size=(n, d))

    def fn(ftv):
        return spectral_mod.alignment_loss(fs, ftv, k=3)

    leaf = ad.Tensor(ft, requires_grad=True)
    loss = spectral_mod.alignment_loss(fs, leaf, k=3)
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, ft))


def _grad_check_nap(rng):
    n, c = 6, 3
    logits = rng.normal(size=(n, c))
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    q = rng.uniform(0.1, 1.0, size=(n, c))
    pseudo = p.argmax(axis=1)
    prop = propagate_mod.PropagationResult(
        q, pseudo, q[np.arange(n), pseudo], np.zeros((n, 1), dtype=np.int64)
    )

    def fn(pv):
        picked = pv[np.arange(n), pseudo]
        return float(-(prop.confidence * np.log(np.maximum(picked, 1e-12))).sum() / n)

    leaf = ad.Tensor(p, requires_grad=True)
    loss = propagate_mod.nap_loss(leaf, prop)
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, p))


def _grad_check_con(rng):
    n, c = 5, 4
    p = rng.uniform(0.05, 1.0, size=(n, c))
    pa = rng.uniform(0.05, 1.0, size=(n, c))
    t, total, v = 3, 10, 0.7

    def fn(pv):
        w = augment_mod.ramp(t, total, v)
        return float(w * np.sqrt(((pv - pa) ** 2).sum(axis=1)).sum())

    leaf = ad.Tensor(p, requires_grad=True)
    loss = augment_mod.consistency_loss(leaf, ad.Tensor(pa), t, total, v)
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, p))


def _grad_check_eig_path(rng):
    n, d = 7, 3
    x = rng.normal(size=(n, d))
    weights = rng.normal(size=n)

    def fn(xv):
        vals = spectral_mod.spectrum_tensor(xv, k=3)
        return float(weights @ vals)

    leaf = ad.Tensor(x, requires_grad=True)
    vals = spectral_mod.spectrum_tensor(leaf, k=3)
    loss = (ad.Tensor(weights) * vals).sum()
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, x))


def _grad_check_eigvalues(rng):
    n = 5
    m = _random_symmetric(rng, n)
    weights = rng.normal(size=n)

    def fn(mv):
        return float(weights @ linalg.sym_eig(mv).values)

    leaf = ad.Tensor(m, requires_grad=True)
    loss = (ad.Tensor(weights) * ad.sym_eigvals(leaf)).sum()
    loss.backward()
    return _rel_error(leaf.grad, finite_difference(fn, m))


GRADIENT_CHECKS = (
    ("cls", _grad_check_cls),
    ("adv", _grad_check_adv),
    ("gsa", _grad_check_gsa),
    ("nap", _grad_check_nap),
    ("con", _grad_check_con),
    ("eig-values", _grad_check_eigvalues),
    ("eig-through-laplacian", _grad_check_eig_path),
)


def check_gradients(trials=10, seed=0):
    """Every differentiable loss against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, checker in GRADIENT_CHECKS:
        for trial in range(trials):
            err = checker(rng)
            worst[name] = max(worst.get(name, 0.0), err)
            if err > GRAD_REL_TOL:
                return False, (
                    f"{name} gradient: relative error {err:.3e} exceeds "
                    f"{GRAD_REL_TOL} on trial {trial}"
                )
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return True, f"all gradients within rel {GRAD_REL_TOL} of finite differences ({detail})"


SUITES = (
    ("eig", check_eig),
    ("spectral", check_spectral),
    ("smoothing", check_smoothing),
    ("lpa", check_lpa),
    ("gradients", check_gradients),
)


def run_suites(names=None, trials=None, seed=0, out=print):
    """Run the named suites (all by default); returns True iff all passed."""
    selected = [(n, f) for n, f in SUITES if names is None or n in names]
    all_ok = True
    for name, fn in selected:
        kwargs = {"seed": seed}
        if trials is not None:
            kwargs["trials"] = trials
        ok, message = fn(**kwargs)
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {message}")
        all_ok = all_ok and ok
    return all_ok
