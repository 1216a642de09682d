import dataclasses

import numpy as np
import pytest

from specalign import spectral
from specalign import trainer as trainer_mod
from specalign.data import ScenarioSpec, compose_scenario, make_two_moons
from specalign.errors import NumericalError, ParameterError
from specalign.graph import FeatureBatch
from specalign.trainer import TrainConfig, Trainer, beta_schedule, run


def tiny_scenario(seed=0, n=96, kind="uda", shots=0):
    domains = {
        0: make_two_moons(n, 0.0, 0.1, seed=(seed, 1), domain_id=0),
        1: make_two_moons(n, 45.0, 0.1, seed=(seed, 2), domain_id=1),
    }
    spec = ScenarioSpec(kind=kind, labeled_target_shots=shots)
    return compose_scenario(spec, domains, seed=seed)


def tiny_config(**kw):
    defaults = dict(
        mode="spa_plus_plus", epochs=2, batch_size=16, seed=0,
        pretrain_epochs=1, lr0=0.01,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def test_beta_schedule_endpoints():
    assert beta_schedule(100, 100, 0.2) == pytest.approx(0.2)
    assert beta_schedule(0, 100, 0.2) == pytest.approx(0.2 * np.exp(-5.0))
    assert beta_schedule(0, 100, 0.2) == pytest.approx(0.0013476, abs=1e-6)
    assert beta_schedule(50, 100, 0.0) == 0.0


def test_baseline_reduces_to_cls_plus_adv():
    sc = tiny_scenario()
    tr = Trainer(tiny_config(mode="baseline"), sc)
    report = tr.run()
    for rec in report.records[1:]:
        assert rec.loss_gsa == 0.0
        assert rec.loss_nap == 0.0
        assert rec.loss_con == 0.0
        assert rec.loss_total == pytest.approx(rec.loss_cls + rec.loss_adv, abs=1e-9)


def test_step_loss_decomposition():
    sc = tiny_scenario()
    cfg = tiny_config(mode="spa_plus_plus")
    tr = Trainer(cfg, sc)
    tr.pretrain()
    tr.initialize_bank()
    labeled, target = sc.labeled, sc.unlabeled_target
    rng = np.random.default_rng(0)
    for _ in range(4):
        il = rng.permutation(labeled.n)[:16]
        it = rng.permutation(target.n)[:16]
        lb = FeatureBatch(labeled.features[il], labels=labeled.labels[il],
                          indices=il, source_mask=sc.labeled_source_mask[il])
        tb = FeatureBatch(target.features[it], domain_tag="target", indices=it)
        rec = tr.train_step(lb, tb)
        recomposed = (
            rec.cls + rec.adv + cfg.alpha * rec.gsa + rec.beta * rec.nap + rec.con
        )
        assert rec.total == pytest.approx(recomposed, abs=1e-9)


def test_fixed_seed_reports_are_bitwise_identical():
    first = run(tiny_config(), tiny_scenario())
    second = run(tiny_config(), tiny_scenario())
    for a, b in zip(first.records, second.records):
        assert a.as_dict() == b.as_dict()
    assert first.summary == second.summary


def test_alpha_zero_never_touches_the_spectral_module(monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("spectral module should not be called")

    reference = run(tiny_config(mode="spa", alpha=0.0), tiny_scenario())
    monkeypatch.setattr(spectral, "alignment_loss", boom)
    monkeypatch.setattr(spectral, "alignment_loss_plus", boom)
    stubbed = run(tiny_config(mode="spa", alpha=0.0), tiny_scenario())
    for a, b in zip(reference.records, stubbed.records):
        assert a.as_dict() == b.as_dict()


def test_beta_zero_never_touches_propagation(monkeypatch):
    from specalign import propagate

    def boom(*args, **kwargs):
        raise AssertionError("propagation should not be called")

    reference = run(tiny_config(mode="spa", beta_max=0.0), tiny_scenario())
    monkeypatch.setattr(propagate, "neighbor_average", boom)
    stubbed = run(tiny_config(mode="spa", beta_max=0.0), tiny_scenario())
    for a, b in zip(reference.records, stubbed.records):
        assert a.as_dict() == b.as_dict()


def test_identity_augmentation_consistency_zero_and_double_gsa():
    from specalign import model as model_mod

    cfg = tiny_config(jitter_sigma=0.0, scale_lo=1.0, scale_hi=1.0, epochs=1)
    sc = tiny_scenario()
    tr = Trainer(cfg, sc)
    tr.pretrain()
    tr.initialize_bank()
    labeled, target = sc.labeled, sc.unlabeled_target
    il = np.arange(16)
    it = np.arange(16)
    lb = FeatureBatch(labeled.features[il], labels=labeled.labels[il],
                      indices=il, source_mask=sc.labeled_source_mask[il])
    tb = FeatureBatch(target.features[it], domain_tag="target", indices=it)
    # pair penalty on the pre-step parameters; the step's gsa++ must be
    # exactly twice it when the augmentation is the identity
    fl = model_mod.extract_features(tr.params, lb.features).data
    ft = model_mod.extract_features(tr.params, tb.features).data
    pair = spectral.alignment_loss(fl, ft, k=cfg.k)
    rec = tr.train_step(lb, tb)
    assert rec.con == 0.0
    assert rec.gsa == pytest.approx(2.0 * float(pair), abs=1e-12)


def test_zero_epochs_reports_initial_only():
    report = run(tiny_config(epochs=0), tiny_scenario())
    assert len(report.records) == 1
    assert report.records[0].epoch == 0
    assert report.summary["steps"] == 0


def test_msda_reports_per_domain_source_accuracy():
    domains = {
        0: make_two_moons(96, 0.0, 0.1, seed=(3, 1), domain_id=0),
        1: make_two_moons(96, 20.0, 0.1, seed=(3, 2), domain_id=1),
        2: make_two_moons(96, 45.0, 0.1, seed=(3, 3), domain_id=2),
    }
    spec = ScenarioSpec(kind="msda", source_domains=[0, 1], target_domains=[2])
    sc = compose_scenario(spec, domains, seed=3)
    report = run(tiny_config(epochs=1), sc)
    assert set(report.records[-1].acc_source_per_domain) == {"0", "1"}


def test_ssda_shots_join_supervised_pool():
    sc = tiny_scenario(kind="ssda", shots=3)
    assert (~sc.labeled_source_mask).sum() == 6
    report = run(tiny_config(epochs=1), sc)
    assert np.isfinite(report.records[-1].acc_target)


def test_non_finite_steps_rejected_then_abort(monkeypatch):
    from specalign import model as model_mod

    sc = tiny_scenario()
    cfg = tiny_config(mode="baseline", epochs=1)
    tr = Trainer(cfg, sc)
    tr.pretrain()

    real_cls = model_mod.cls_loss

    def poisoned(*args, **kwargs):
        out = real_cls(*args, **kwargs)
        out.data = np.asarray(np.nan)
        return out

    monkeypatch.setattr(model_mod, "cls_loss", poisoned)
    labeled, target = sc.labeled, sc.unlabeled_target
    lb = FeatureBatch(labeled.features[:16], labels=labeled.labels[:16],
                      indices=np.arange(16), source_mask=sc.labeled_source_mask[:16])
    tb = FeatureBatch(target.features[:16], domain_tag="target", indices=np.arange(16))
    assert tr.train_step(lb, tb).rejected
    assert tr.train_step(lb, tb).rejected
    with pytest.raises(NumericalError):
        tr.train_step(lb, tb)


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(mode="nonsense")
    with pytest.raises(ParameterError):
        TrainConfig(alpha=-1.0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=1)
    with pytest.raises(ParameterError):
        TrainConfig(conf_threshold=1.5)


def test_coefficient_sweep_is_stable():
    # desk-scale echo of the coefficient robustness analysis: small sweep,
    # tiny runs, accuracies must stay finite and within a loose band
    accs = []
    for alpha in (0.1, 0.5, 0.9):
        cfg = tiny_config(mode="spa", alpha=alpha, epochs=2)
        report = run(cfg, tiny_scenario(seed=5))
        accs.append(report.summary["final_acc_target"])
    assert max(accs) - min(accs) < 0.3


def test_sensitivity_tau_and_threshold_run_clean():
    for tau in (0.25, 1.0):
        cfg = tiny_config(tau=tau, epochs=1)
        report = run(cfg, tiny_scenario(seed=6))
        assert np.isfinite(report.summary["final_acc_target"])
    for c in (0.5, 0.95):
        cfg = tiny_config(conf_threshold=c, epochs=1)
        report = run(cfg, tiny_scenario(seed=6))
        assert np.isfinite(report.summary["final_acc_target"])
