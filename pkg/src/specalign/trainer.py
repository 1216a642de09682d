"""Training loop: per-batch graphs, all losses, schedules, and reporting.

Modes:
  baseline       -- supervised + adversarial losses only (the DANN reduction)
  spa            -- adds the spectral alignment and neighbor-propagation terms
  spa_plus_plus  -- adds augmentation: augmented-graph alignment, gated
                    propagation on augmented predictions, and the consistency
                    term

Everything is driven by a single seed; two runs from the same resolved
configuration produce bitwise-identical reports.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import augment as augment_mod
from . import bank as bank_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import propagate as propagate_mod
from . import spectral as spectral_mod
from .errors import NumericalError, ParameterError
from .graph import FeatureBatch

MODES = ("baseline", "spa", "spa_plus_plus")
MAX_CONSECUTIVE_REJECTIONS = 3
EVAL_PROBE_CAP = 256


@dataclass
class TrainConfig:
    mode: str = "spa_plus_plus"
    alpha: float = 1.0
    beta_max: float = 0.2
    conf_threshold: float = 0.8
    tau: float = 0.5
    xi: float = 0.5
    k: int = 5
    similarity: str = "gaussian"
    laplacian: str = "sym"
    p_norm: float = 2.0
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.005
    batch_size: int = 32
    epochs: int = 30
    ramp_v: float = 1.0
    ramp_total: int = 0          # 0 -> use the total number of training steps
    label_smoothing: float = 0.1
    jitter_sigma: float = 0.05
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    nap_average: bool = False    # 1/n scaling for the gated propagation loss
    detach_source: bool = True
    use_raw_graph: bool = False  # skip k-NN sparsification in the spectral path
    pretrain_epochs: int = 15    # source-only warm start, the stand-in for a
                                 # pretrained backbone; adaptation starts after
    pretrain_lr: float = 0.01    # warm-start rate, decoupled from the
                                 # adaptation rate the way fine-tuning decouples
                                 # pretraining from transfer
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.alpha < 0.0 or self.beta_max < 0.0:
            raise ParameterError("loss coefficients must be >= 0")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ParameterError("confidence threshold must lie in [0, 1]")
        if self.batch_size < 2:
            raise ParameterError("batch size must be at least 2")


@dataclass
class StepRecord:
    total: float = 0.0
    cls: float = 0.0
    adv: float = 0.0
    gsa: float = 0.0
    nap: float = 0.0
    con: float = 0.0
    beta: float = 0.0
    rejected: bool = False


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_cls: float
    loss_adv: float
    loss_gsa: float
    loss_nap: float
    loss_con: float
    acc_source: float
    acc_target: float
    a_distance: float
    acc_source_per_domain: dict = field(default_factory=dict)
    rejected_steps: int = 0

    def as_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    records: list
    summary: dict


def beta_schedule(t, total, beta_max):
    """Propagation-loss weight: the consistency ramp shape scaled to beta_max."""
    return augment_mod.ramp(t, total, beta_max)


class Trainer:
    """Owns parameters, optimizer state, and the memory bank for one run."""

    def __init__(self, config, scenario):
        self.config = config
        self.scenario = scenario
        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.init_rng = np.random.default_rng(seeds[0])
        self.shuffle_rng = np.random.default_rng(seeds[1])
        augment_seed = int(np.random.default_rng(seeds[2]).integers(2**31))
        self.policy = augment_mod.AugmentPolicy(
            jitter_sigma=config.jitter_sigma,
            scale_range=(config.scale_lo, config.scale_hi),
            seed=augment_seed,
        )
        labeled = scenario.labeled
        self.params = model_mod.MlpParams(labeled.d, labeled.class_count, self.init_rng)
        self.opt_state = model_mod.OptimizerState(self.params)
        target = scenario.unlabeled_target
        self.memory = bank_mod.MemoryBank(
            capacity=target.n,
            class_count=labeled.class_count,
            feature_dim=self.params.feature_dim,
            tau=config.tau,
            xi=config.xi,
        )
        steps_per_epoch = min(labeled.n, target.n) // config.batch_size
        self.total_steps = config.epochs * steps_per_epoch
        self.steps_per_epoch = steps_per_epoch
        self.ramp_total = config.ramp_total if config.ramp_total > 0 else self.total_steps
        self.step_count = 0
        self._consecutive_rejections = 0
        self._bank_ready = False

    # ----- forward helpers ----------------------------------------------

    def _predict(self, x):
        features = model_mod.extract_features(self.params, np.asarray(x, dtype=np.float64))
        probs = model_mod.classify(self.params, features)
        return features.data, probs.data

    def initialize_bank(self):
        """Populate the memory with one full pass over the target pool."""
        target = self.scenario.unlabeled_target
        features, probs = self._predict(target.features)
        for i in range(target.n):
            self.memory.ema_update(i, self.memory.refine(probs[i]), features[i])
        self.memory.refresh_class_marginal()
        self._bank_ready = True

    def pretrain(self):
        """Source-only supervised warm start of the extractor and classifier.

        Runs at the base learning rate with no adversarial or adaptation
        terms; this plays the role of starting from a pretrained backbone.
        """
        cfg = self.config
        labeled = self.scenario.labeled
        bs = cfg.batch_size
        for _ in range(cfg.pretrain_epochs):
            order = self.shuffle_rng.permutation(labeled.n)
            for s in range(labeled.n // bs):
                idx = order[s * bs:(s + 1) * bs]
                feats = model_mod.extract_features(self.params, labeled.features[idx])
                probs = model_mod.classify(self.params, feats)
                loss = model_mod.cls_loss(probs, labeled.labels[idx], cfg.label_smoothing)
                self.params.zero_grad()
                loss.backward()
                model_mod.sgd_step(
                    self.params, self.opt_state,
                    cfg.pretrain_lr, cfg.momentum, cfg.weight_decay, 0.0,
                )

    # ----- one optimization step ----------------------------------------

    def train_step(self, labeled_batch, target_batch):
        """One objective evaluation + SGD step + bank refresh; returns a StepRecord."""
        cfg = self.config
        if labeled_batch.n != target_batch.n:
            raise ParameterError("labeled and target batches must have equal size")
        if not self._bank_ready and cfg.mode != "baseline" and cfg.beta_max > 0.0:
            raise ParameterError("memory bank must be initialized before training")
        t = self.step_count
        total_steps = max(self.total_steps, 1)
        prog = t / total_steps
        lam = model_mod.lambda_schedule(prog)
        beta = beta_schedule(t, self.ramp_total, cfg.beta_max)

        feats_l, probs_l, dlog_l = model_mod.forward(
            self.params, labeled_batch.features, lam
        )
        cls = model_mod.cls_loss(probs_l, labeled_batch.labels, cfg.label_smoothing)

        feats_t, probs_t, dlog_t = model_mod.forward(
            self.params, target_batch.features, lam
        )
        mask = labeled_batch.source_mask
        if mask is None:
            mask = np.ones(labeled_batch.n, dtype=bool)
        n_l, n_t = labeled_batch.n, target_batch.n
        adv = (
            n_l * model_mod.adv_loss_masked(dlog_l, mask)
            + n_t * model_mod.adv_loss_masked(dlog_t, np.zeros(n_t, dtype=bool))
        ) / float(n_l + n_t)

        plus = cfg.mode == "spa_plus_plus"
        feats_a = probs_a = None
        if plus:
            aug_batch = augment_mod.augment(target_batch, self.policy, step=t)
            feats_a = model_mod.extract_features(self.params, aug_batch.features)
            probs_a = model_mod.classify(self.params, feats_a)

        spectral_k = None if cfg.use_raw_graph else cfg.k
        gsa = 0.0
        if cfg.mode != "baseline" and cfg.alpha > 0.0:
            if plus:
                gsa = spectral_mod.alignment_loss_plus(
                    feats_l, feats_t, feats_a,
                    similarity=cfg.similarity, k=spectral_k,
                    laplacian=cfg.laplacian, p=cfg.p_norm,
                    detach_source=cfg.detach_source,
                )
            else:
                gsa = spectral_mod.alignment_loss(
                    feats_l, feats_t,
                    similarity=cfg.similarity, k=spectral_k,
                    laplacian=cfg.laplacian, p=cfg.p_norm,
                    detach_source=cfg.detach_source,
                )

        nap = 0.0
        prop = None
        if cfg.mode != "baseline" and cfg.beta_max > 0.0:
            prop = propagate_mod.neighbor_average(
                self.memory, feats_t.data, probs_t.data, cfg.k,
                self_indices=target_batch.indices,
            )
            if plus:
                nap = propagate_mod.nap_plus_loss(
                    probs_t, probs_a, prop, cfg.conf_threshold,
                    average=cfg.nap_average,
                )
            else:
                nap = propagate_mod.nap_loss(probs_t, prop)

        con = 0.0
        if plus:
            con = augment_mod.consistency_loss(
                probs_t, probs_a, t, self.ramp_total, cfg.ramp_v
            )

        total = cls + adv + cfg.alpha * gsa + beta * nap + con
        record = StepRecord(
            total=float(total.data),
            cls=float(cls.data),
            adv=float(adv.data),
            gsa=float(gsa.data) if hasattr(gsa, "data") else float(gsa),
            nap=float(nap.data) if hasattr(nap, "data") else float(nap),
            con=float(con.data) if hasattr(con, "data") else float(con),
            beta=beta,
        )

        if not np.isfinite(record.total):
            record.rejected = True
        else:
            self.params.zero_grad()
            total.backward()
            try:
                model_mod.sgd_step(
                    self.params, self.opt_state,
                    cfg.lr0, cfg.momentum, cfg.weight_decay, prog,
                )
            except NumericalError:
                record.rejected = True

        if record.rejected:
            self._consecutive_rejections += 1
            if self._consecutive_rejections >= MAX_CONSECUTIVE_REJECTIONS:
                raise NumericalError(
                    f"{self._consecutive_rejections} consecutive steps rejected"
                )
        else:
            self._consecutive_rejections = 0
            if self._bank_ready:
                for row, idx in enumerate(target_batch.indices):
                    self.memory.ema_update(
                        int(idx),
                        self.memory.refine(probs_t.data[row]),
                        feats_t.data[row],
                    )
        self.step_count += 1
        return record

    # ----- evaluation -----------------------------------------------------

    def evaluate(self, epoch, step_records=()):
        cfg = self.config
        labeled = self.scenario.labeled
        eval_pool = self.scenario.eval_pool
        src_features, src_probs = self._predict(labeled.features)
        src_pred = src_probs.argmax(axis=1)
        src_mask = self.scenario.labeled_source_mask
        acc_source = metrics_mod.accuracy(src_pred[src_mask], labeled.labels[src_mask])
        per_domain = {}
        for dom in sorted(set(labeled.domains[src_mask].tolist())):
            sel = src_mask & (labeled.domains == dom)
            per_domain[str(dom)] = metrics_mod.accuracy(src_pred[sel], labeled.labels[sel])

        tgt_features, tgt_probs = self._predict(eval_pool.features)
        acc_target = metrics_mod.accuracy(tgt_probs.argmax(axis=1), eval_pool.labels)

        probe_rng = np.random.default_rng((cfg.seed, 0xAD))
        src_side = src_features[src_mask]
        src_sel = probe_rng.permutation(src_side.shape[0])[:EVAL_PROBE_CAP]
        tgt_sel = probe_rng.permutation(tgt_features.shape[0])[:EVAL_PROBE_CAP]
        dist = metrics_mod.a_distance(
            src_side[np.sort(src_sel)], tgt_features[np.sort(tgt_sel)], seed=cfg.seed
        )

        kept = [r for r in step_records if not r.rejected]

        def avg(attr):
            return float(np.mean([getattr(r, attr) for r in kept])) if kept else 0.0

        return EpochRecord(
            epoch=epoch,
            loss_total=avg("total"),
            loss_cls=avg("cls"),
            loss_adv=avg("adv"),
            loss_gsa=avg("gsa"),
            loss_nap=avg("nap"),
            loss_con=avg("con"),
            acc_source=acc_source,
            acc_target=acc_target,
            a_distance=dist,
            acc_source_per_domain=per_domain,
            rejected_steps=sum(r.rejected for r in step_records),
        )

    # ----- full run -------------------------------------------------------

    def run(self):
        cfg = self.config
        labeled = self.scenario.labeled
        target = self.scenario.unlabeled_target
        if cfg.pretrain_epochs > 0:
            self.pretrain()
        if cfg.mode != "baseline":
            self.initialize_bank()
        records = [self.evaluate(epoch=0)]
        bs = cfg.batch_size
        for epoch in range(1, cfg.epochs + 1):
            order_l = self.shuffle_rng.permutation(labeled.n)
            order_t = self.shuffle_rng.permutation(target.n)
            step_records = []
            for s in range(self.steps_per_epoch):
                idx_l = order_l[s * bs:(s + 1) * bs]
                idx_t = order_t[s * bs:(s + 1) * bs]
                labeled_batch = FeatureBatch(
                    labeled.features[idx_l],
                    labels=labeled.labels[idx_l],
                    domain_tag="source",
                    indices=idx_l,
                    source_mask=self.scenario.labeled_source_mask[idx_l],
                )
                target_batch = FeatureBatch(
                    target.features[idx_t],
                    domain_tag="target",
                    indices=idx_t,
                )
                step_records.append(self.train_step(labeled_batch, target_batch))
            if cfg.mode != "baseline":
                self.memory.refresh_class_marginal()
            records.append(self.evaluate(epoch, step_records))

        accs = [r.acc_target for r in records]
        summary = {
            "mode": cfg.mode,
            "epochs": cfg.epochs,
            "steps": self.step_count,
            "final_acc_source": records[-1].acc_source,
            "final_acc_target": records[-1].acc_target,
            "best_acc_target": max(accs),
            "initial_a_distance": records[0].a_distance,
            "final_a_distance": records[-1].a_distance,
            "rejected_steps": int(sum(r.rejected_steps for r in records)),
        }
        return TrainReport(records=records, summary=summary)


def run(config, scenario):
    """Spec-level entry: train per config on a composed scenario."""
    return Trainer(config, scenario).run()
