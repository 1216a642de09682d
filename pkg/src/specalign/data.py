"""Synthetic domain-shift datasets, scenario composition, and CSV ingestion.

All generators are pure functions of their parameters and seed: equal inputs
give bitwise-equal outputs. Scenario composition assembles labeled, unlabeled
and evaluation pools for the uda/ssda/msda/mtda settings plus the long-tail
and subpopulation-balanced variants.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ParameterError, ParseError, SchemaError


@dataclass
class Dataset:
    """Feature/label block with per-sample domain ids and a shared label space."""

    features: np.ndarray
    labels: np.ndarray | None
    domains: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.domains = np.asarray(self.domains, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.class_count:
                raise ParameterError("labels outside [0, class_count)")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(
            self.features[idx],
            None if self.labels is None else self.labels[idx],
            self.domains[idx],
            self.class_count,
            self.split,
        )

    def without_labels(self):
        return Dataset(self.features.copy(), None, self.domains.copy(),
                       self.class_count, self.split)


def _rotation_matrix(degrees):
    # clockwise: positive angles turn the interleaved pattern toward the
    # orientation where the crescents sweep past each other rather than into
    # each other (the pattern is chiral, so the sign convention matters)
    rad = np.deg2rad(degrees)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([[c, s], [-s, c]])


def make_two_moons(n, rotation_degrees=0.0, noise=0.1, seed=0, domain_id=0, split="train"):
    """Standard two interleaved half-circles, optionally rotated about the origin.

    Rotation happens after the noisy draw, so the same seed at different
    angles yields point-for-point rotated copies of the same sample; class
    means rotate by exactly the rotation matrix.
    """
    if n % 2 != 0:
        raise ParameterError(f"sample count must be even, got {n}")
    if noise < 0.0:
        raise ParameterError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    half = n // 2
    t0 = rng.uniform(0.0, np.pi, half)
    t1 = rng.uniform(0.0, np.pi, half)
    outer = np.column_stack([np.cos(t0), np.sin(t0)])
    inner = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([outer, inner])
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    if noise > 0.0:
        x = x + rng.normal(0.0, noise, x.shape)
    degrees = rotation_degrees % 360.0
    if degrees != 0.0:
        x = x @ _rotation_matrix(degrees).T
    return Dataset(x, y, np.full(n, domain_id), class_count=2, split=split)


def make_blob_shift(n, class_count, shift_vector, spread=0.5, seed=0,
                    source_domain=0, target_domain=1, dim=2):
    """Gaussian class clusters; the target copies source centers plus a shift."""
    if class_count < 2:
        raise ParameterError(f"need at least 2 classes, got {class_count}")
    shift_vector = np.asarray(shift_vector, dtype=np.float64)
    if shift_vector.shape != (dim,):
        raise ParameterError(f"shift vector must have length {dim}")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(class_count) / class_count + rng.uniform(0.0, 2.0 * np.pi)
    centers = np.zeros((class_count, dim))
    centers[:, 0] = 3.0 * np.cos(angles)
    centers[:, 1 % dim] = 3.0 * np.sin(angles)
    counts = np.full(class_count, n // class_count)
    counts[: n % class_count] += 1
    labels = np.repeat(np.arange(class_count), counts)

    def draw(offset):
        return centers[labels] + offset + rng.normal(0.0, spread, (n, dim))

    source = Dataset(draw(0.0), labels.copy(), np.full(n, source_domain), class_count)
    target = Dataset(draw(shift_vector), labels.copy(), np.full(n, target_domain), class_count)
    return source, target


def long_tail_resample(dataset, imbalance_ratio, seed=0):
    """Subsample classes on a geometric decay with head/tail = imbalance_ratio.

    Class c keeps round(n_head * ratio^(-c/(C-1))) samples, where n_head is
    the count of class 0.
    """
    if imbalance_ratio < 1.0:
        raise ParameterError(f"imbalance ratio must be >= 1, got {imbalance_ratio}")
    if dataset.labels is None:
        raise ParameterError("long-tail resampling needs a labeled dataset")
    rng = np.random.default_rng(seed)
    c = dataset.class_count
    head = int((dataset.labels == 0).sum())
    keep = []
    for cls in range(c):
        decay = imbalance_ratio ** (-cls / (c - 1)) if c > 1 else 1.0
        want = int(round(head * decay))
        if want < 1:
            raise ParameterError(
                f"imbalance ratio {imbalance_ratio} would empty class {cls}"
            )
        pool = np.flatnonzero(dataset.labels == cls)
        if pool.size < want:
            raise CapacityError(f"class {cls} has {pool.size} samples, need {want}")
        keep.append(rng.permutation(pool)[:want])
    return dataset.subset(np.concatenate(keep))


@dataclass
class ScenarioSpec:
    """Which domains play which role, plus shift-specific options."""

    kind: str = "uda"
    labeled_target_shots: int = 0
    source_domains: list = field(default_factory=lambda: [0])
    target_domains: list = field(default_factory=lambda: [1])
    imbalance_ratio: float = 1.0
    subpopulation_balance: bool = False

    def __post_init__(self):
        if self.kind not in ("uda", "ssda", "msda", "mtda"):
            raise ParameterError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "ssda" and self.labeled_target_shots < 1:
            raise ParameterError("ssda requires at least one labeled target shot")
        if self.kind != "ssda" and self.labeled_target_shots != 0:
            raise ParameterError(f"{self.kind} must not carry labeled target shots")
        if self.kind == "msda" and len(self.source_domains) < 2:
            raise ParameterError("msda requires at least two source domains")
        if self.kind == "mtda" and len(self.target_domains) < 2:
            raise ParameterError("mtda requires at least two target domains")
        if self.imbalance_ratio < 1.0:
            raise ParameterError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")


@dataclass
class ComposedScenario:
    """Pools produced by compose_scenario."""

    labeled: Dataset
    labeled_source_mask: np.ndarray
    unlabeled_target: Dataset
    eval_pool: Dataset
    spec: ScenarioSpec


def _concat(datasets):
    return Dataset(
        np.vstack([ds.features for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets])
        if all(ds.labels is not None for ds in datasets) else None,
        np.concatenate([ds.domains for ds in datasets]),
        datasets[0].class_count,
        datasets[0].split,
    )


def _balance_eval(dataset, rng):
    """Equal sample counts for every (domain, class) pair, seeded subsample."""
    pairs = {}
    for i in range(dataset.n):
        pairs.setdefault((int(dataset.domains[i]), int(dataset.labels[i])), []).append(i)
    per_pair = min(len(v) for v in pairs.values())
    keep = []
    for key in sorted(pairs):
        chosen = rng.permutation(np.array(pairs[key]))[:per_pair]
        keep.append(np.sort(chosen))
    return dataset.subset(np.concatenate(keep))


def compose_scenario(spec, datasets, seed=0):
    """Assemble (labeled pool, unlabeled target pool, eval pool) for a scenario.

    `datasets` maps domain id -> Dataset. Target labels never enter the
    unlabeled pool; evaluation is transductive on the (non-shot) target data.
    """
    rng = np.random.default_rng((seed, 0xC0))
    missing = [d for d in spec.source_domains + spec.target_domains if d not in datasets]
    if missing:
        raise ParameterError(f"scenario references unknown domains {missing}")
    sources = [datasets[d] for d in spec.source_domains]
    targets = [datasets[d] for d in spec.target_domains]
    for ds in sources:
        if ds.labels is None:
            raise ParameterError("source domains must be labeled")

    labeled = _concat(sources)
    if spec.imbalance_ratio > 1.0:
        labeled = long_tail_resample(labeled, spec.imbalance_ratio, seed=seed)
    source_mask = np.ones(labeled.n, dtype=bool)

    target_all = _concat(targets)
    if target_all.labels is None:
        raise ParameterError("target generators must provide labels for evaluation")

    shot_idx = np.array([], dtype=np.int64)
    if spec.kind == "ssda":
        chosen = []
        for cls in range(target_all.class_count):
            pool = np.flatnonzero(target_all.labels == cls)
            if pool.size < spec.labeled_target_shots:
                raise CapacityError(
                    f"class {cls} has {pool.size} target samples, "
                    f"need {spec.labeled_target_shots} shots"
                )
            chosen.append(np.sort(rng.permutation(pool)[: spec.labeled_target_shots]))
        shot_idx = np.concatenate(chosen)
        shots = target_all.subset(shot_idx)
        labeled = _concat([labeled, shots])
        source_mask = np.concatenate([source_mask, np.zeros(shots.n, dtype=bool)])

    rest = np.setdiff1d(np.arange(target_all.n), shot_idx)
    target_rest = target_all.subset(rest)
    eval_pool = target_rest
    if spec.subpopulation_balance:
        eval_pool = _balance_eval(eval_pool, rng)

    return ComposedScenario(
        labeled=labeled,
        labeled_source_mask=source_mask,
        unlabeled_target=target_rest.without_labels(),
        eval_pool=eval_pool,
        spec=spec,
    )


def save_csv(dataset, path):
    """Write the canonical CSV schema f0..f{d-1},label,domain."""
    if dataset.labels is None:
        raise ParameterError("cannot write an unlabeled dataset to CSV")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.d)] + ["label", "domain"])
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            writer.writerow(row + [int(dataset.labels[i]), int(dataset.domains[i])])


def load_csv(path):
    """Read a dataset from the canonical CSV schema.

    Raises SchemaError for a bad header or inconsistent width, ParseError
    (with the line number) for malformed values.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if len(header) < 3 or header[-2] != "label" or header[-1] != "domain":
            raise SchemaError(
                f"{path}: header must be f0,...,f{{d-1}},label,domain, got {header}"
            )
        d = len(header) - 2
        if header[:d] != [f"f{i}" for i in range(d)]:
            raise SchemaError(f"{path}: feature columns must be named f0..f{d-1}")
        features, labels, domains = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise SchemaError(
                    f"{path}:{line_no}: expected {d + 2} columns, got {len(row)}"
                )
            try:
                features.append([float(v) for v in row[:d]])
                label = int(row[d])
                domain = int(row[d + 1])
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}", line=line_no) from None
            if label < 0 or domain < 0:
                raise ParseError(
                    f"{path}:{line_no}: label and domain must be non-negative",
                    line=line_no,
                )
            labels.append(label)
            domains.append(domain)
    if not features:
        raise SchemaError(f"{path} contains a header but no samples")
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(
        np.asarray(features, dtype=np.float64),
        labels,
        np.asarray(domains, dtype=np.int64),
        class_count=int(labels.max()) + 1,
    )
