"""Feature-vector augmentation, the ramp-up schedule, and the consistency loss."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graph as graph_mod
from .errors import ParameterError


@dataclass
class AugmentPolicy:
    """Multiplicative scale jitter plus additive gaussian noise."""

    jitter_sigma: float = 0.05
    scale_range: tuple = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (lo <= 1.0 <= hi):
            raise ParameterError(f"scale range must bracket 1, got {self.scale_range}")
        if not np.isfinite(self.jitter_sigma) or self.jitter_sigma < 0.0:
            raise ParameterError(f"jitter sigma must be finite and >= 0, got {self.jitter_sigma}")


def augment(batch, policy, step=0):
    """x' = s * x + eta with per-sample scale s and elementwise gaussian eta.

    Deterministic: the generator is seeded from (policy.seed, step), so equal
    calls produce bitwise-equal batches. Labels and indices are carried over
    and the result is tagged as augmented.
    """
    rng = np.random.default_rng((policy.seed, step))
    lo, hi = policy.scale_range
    scales = rng.uniform(lo, hi, size=(batch.n, 1))
    noise = rng.normal(0.0, policy.jitter_sigma, size=batch.features.shape)
    return graph_mod.FeatureBatch(
        scales * batch.features + noise,
        labels=None if batch.labels is None else batch.labels.copy(),
        domain_tag="augmented",
        indices=batch.indices.copy(),
    )


def ramp(t, total, v):
    """Ramp-up v * exp(-5 (1 - t/total)^2); clamps to v for t >= total."""
    if v < 0.0:
        raise ParameterError(f"ramp ceiling must be >= 0, got {v}")
    if t < 0:
        raise ParameterError(f"step must be >= 0, got {t}")
    if total <= 0 or t >= total:
        return float(v)
    frac = float(t) / float(total)
    return float(v) * float(np.exp(-5.0 * (1.0 - frac) ** 2))


def consistency_loss(p, p_aug, t, total, v):
    """ramp(t) times the summed Euclidean norms of per-sample prediction gaps."""
    weight = ramp(t, total, v)
    return weight * ad.l2_rows(p - p_aug).sum()
