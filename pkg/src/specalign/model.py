"""Feature extractor, classifier, domain discriminator, and their losses.

The extractor is a small tanh MLP standing in for a deep backbone; the
classifier and domain head are linear. The domain path passes through a
gradient-reversal node so that minimizing the domain loss in the head pushes
the extractor toward domain confusion.
"""

import struct

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericalError, ParameterError

LOG_FLOOR = 1e-12
HIDDEN_WIDTH = 64
FEATURE_DIM = 16
HEAD_LR_MULTIPLIER = 10.0

_CHECKPOINT_MAGIC = b"SALN"
_CHECKPOINT_VERSION = 1


class MlpParams:
    """Weights for extractor F, classifier C, and domain head D."""

    def __init__(self, input_dim, class_count, rng,
                 hidden=HIDDEN_WIDTH, feature_dim=FEATURE_DIM):
        self.input_dim = int(input_dim)
        self.class_count = int(class_count)
        self.feature_dim = int(feature_dim)

        def layer(fan_in, fan_out, gain=1.0, bias_scale=0.0):
            w = rng.normal(0.0, gain * np.sqrt(1.0 / fan_in), size=(fan_in, fan_out))
            b = rng.normal(0.0, bias_scale, size=fan_out) if bias_scale > 0.0 else np.zeros(fan_out)
            return ad.Tensor(w, requires_grad=True), ad.Tensor(b, requires_grad=True)

        # random biases spread the tanh thresholds over the input region, so
        # the untrained extractor already exposes distribution differences the
        # way a pretrained backbone would; the first layer runs hot for the
        # same reason
        self.extractor = [
            layer(input_dim, hidden, gain=2.0, bias_scale=1.0),
            layer(hidden, hidden, bias_scale=1.0),
            layer(hidden, feature_dim, bias_scale=1.0),
        ]
        self.classifier = layer(feature_dim, class_count)
        self.discriminator = layer(feature_dim, 1)

    def parameters(self):
        """(name, tensor, group) triples; group is 'backbone' or 'head'."""
        out = []
        for i, (w, b) in enumerate(self.extractor):
            out.append((f"extractor.{i}.w", w, "backbone"))
            out.append((f"extractor.{i}.b", b, "backbone"))
        out.append(("classifier.w", self.classifier[0], "head"))
        out.append(("classifier.b", self.classifier[1], "head"))
        out.append(("discriminator.w", self.discriminator[0], "head"))
        out.append(("discriminator.b", self.discriminator[1], "head"))
        return out

    def zero_grad(self):
        for _, tensor, _ in self.parameters():
            tensor.grad = None


def softmax_rows(logits):
    """Row-wise softmax; the stabilizing shift is a constant on the tape."""
    shifted = logits - ad.value(logits).max(axis=1, keepdims=True)
    e = ad.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def extract_features(params, x):
    h = ad.Tensor(x) if not isinstance(x, ad.Tensor) else x
    for w, b in params.extractor:
        h = ad.tanh(h @ w + b)
    return h


def classify(params, features):
    w, b = params.classifier
    return softmax_rows(features @ w + b)


def discriminate(params, features, lambda_grl=0.0):
    w, b = params.discriminator
    return ad.reverse_grad(features, lambda_grl) @ w + b


def forward(params, x, lambda_grl=0.0):
    """Run a batch through F, C, D; returns (features, class_probs, domain_logit)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(f"input has shape {x.shape}, expected (n, {params.input_dim})")
    features = extract_features(params, x)
    return features, classify(params, features), discriminate(params, features, lambda_grl)


def cls_loss(class_probs, labels, smoothing=0.1):
    """Cross-entropy against label-smoothed targets, averaged over the batch."""
    if not 0.0 <= smoothing < 1.0:
        raise ParameterError(f"smoothing must lie in [0, 1), got {smoothing}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = ad.value(class_probs).shape
    if labels.shape != (n,):
        raise DimensionError(f"labels have shape {labels.shape}, expected ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ParameterError("labels outside [0, class_count)")
    targets = np.full((n, c), smoothing / (c - 1) if c > 1 else 0.0)
    targets[np.arange(n), labels] = 1.0 - smoothing
    logs = ad.log(ad.clip_min(class_probs, LOG_FLOOR))
    return -(targets * logs).sum() / float(n)


def adv_loss(domain_logits_s, domain_logits_t):
    """Binary cross-entropy with domain labels source=1, target=0.

    Averaged over all samples of both batches. The gradient reversal applied
    inside forward() makes the extractor ascend this objective while the
    domain head descends it.
    """
    ps = ad.sigmoid(domain_logits_s)
    pt = ad.sigmoid(domain_logits_t)
    n = ad.value(ps).shape[0] + ad.value(pt).shape[0]
    loss_s = -ad.log(ad.clip_min(ps, LOG_FLOOR)).sum()
    loss_t = -ad.log(ad.clip_min(1.0 - pt, LOG_FLOOR)).sum()
    return (loss_s + loss_t) / float(n)


def adv_loss_masked(domain_logits, is_source):
    """adv_loss for one mixed batch with per-sample domain indicators."""
    p = ad.sigmoid(domain_logits)
    is_source = np.asarray(is_source, dtype=np.float64).reshape(-1, 1)
    n = ad.value(p).shape[0]
    log_p = ad.log(ad.clip_min(p, LOG_FLOOR))
    log_q = ad.log(ad.clip_min(1.0 - p, LOG_FLOOR))
    return -(is_source * log_p + (1.0 - is_source) * log_q).sum() / float(n)


def lambda_schedule(progress):
    """Gradient-reversal strength 2/(1+exp(-10 p)) - 1, rising from 0 to ~1."""
    return 2.0 / (1.0 + np.exp(-10.0 * float(progress))) - 1.0


def lr_schedule(lr0, progress):
    """Polynomial decay lr0 * (1 + 10 p)^{-0.75}."""
    return float(lr0) * (1.0 + 10.0 * float(progress)) ** -0.75


class OptimizerState:
    """Per-parameter momentum buffers plus a step counter."""

    def __init__(self, params):
        self.velocity = {name: np.zeros_like(t.data) for name, t, _ in params.parameters()}
        self.step_count = 0


def sgd_step(params, state, lr0, momentum, weight_decay, progress):
    """One SGD-with-momentum update; head layers run at 10x the backbone rate.

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr(progress) * v

    Raises NumericalError on any non-finite gradient; in that case no
    parameter is touched.
    """
    base_lr = lr_schedule(lr0, progress)
    triples = params.parameters()
    for name, tensor, _ in triples:
        grad = tensor.grad
        if grad is not None and not np.isfinite(grad).all():
            raise NumericalError(f"non-finite gradient in {name}")
    for name, tensor, group in triples:
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        v = momentum * state.velocity[name] + grad + weight_decay * tensor.data
        state.velocity[name] = v
        lr = base_lr * (HEAD_LR_MULTIPLIER if group == "head" else 1.0)
        tensor.data = tensor.data - lr * v
    state.step_count += 1


def save_checkpoint(params, path):
    """Write parameters as a versioned flat binary of shape-tagged tensors."""
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", _CHECKPOINT_VERSION))
        triples = params.parameters()
        fh.write(struct.pack("<I", len(triples)))
        for name, tensor, _ in triples:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.data.ndim))
            for dim in tensor.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(tensor.data.astype("<f8").tobytes())


def load_checkpoint(params, path):
    """Load a checkpoint written by save_checkpoint into matching parameters."""
    with open(path, "rb") as fh:
        if fh.read(4) != _CHECKPOINT_MAGIC:
            raise ParameterError(f"{path} is not a parameter checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        by_name = {name: tensor for name, tensor, _ in params.parameters()}
        if count != len(by_name):
            raise DimensionError(f"checkpoint has {count} tensors, model has {len(by_name)}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            data = np.frombuffer(fh.read(8 * int(np.prod(shape, dtype=np.int64))),
                                 dtype="<f8").reshape(shape)
            if name not in by_name:
                raise DimensionError(f"unexpected tensor {name!r} in checkpoint")
            if by_name[name].data.shape != shape:
                raise DimensionError(
                    f"shape mismatch for {name!r}: {shape} vs {by_name[name].data.shape}"
                )
            by_name[name].data = data.copy()
