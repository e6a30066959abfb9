"""Synthetic label noise: symmetric flips and model-driven confusing flips."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AuditError, ConfigError, ShapeError
from .model import predict_batch

NOISE_KINDS = ("symmetric", "confusing")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate < 0.5:
            raise ConfigError(f"noise rate must lie in [0, 0.5), got {self.rate}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


def flip_count(rate, n):
    """round-half-up of ``rate * n``."""
    return int(math.floor(rate * n + 0.5))


def _flip_indices(rng, n, rate):
    return np.sort(rng.choice(n, size=flip_count(rate, n), replace=False))


def _truth(clean):
    return clean.labels if clean.true_labels is None else clean.true_labels


def symmetric_noise(clean, spec):
    if spec.kind != "symmetric":
        raise ConfigError("symmetric_noise needs a symmetric NoiseSpec")
    y = _truth(clean)
    c = clean.label_count
    if c < 2 and spec.rate > 0:
        raise ConfigError("cannot flip labels with a single class")
    rng = np.random.default_rng(int(spec.seed))
    idx = _flip_indices(rng, len(clean), spec.rate)
    noisy = y.copy()
    # offset in [1, c) keeps the draw uniform over the c-1 wrong labels
    noisy[idx] = (y[idx] + rng.integers(1, c, size=idx.size)) % c
    return clean.with_noisy_labels(noisy)


def wrong_labels(probs, true_labels):
    """Second-best prediction where the top one is right, else the top one."""
    first, second = kernels.top2(np.ascontiguousarray(probs, dtype=np.float64))
    return np.where(first == true_labels, second, first), first, second


def confusing_noise(clean, spec, baseline):
    """Replace a random ``rate`` fraction of labels with the baseline's top-2 wrong guess."""
    if spec.kind != "confusing":
        raise ConfigError("confusing_noise needs a confusing NoiseSpec")
    if baseline.spec.label_count != clean.label_count:
        raise ShapeError(
            f"baseline predicts {baseline.spec.label_count} labels, dataset has {clean.label_count}"
        )
    y = _truth(clean)
    wrong, _, _ = wrong_labels(predict_batch(baseline, clean.features), y)
    rng = np.random.default_rng(int(spec.seed))
    idx = _flip_indices(rng, len(clean), spec.rate)
    noisy = y.copy()
    noisy[idx] = wrong[idx]
    return clean.with_noisy_labels(noisy)


def noise_rate(noisy):
    if noisy.true_labels is None:
        raise AuditError("noise rate needs true labels")
    if len(noisy) == 0:
        return 0.0
    return float(np.mean(noisy.labels != noisy.true_labels))


def generate(clean, spec, baseline=None):
    if spec.kind == "symmetric":
        return symmetric_noise(clean, spec)
    if baseline is None:
        raise ConfigError("confusing noise needs a trained baseline model")
    return confusing_noise(clean, spec, baseline)
