"""Minibatch training with any loss kind, plus the online transition estimate."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import NumericError
from .losses import LogLoss
from .metrics import accuracy
from .model import apply_update, backprop_batch, init_network, logits_batch, predict_batch, softmax
from .transition import EstimatorConfig, TransitionMatrix, init_identity, update_sweep

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    state: object
    transition: Optional[TransitionMatrix]
    per_epoch: List[tuple] = field(default_factory=list)
    updates_fired: int = 0


def epoch_order(n, seed, epoch):
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


def train(
    dataset,
    spec,
    optimizer,
    loss=None,
    epochs=30,
    seed=0,
    transition=None,
    estimator=None,
):
    """Train a fresh network on ``dataset.labels``.

    ``transition`` is the matrix handed to transition-based losses. Passing an
    :class:`EstimatorConfig` as ``estimator`` turns on the confidence-gated
    update phase after every optimizer step; the estimate starts from
    ``transition`` or, if that is ``None``, from the identity.
    """
    loss = loss or LogLoss()
    state = init_network(spec)
    c = dataset.label_count
    if estimator is not None:
        T = transition.copy() if transition is not None else init_identity(c)
    else:
        T = transition
    x, y = dataset.features, dataset.labels
    n = len(dataset)
    bs = optimizer.batch_size
    result = TrainResult(state, T)
    for epoch in range(epochs):
        order = epoch_order(n, seed, epoch)
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            xb, yb = x[idx], y[idx]
            z = logits_batch(state, xb)
            probs = softmax(z)
            # loss sees T as of batch start; updates below run after the step
            values, dz, _ = loss.batch(z, probs, yb, T)
            if not np.isfinite(values).all():
                raise NumericError(f"non-finite {loss.name} loss at epoch {epoch}, batch {b}")
            apply_update(state, backprop_batch(state, xb, dz), optimizer, epoch)
            if estimator is not None and epoch >= estimator.warmup_epochs:
                fresh = predict_batch(state, xb)
                result.updates_fired += update_sweep(
                    T, fresh, yb, estimator.gamma, estimator.epsilon
                )
        pred = predict_batch(state, x).argmax(axis=1)
        truth = dataset.true_labels if dataset.true_labels is not None else y
        row = (epoch, accuracy(pred, y), accuracy(pred, truth))
        result.per_epoch.append(row)
        log.debug("epoch %d noisy-fit %.4f true %.4f", *row)
    return result
