"""Error rates, recovery precision/recall and run aggregation."""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ShapeError


def _same_length(*arrays):
    arrays = [np.asarray(a) for a in arrays]
    if len({a.shape for a in arrays}) != 1:
        raise ShapeError(f"length mismatch: {[a.shape for a in arrays]}")
    return arrays


def accuracy(predictions, labels):
    p, y = _same_length(predictions, labels)
    if p.size == 0:
        return float("nan")
    return float(np.mean(p == y))


def recovery_metrics(predicted, noisy, true):
    """Recovery precision and recall; ``None`` where the conditioning set is empty.

    precision = P(pred == true | pred != noisy)
    recall    = P(pred == true | true != noisy)
    """
    yhat, ytil, y = _same_length(predicted, noisy, true)
    hit = yhat == y
    disagree = yhat != ytil
    flipped = y != ytil
    precision = float(np.sum(hit & disagree) / np.sum(disagree)) if disagree.any() else None
    recall = float(np.sum(hit & flipped) / np.sum(flipped)) if flipped.any() else None
    return precision, recall


def partial_mean(values):
    """Mean after dropping one maximum and one minimum; ``None`` entries are ignored."""
    vals = sorted(v for v in values if v is not None)
    if not vals:
        return None
    if len(vals) < 3:
        raise ConfigError("partial mean needs at least three defined values")
    return float(np.mean(vals[1:-1]))


@dataclass
class ExperimentRecord:
    test_error: Optional[float] = None
    train_error_vs_true: Optional[float] = None
    noise_rate: Optional[float] = None
    recovery_precision: Optional[float] = None
    recovery_recall: Optional[float] = None
    per_epoch: List[Tuple[int, float, float]] = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["per_epoch"] = [
            {"epoch": int(e), "noisy_fit_accuracy": float(a), "true_accuracy": float(b)}
            for e, a, b in self.per_epoch
        ]
        return d
