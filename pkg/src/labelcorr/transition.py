"""Estimated label-transition matrices.

Entries are indexed ``[noisy, true]`` so each column is the distribution of the
observed label given one true label.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, FormatError, ShapeError

STOCHASTIC_TOL = 1e-9


class TransitionMatrix:
    """Column-stochastic ``|Y| x |Y|`` table, ``entries[noisy, true]``."""

    def __init__(self, entries, validate=True):
        self.entries = np.array(entries, dtype=np.float64)
        if validate:
            self.validate()

    @property
    def label_count(self):
        return self.entries.shape[0]

    def validate(self, tol=STOCHASTIC_TOL):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ShapeError(f"transition matrix must be square, got {e.shape}")
        if not np.isfinite(e).all() or (e < -tol).any() or (e > 1 + tol).any():
            raise ConfigError("transition entries must lie in [0, 1]")
        dev = np.abs(e.sum(axis=0) - 1.0).max()
        if dev > tol:
            raise ConfigError(f"transition columns must sum to 1 (max deviation {dev:.3g})")
        return self

    def column_deviation(self):
        return float(np.abs(self.entries.sum(axis=0) - 1.0).max())

    def copy(self):
        return TransitionMatrix(self.entries.copy(), validate=False)

    def __eq__(self, other):
        return isinstance(other, TransitionMatrix) and np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"TransitionMatrix(labels={self.label_count})"

    def save(self, path):
        """Plain text: ``labels=<n>`` then one space-separated row per noisy label."""
        lines = [f"labels={self.label_count}"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text(encoding="ascii").splitlines()
        if not text or not text[0].startswith("labels="):
            raise FormatError("missing 'labels=<n>' header", line=1)
        try:
            n = int(text[0].split("=", 1)[1])
        except ValueError:
            raise FormatError("bad label count in header", line=1) from None
        rows = [ln for ln in text[1:] if ln.strip()]
        if len(rows) != n:
            raise FormatError(f"expected {n} rows, found {len(rows)}", line=len(text))
        entries = []
        for i, row in enumerate(rows, start=2):
            try:
                vals = [float(v) for v in row.split()]
            except ValueError:
                raise FormatError("non-numeric entry", line=i) from None
            if len(vals) != n:
                raise FormatError(f"expected {n} columns", line=i)
            entries.append(vals)
        return cls(entries)


@dataclass(frozen=True)
class EstimatorConfig:
    gamma: float = 0.9999
    epsilon: float = 0.1
    warmup_epochs: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie strictly inside (0, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie strictly inside (0, 1)")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be non-negative")


def init_identity(label_count):
    if label_count < 2:
        raise ConfigError("need at least two labels")
    return TransitionMatrix(np.eye(label_count))


def maybe_update(T, probs, noisy_label, config):
    """Apply one confidence-gated update; returns ``(new_T, fired)``.

    When the top predicted probability exceeds ``1 - epsilon`` the column of
    the predicted label moves towards the one-hot noisy label.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (T.label_count,):
        raise ShapeError("probability vector length does not match the matrix")
    out = T.copy()
    fired = update_sweep(out, probs[None, :], np.array([noisy_label]), config.gamma, config.epsilon)
    return out, fired == 1


def update_sweep(T, probs, noisy_labels, gamma, epsilon):
    """Sequential in-place updates for a whole batch, in row order. Returns #fired."""
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    labels = np.ascontiguousarray(noisy_labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != T.label_count or labels.shape != probs.shape[:1]:
        raise ShapeError("batch shapes do not match the transition matrix")
    return int(kernels.transition_sweep(T.entries, probs, labels, float(gamma), float(epsilon)))


def empirical_transition(clean_labels, noisy_labels, label_count=None):
    """Count-based ``T[noisy, true]``; columns without samples fall back to identity."""
    y = np.asarray(clean_labels, dtype=np.int64)
    yt = np.asarray(noisy_labels, dtype=np.int64)
    if y.shape != yt.shape:
        raise ShapeError(f"label vectors differ in length: {y.shape} vs {yt.shape}")
    if label_count is None:
        label_count = int(max(y.max(initial=0), yt.max(initial=0))) + 1
    label_count = max(int(label_count), 2)
    counts = kernels.pair_counts(yt, y, label_count).astype(np.float64)
    totals = counts.sum(axis=0)
    entries = np.eye(label_count)
    seen = totals > 0
    entries[:, seen] = counts[:, seen] / totals[seen]
    return TransitionMatrix(entries)
