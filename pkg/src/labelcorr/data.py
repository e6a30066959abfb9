"""Datasets, IDX/CSV loading, synthetic clusters and noisy-label sidecar files."""

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AuditError, ConfigError, FormatError, ShapeError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    label_count: int
    true_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )
        if self.label_count < 1:
            raise ConfigError("label_count must be positive")
        _check_range(self.labels, self.label_count, "labels")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if self.true_labels.shape != self.labels.shape:
                raise ShapeError("true_labels must have one entry per sample")
            _check_range(self.true_labels, self.label_count, "true_labels")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, index):
        index = np.asarray(index)
        return LabeledDataset(
            self.features[index],
            self.labels[index],
            self.label_count,
            None if self.true_labels is None else self.true_labels[index],
        )

    def clean(self):
        """The dataset with its true labels restored (or itself if none are known)."""
        if self.true_labels is None:
            return self
        return LabeledDataset(self.features, self.true_labels.copy(), self.label_count)

    def with_noisy_labels(self, noisy):
        truth = self.labels if self.true_labels is None else self.true_labels
        return replace(self, labels=np.asarray(noisy, dtype=np.int64), true_labels=truth.copy())


def _check_range(labels, n, what):
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ShapeError(f"{what} must lie in [0, {n})")


# --------------------------------------------------------------------------
# IDX
# --------------------------------------------------------------------------


def _read_idx(path, expected_magic, expected_ndim):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    header_end = 4 + 4 * expected_ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dimension header", offset=len(raw))
    dims = struct.unpack(f">{expected_ndim}I", raw[4:header_end])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) != header_end + size:
        raise FormatError(
            f"{path}: expected {size} data bytes, found {len(raw) - header_end}",
            offset=min(len(raw), header_end + size),
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def load_idx(images_path, labels_path, label_count=10):
    """Load an IDX image/label pair; pixels are flattened row-major and divided by 255."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}", offset=4
        )
    if labels.size and labels.max() >= label_count:
        raise FormatError(f"label {labels.max()} out of range for {label_count} classes", offset=8)
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(features, labels.astype(np.int64), label_count)


def write_idx(images, labels, images_path, labels_path):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise ShapeError("images must be (count, rows, cols)")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_csv(path, label_count=None, scale=1.0, label_column=0):
    """Numeric CSV with one label column; a non-numeric first row is treated as a header."""
    path = Path(path)
    with open(path, encoding="ascii") as f:
        first = f.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    table = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    labels = table[:, label_column]
    if not np.array_equal(labels, np.round(labels)):
        raise FormatError(f"{path}: non-integer label column", line=skip + 1)
    labels = labels.astype(np.int64)
    features = np.delete(table, label_column, axis=1) / scale
    if label_count is None:
        label_count = int(labels.max()) + 1
    return LabeledDataset(features, labels, label_count)


# --------------------------------------------------------------------------
# synthetic clusters
# --------------------------------------------------------------------------


def synth_clusters(label_count, per_class, dim, spread, seed):
    """Gaussian blobs around the vertices of a randomly rotated unit simplex.

    Centres are the scaled basis vectors ``e_c`` (scale 1) rotated by a seeded
    orthogonal matrix, so every pair of centres sits sqrt(2) apart. When
    ``dim < label_count`` the centres are instead seeded unit vectors.
    Samples are ordered by class.
    """
    if label_count < 2 or per_class <= 0 or dim <= 0:
        raise ConfigError("label_count >= 2, per_class > 0 and dim > 0 are required")
    if spread < 0:
        raise ConfigError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    if dim >= label_count:
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q *= np.sign(np.diag(r))
        centres = q[:, :label_count].T
    else:
        centres = rng.standard_normal((label_count, dim))
        centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    labels = np.repeat(np.arange(label_count), per_class)
    features = centres[labels] + spread * rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, label_count)


def train_test_split(dataset, test_fraction, seed):
    """Stratified deterministic split; returns ``(train, test)``."""
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(dataset.label_count):
        members = np.flatnonzero(dataset.labels == c)
        members = rng.permutation(members)
        test_idx.append(members[: int(round(test_fraction * members.size))])
    test_idx = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(test_idx)


# --------------------------------------------------------------------------
# sidecar files
# --------------------------------------------------------------------------


@dataclass
class SidecarFile:
    label_count: int
    kind: str
    rate: float
    seed: int
    indices: np.ndarray
    noisy_labels: np.ndarray
    true_labels: np.ndarray

    def measured_rate(self):
        if self.indices.size == 0:
            return 0.0
        return float(np.mean(self.noisy_labels != self.true_labels))

    def apply(self, dataset):
        """Attach the sidecar's labels to a clean dataset of matching size."""
        if self.label_count != dataset.label_count:
            raise AuditError(
                f"sidecar has {self.label_count} labels, dataset has {dataset.label_count}"
            )
        if self.indices.size != len(dataset) or not np.array_equal(
            np.sort(self.indices), np.arange(len(dataset))
        ):
            raise AuditError("sidecar indices do not cover the dataset exactly")
        truth = dataset.labels if dataset.true_labels is None else dataset.true_labels
        noisy = np.empty(len(dataset), dtype=np.int64)
        true = np.empty(len(dataset), dtype=np.int64)
        noisy[self.indices] = self.noisy_labels
        true[self.indices] = self.true_labels
        if not np.array_equal(true, truth):
            raise AuditError("sidecar true labels disagree with the dataset")
        return LabeledDataset(dataset.features, noisy, dataset.label_count, true)


def write_sidecar(dataset, path, kind, rate, seed):
    if dataset.true_labels is None:
        raise AuditError("dataset has no true labels to record")
    lines = [
        f"# labels={dataset.label_count}",
        f"# kind={kind}",
        f"# rate={float(rate)!r}",
        f"# seed={int(seed)}",
        "index,noisy_label,true_label",
    ]
    lines += [f"{i},{a},{b}" for i, (a, b) in enumerate(zip(dataset.labels, dataset.true_labels))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


_HEADER_KEYS = ("labels", "kind", "rate", "seed")


def read_sidecar(path, n_samples=None):
    header = {}
    idx, noisy, true = [], [], []
    seen = set()
    with open(path, encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep or key not in _HEADER_KEYS:
                    raise FormatError(f"unknown header line {line!r}", line=lineno)
                header[key] = value
                continue
            if line == "index,noisy_label,true_label":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError("expected index,noisy_label,true_label", line=lineno)
            try:
                i, a, b = (int(p) for p in parts)
            except ValueError:
                raise FormatError("non-integer field", line=lineno) from None
            if i < 0 or (n_samples is not None and i >= n_samples):
                raise FormatError(f"index {i} out of bounds", line=lineno)
            if i in seen:
                raise FormatError(f"duplicate index {i}", line=lineno)
            if "labels" not in header:
                raise FormatError("rows before '# labels=' header", line=lineno)
            n = int(header["labels"])
            if not (0 <= a < n and 0 <= b < n):
                raise FormatError(f"label out of range [0, {n})", line=lineno)
            seen.add(i)
            idx.append(i)
            noisy.append(a)
            true.append(b)
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"missing header fields: {', '.join(missing)}", line=1)
    return SidecarFile(
        int(header["labels"]),
        header["kind"],
        float(header["rate"]),
        int(header["seed"]),
        np.asarray(idx, dtype=np.int64),
        np.asarray(noisy, dtype=np.int64),
        np.asarray(true, dtype=np.int64),
    )
