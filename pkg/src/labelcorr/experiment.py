"""Run configuration and the end-to-end steps behind the command line."""

import configparser
import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, get_args

import numpy as np

from .data import load_csv, load_idx, read_sidecar, synth_clusters, train_test_split
from .errors import AuditError, ConfigError
from .losses import LOSS_NAMES, make_loss
from .metrics import ExperimentRecord, accuracy, partial_mean, recovery_metrics
from .model import NetworkSpec, OptimizerConfig, predict_batch
from .noise import NoiseSpec, generate, noise_rate
from .training import train
from .transition import EstimatorConfig, TransitionMatrix, empirical_transition, init_identity

log = logging.getLogger(__name__)

SECTIONS = {
    "data": (
        "idx_images", "idx_labels", "test_idx_images", "test_idx_labels", "csv", "test_csv",
        "subset", "label_count", "synth_classes", "synth_per_class", "synth_dim",
        "synth_spread", "data_seed", "test_fraction", "sidecar",
    ),
    "network": ("hidden", "activation", "net_seed"),
    "optimizer": (
        "optimizer", "lr", "momentum", "adam_beta1", "adam_beta2", "l2", "lr_schedule",
        "batch_size",
    ),
    "loss": ("loss", "beta", "k", "transition", "transition_file"),
    "estimator": ("gamma", "epsilon", "warmup"),
    "noise": ("noise_kind", "noise_rate", "noise_seed", "baseline_epochs", "baseline_sidecar"),
    "run": ("epochs", "seed", "output"),
}


@dataclass
class RunConfig:
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    test_idx_images: Optional[str] = None
    test_idx_labels: Optional[str] = None
    csv: Optional[str] = None
    test_csv: Optional[str] = None
    subset: Optional[int] = None
    label_count: int = 10
    synth_classes: int = 10
    synth_per_class: int = 200
    synth_dim: int = 20
    synth_spread: float = 0.3
    data_seed: int = 0
    test_fraction: float = 0.5
    sidecar: Optional[str] = None
    hidden: str = "256"
    activation: str = "relu"
    net_seed: int = 0
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    l2: float = 0.0
    lr_schedule: str = "auto"
    batch_size: int = 32
    loss: str = "log"
    beta: float = 0.2
    k: Optional[float] = None
    transition: str = "auto"
    transition_file: Optional[str] = None
    gamma: float = 0.9999
    epsilon: float = 0.1
    warmup: int = 0
    noise_kind: str = "symmetric"
    noise_rate: float = 0.0
    noise_seed: int = 0
    baseline_epochs: Optional[int] = None
    baseline_sidecar: Optional[str] = None
    epochs: int = 30
    seed: int = 0
    output: str = "out"

    @classmethod
    def from_sources(cls, config_file=None, overrides=None):
        """Defaults, then ``key = value`` entries from an INI file, then flags (flags win)."""
        values = {}
        types = {f.name: f.type for f in fields(cls)}
        if config_file:
            parser = configparser.ConfigParser()
            if not parser.read(config_file):
                raise ConfigError(f"cannot read config file {config_file}")
            for section in parser.sections():
                allowed = SECTIONS.get(section)
                if allowed is None:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, raw in parser.items(section):
                    key = key.replace("-", "_")
                    if key not in allowed:
                        raise ConfigError(f"unknown key {key!r} in [{section}]")
                    values[key] = _coerce(raw, types[key], key)
        for key, v in (overrides or {}).items():
            if v is not None:
                if key not in types:
                    raise ConfigError(f"unknown option {key!r}")
                values[key] = v
        return cls(**values)

    def network_spec(self, dim, label_count):
        hidden = [int(h) for h in str(self.hidden).replace(" ", "").split(",") if h]
        return NetworkSpec((dim, *hidden, label_count), self.activation, self.net_seed)

    def schedule(self):
        s = str(self.lr_schedule).strip().lower()
        if s in ("", "none"):
            return ()
        if s == "auto":
            first, second = round(0.6 * self.epochs), round(0.8 * self.epochs)
            return ((first, 0.2), (second, 0.2)) if second > first else ((first, 0.2),)
        pairs = []
        for item in s.split(","):
            epoch, _, mult = item.partition(":")
            try:
                pairs.append((int(epoch), float(mult)))
            except ValueError:
                raise ConfigError(f"bad lr_schedule entry {item!r}; use epoch:multiplier") from None
        return tuple(pairs)

    def optimizer_config(self):
        return OptimizerConfig(
            kind=self.optimizer,
            learning_rate=self.lr,
            momentum=self.momentum,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            l2_scale=self.l2,
            lr_schedule=self.schedule(),
            batch_size=self.batch_size,
        )

    def estimator_config(self):
        """``None`` when gamma is 1: the estimate stays frozen at its starting matrix."""
        if self.gamma == 1.0:
            EstimatorConfig(0.5, self.epsilon, self.warmup)  # still range-check the rest
            return None
        return EstimatorConfig(self.gamma, self.epsilon, self.warmup)

    def noise_spec(self):
        return NoiseSpec(self.noise_kind, self.noise_rate, self.noise_seed)

    def validate(self):
        for name in ("idx_images", "idx_labels", "test_idx_images", "test_idx_labels", "csv",
                     "test_csv", "transition_file", "baseline_sidecar"):
            p = getattr(self, name)
            if p and not Path(p).exists():
                raise ConfigError(f"{name}: {p} does not exist")
        if self.loss not in LOSS_NAMES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        self.optimizer_config()
        self.estimator_config()
        self.noise_spec()
        return self


def _coerce(raw, typ, key):
    text = str(raw).strip()
    args = [a for a in get_args(typ) if a is not type(None)]
    if args:
        if text.lower() in ("", "none", "null"):
            return None
        typ = args[0]
    try:
        return typ(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


def load_data(cfg):
    """Return ``(train, test)`` clean datasets according to the data section."""
    if cfg.idx_images or cfg.idx_labels:
        if not (cfg.idx_images and cfg.idx_labels):
            raise ConfigError("both idx_images and idx_labels are required")
        full = load_idx(cfg.idx_images, cfg.idx_labels, cfg.label_count)
        test = None
        if cfg.test_idx_images and cfg.test_idx_labels:
            test = load_idx(cfg.test_idx_images, cfg.test_idx_labels, cfg.label_count)
    elif cfg.csv:
        full = load_csv(cfg.csv, cfg.label_count)
        test = load_csv(cfg.test_csv, cfg.label_count) if cfg.test_csv else None
    else:
        full = synth_clusters(
            cfg.synth_classes, cfg.synth_per_class, cfg.synth_dim, cfg.synth_spread, cfg.data_seed
        )
        test = None
    if cfg.subset:
        pick = np.sort(np.random.default_rng(cfg.data_seed).permutation(len(full))[: cfg.subset])
        full = full.subset(pick)
    if test is None:
        return train_test_split(full, cfg.test_fraction, cfg.data_seed)
    return full, test


def load_training_set(cfg, train_clean):
    if not cfg.sidecar:
        return train_clean
    side = read_sidecar(cfg.sidecar, n_samples=len(train_clean))
    return side.apply(train_clean)


# --------------------------------------------------------------------------
# steps
# --------------------------------------------------------------------------


def train_baseline(cfg, dataset):
    epochs = cfg.baseline_epochs if cfg.baseline_epochs is not None else cfg.epochs
    spec = cfg.network_spec(dataset.dim, dataset.label_count)
    return train(dataset, spec, cfg.optimizer_config(), epochs=epochs, seed=cfg.seed).state


def make_noisy(cfg, train_clean, baseline=None):
    """Noisy copy of ``train_clean`` plus an audit summary."""
    spec = cfg.noise_spec()
    if spec.kind == "confusing" and baseline is None:
        source = train_clean
        if cfg.baseline_sidecar:
            source = read_sidecar(cfg.baseline_sidecar, len(train_clean)).apply(train_clean)
        baseline = train_baseline(cfg, source)
    noisy = generate(train_clean, spec, baseline)
    flipped = noisy.labels != noisy.true_labels
    audit = {"measured_rate": noise_rate(noisy), "flips": int(flipped.sum()), "valid": True}
    if baseline is not None and flipped.any():
        first, second = _top2(baseline, noisy.features[flipped])
        within = (noisy.labels[flipped] == first) | (noisy.labels[flipped] == second)
        audit["within_top2"] = bool(within.all())
        audit["valid"] = audit["within_top2"]
    return noisy, audit


def _top2(state, features):
    from .kernels import top2

    return top2(np.ascontiguousarray(predict_batch(state, features)))


def resolve_transition(cfg, dataset):
    """Pick the matrix and whether the online estimate is active.

    ``auto`` means: the skeptical loss estimates T online starting from the
    identity; forward/backward use the count-based matrix from the true labels.
    """
    name, mode = cfg.loss, cfg.transition
    if name in ("log", "unhinged"):
        return None, False
    if cfg.transition_file:
        T = TransitionMatrix.load(cfg.transition_file)
        if T.label_count != dataset.label_count:
            raise ConfigError("transition file label count does not match the dataset")
        return T, mode == "estimated"
    if mode == "auto":
        mode = "estimated" if name == "skeptical" else "empirical"
    if mode == "estimated":
        if name == "backward":
            raise ConfigError("backward correction needs a fixed, invertible matrix")
        return None, True
    if mode == "empirical":
        if dataset.true_labels is None:
            raise ConfigError(f"{name} loss needs true labels (a sidecar) or --transition-file")
        return empirical_transition(dataset.true_labels, dataset.labels, dataset.label_count), False
    raise ConfigError(f"unknown transition mode {mode!r}")


def run_training(cfg, dataset):
    T, estimating = resolve_transition(cfg, dataset)
    estimator = cfg.estimator_config() if estimating else None
    if estimating and estimator is None:
        T, estimating = (T if T is not None else init_identity(dataset.label_count)), False
    loss = make_loss(cfg.loss, None if estimating else T, cfg.beta, cfg.k)
    spec = cfg.network_spec(dataset.dim, dataset.label_count)
    return train(
        dataset,
        spec,
        cfg.optimizer_config(),
        loss,
        epochs=cfg.epochs,
        seed=cfg.seed,
        transition=T if estimating else None,
        estimator=estimator,
    ), (T if not estimating else None)


def evaluate(state, train_set, test_set, per_epoch=()):
    rec = ExperimentRecord(per_epoch=list(per_epoch))
    if test_set is not None and len(test_set):
        rec.test_error = 1.0 - accuracy(predict_batch(state, test_set.features).argmax(1), test_set.labels)
    pred = predict_batch(state, train_set.features).argmax(1)
    truth = train_set.true_labels if train_set.true_labels is not None else train_set.labels
    rec.train_error_vs_true = 1.0 - accuracy(pred, truth)
    if train_set.true_labels is None:
        log.warning("no true labels available; recovery metrics left undefined")
    else:
        rec.noise_rate = noise_rate(train_set)
        rec.recovery_precision, rec.recovery_recall = recovery_metrics(
            pred, train_set.labels, train_set.true_labels
        )
    return rec


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="ascii")


def write_epochs_csv(per_epoch, path):
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "noisy_fit_accuracy", "true_accuracy"])
        for e, a, b in per_epoch:
            w.writerow([e, repr(float(a)), repr(float(b))])


def result_payload(cfg, record, extra=None):
    config = asdict(cfg)
    config.pop("output")  # where results go does not affect them
    payload = {"config": config, "record": record.to_dict()}
    payload.update(extra or {})
    return payload


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ("loss", "kind", "rate", "test_err", "train_err", "precision", "recall")


def parse_loss_token(token):
    """``name`` or ``name:T`` (count-based true matrix) or ``name:est`` (online estimate)."""
    name, _, mode = token.strip().partition(":")
    mode = {"": "auto", "t": "empirical", "true": "empirical", "est": "estimated"}.get(mode.lower())
    if name not in LOSS_NAMES or mode is None:
        raise ConfigError(f"bad loss token {token!r}")
    return name, mode


def sweep(cfg, losses, rates, seeds, aggregate="partial"):
    """Train every (loss, rate, seed); returns ``(aggregated_rows, per_run_rows)``."""
    if not rates:
        raise ConfigError("sweep needs at least one rate")
    if aggregate == "partial" and len(seeds) < 3:
        raise ConfigError("partial-mean aggregation needs at least three seeds")
    tokens = [parse_loss_token(t) for t in losses]
    train_clean, test = load_data(cfg)
    baseline = None
    if cfg.noise_kind == "confusing":
        baseline = train_baseline(cfg, train_clean)
    runs = []
    for rate in rates:
        for seed in seeds:
            ncfg = RunConfig(**{**asdict(cfg), "noise_rate": rate, "noise_seed": seed})
            noisy, _ = make_noisy(ncfg, train_clean, baseline)
            for (name, mode), token in zip(tokens, losses):
                rcfg = RunConfig(
                    **{**asdict(ncfg), "loss": name, "transition": mode, "seed": seed,
                       "net_seed": cfg.net_seed + seed}
                )
                result, _ = run_training(rcfg, noisy)
                rec = evaluate(result.state, noisy, test)
                runs.append({
                    "loss": token, "kind": cfg.noise_kind, "rate": rate, "seed": seed,
                    "test_err": rec.test_error, "train_err": rec.train_error_vs_true,
                    "precision": rec.recovery_precision, "recall": rec.recovery_recall,
                })
    agg = partial_mean if aggregate == "partial" else _plain_mean
    rows = []
    for rate in rates:
        for token in losses:
            group = [r for r in runs if r["loss"] == token and r["rate"] == rate]
            row = {"loss": token, "kind": cfg.noise_kind, "rate": rate}
            for col in SWEEP_COLUMNS[3:]:
                vals = [r[col] for r in group if r[col] is not None]
                row[col] = agg(vals) if len(vals) >= (3 if aggregate == "partial" else 1) else None
            rows.append(row)
    return rows, runs


def _plain_mean(values):
    return float(np.mean(values)) if values else None


def write_sweep_csv(rows, path, columns=SWEEP_COLUMNS):
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in columns])


def check_sidecar_labels(cfg, dataset):
    if cfg.sidecar:
        side = read_sidecar(cfg.sidecar)
        if side.label_count != dataset.label_count:
            raise AuditError(
                f"sidecar label count {side.label_count} != dataset label count {dataset.label_count}"
            )
