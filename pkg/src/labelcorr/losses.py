"""Per-sample training objectives and their gradients.

Every loss is expressed as a quantity to minimise. Single-sample functions
return a :class:`LossOutput`; the ``LossKind`` classes evaluate whole batches
and hand back dLoss/dLogits for :func:`labelcorr.model.backprop_batch`.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, CorrectionError, DomainError, ShapeError
from .kernels import PROB_FLOOR
from .transition import TransitionMatrix

MAX_CONDITION = 1e8


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    wrt: str = "probs"
    clamped: bool = False

    @property
    def dloss_dprobs(self):
        if self.wrt != "probs":
            raise AttributeError("this loss is defined on logits, not probabilities")
        return self.grad


def _entries(T):
    if isinstance(T, TransitionMatrix):
        return T.entries
    return np.asarray(T, dtype=np.float64)


def _check_label(probs, label):
    if not 0 <= label < probs.shape[0]:
        raise IndexError(f"label {label} out of range for {probs.shape[0]} classes")


def checked_inverse(T):
    e = _entries(T)
    cond = np.linalg.cond(e)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise CorrectionError(
            f"transition matrix is singular or ill-conditioned (condition number {cond:.3g})",
            condition_number=cond,
        )
    return np.linalg.inv(e)


def log_loss(probs, noisy_label):
    p = np.asarray(probs, dtype=np.float64)
    _check_label(p, noisy_label)
    pl = p[noisy_label]
    clamped = pl < PROB_FLOOR
    pl = max(pl, PROB_FLOOR)
    grad = np.zeros_like(p)
    grad[noisy_label] = -1.0 / pl
    return LossOutput(-math.log(pl), grad, clamped=bool(clamped))


def unhinged_loss(logits, noisy_label):
    """One-vs-mean unhinged loss ``1 - z[label] + mean(z[others])``."""
    z = np.asarray(logits, dtype=np.float64)
    _check_label(z, noisy_label)
    c = z.shape[0]
    others = (z.sum() - z[noisy_label]) / (c - 1)
    grad = np.full(c, 1.0 / (c - 1))
    grad[noisy_label] = -1.0
    return LossOutput(1.0 - z[noisy_label] + others, grad, wrt="logits")


def backward_corrected_loss(probs, noisy_label, T, T_inv=None):
    p = np.asarray(probs, dtype=np.float64)
    _check_label(p, noisy_label)
    inv = checked_inverse(T) if T_inv is None else T_inv
    w = inv[noisy_label]
    pc = np.maximum(p, PROB_FLOOR)
    return LossOutput(
        float(-(w * np.log(pc)).sum()), -w / pc, clamped=bool((p < PROB_FLOOR).any())
    )


def forward_corrected_loss(probs, noisy_label, T):
    p = np.asarray(probs, dtype=np.float64)
    _check_label(p, noisy_label)
    t = _entries(T)[noisy_label]
    m = float(t @ p)
    mc = max(m, PROB_FLOOR)
    return LossOutput(-math.log(mc), -t / mc, clamped=m < PROB_FLOOR)


def _check_unit_open(name, v):
    if not 0.0 < v < 1.0:
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {v}")


def magnification(p, k, beta):
    """``p**(1-a) / (1 - a*ln p)`` with ``a = k**beta``; 0 at p=0, 1 at p=1."""
    _check_unit_open("k", k)
    _check_unit_open("beta", beta)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if p == 0.0:
        return 0.0
    a = k**beta
    return p ** (1.0 - a) / (1.0 - a * math.log(p))


def skeptical_objective(p, k, beta):
    """The bounded objective ``p**a * (2/a - ln p)``, increasing in p."""
    _check_unit_open("k", k)
    _check_unit_open("beta", beta)
    a = k**beta
    if p == 0.0:
        return 0.0
    return p**a * (2.0 / a - math.log(p))


def skeptical_objective_grad(p, k, beta):
    a = k**beta
    return p ** (a - 1.0) * (1.0 - a * math.log(p))


def skeptical_loss(probs, noisy_label, T, k, beta):
    """Minimised form ``L(1) - L(p)`` of the skeptical objective on the T-mixed probability."""
    _check_unit_open("k", k)
    _check_unit_open("beta", beta)
    p = np.asarray(probs, dtype=np.float64)
    _check_label(p, noisy_label)
    t = _entries(T)[noisy_label]
    m = float(t @ p)
    mc = max(m, PROB_FLOOR)
    a = k**beta
    value = 2.0 / a - skeptical_objective(mc, k, beta)
    grad = -skeptical_objective_grad(mc, k, beta) * t
    return LossOutput(value, grad, clamped=m < PROB_FLOOR)


# --------------------------------------------------------------------------
# batch evaluation for the training loop
# --------------------------------------------------------------------------


def _identity(c):
    return np.eye(c)


@dataclass(frozen=True)
class LogLoss:
    name = "log"
    uses_transition = False

    def batch(self, logits, probs, labels, transition=None):
        c = probs.shape[1]
        return kernels.loss_logit_grad(
            kernels.LOSS_LOG, probs, labels, _identity(c), _identity(c), 1.0
        )

    def single(self, probs, logits, label):
        return log_loss(probs, label)


@dataclass(frozen=True)
class UnhingedLoss:
    name = "unhinged"
    uses_transition = False

    def batch(self, logits, probs, labels, transition=None):
        n, c = logits.shape
        rows = np.arange(n)
        values = 1.0 - logits[rows, labels] + (logits.sum(axis=1) - logits[rows, labels]) / (c - 1)
        dz = np.full((n, c), 1.0 / (c - 1))
        dz[rows, labels] = -1.0
        return values, dz, np.zeros(n, dtype=bool)

    def single(self, probs, logits, label):
        return unhinged_loss(logits, label)


@dataclass(frozen=True)
class _TransitionLoss:
    transition: Optional[TransitionMatrix] = None
    uses_transition = True

    def _matrix(self, transition, c):
        T = transition if transition is not None else self.transition
        if T is None:
            raise ConfigError(f"{self.name} loss needs a transition matrix")
        e = np.ascontiguousarray(_entries(T))
        if e.shape != (c, c):
            raise ShapeError(f"transition matrix shape {e.shape} does not match {c} labels")
        return e


@dataclass(frozen=True)
class BackwardLoss(_TransitionLoss):
    name = "backward"
    _inv: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.transition is not None:
            object.__setattr__(self, "_inv", checked_inverse(self.transition))

    def _inverse(self, T):
        if T is None or T is self.transition:
            return self._inv
        return checked_inverse(T)

    def batch(self, logits, probs, labels, transition=None):
        e = self._matrix(transition, probs.shape[1])
        inv = self._inverse(transition)
        return kernels.loss_logit_grad(kernels.LOSS_BACKWARD, probs, labels, e, inv, 1.0)

    def single(self, probs, logits, label, transition=None):
        T = self._matrix(transition, len(probs))
        return backward_corrected_loss(probs, label, T, self._inverse(transition))


@dataclass(frozen=True)
class ForwardLoss(_TransitionLoss):
    name = "forward"

    def batch(self, logits, probs, labels, transition=None):
        e = self._matrix(transition, probs.shape[1])
        return kernels.loss_logit_grad(kernels.LOSS_FORWARD, probs, labels, e, e, 1.0)

    def single(self, probs, logits, label, transition=None):
        return forward_corrected_loss(probs, label, self._matrix(transition, len(probs)))


@dataclass(frozen=True)
class SkepticalLoss(_TransitionLoss):
    """``k=None`` means the uniform prior ``1/|Y|``."""

    beta: float = 0.2
    k: Optional[float] = None
    name = "skeptical"

    def __post_init__(self):
        _check_unit_open("beta", self.beta)
        if self.k is not None:
            _check_unit_open("k", self.k)

    def k_for(self, label_count):
        return self.k if self.k is not None else 1.0 / label_count

    def batch(self, logits, probs, labels, transition=None):
        c = probs.shape[1]
        e = self._matrix(transition, c)
        a = self.k_for(c) ** self.beta
        return kernels.loss_logit_grad(kernels.LOSS_SKEPTICAL, probs, labels, e, e, a)

    def single(self, probs, logits, label, transition=None):
        c = len(probs)
        return skeptical_loss(probs, label, self._matrix(transition, c), self.k_for(c), self.beta)


LOSS_NAMES = ("log", "unhinged", "backward", "forward", "skeptical")


def make_loss(name, transition=None, beta=0.2, k=None):
    if name == "log":
        return LogLoss()
    if name == "unhinged":
        return UnhingedLoss()
    if name == "backward":
        return BackwardLoss(transition)
    if name == "forward":
        return ForwardLoss(transition)
    if name == "skeptical":
        return SkepticalLoss(transition, beta=beta, k=k)
    raise ConfigError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}")
