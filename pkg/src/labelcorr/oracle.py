"""Exact enumeration checks of the distribution-correction identities.

Everything here works on finite feature and label spaces. A
:class:`PairedCorruption` holds the full three-way table
``coupling[x, y, noisy_y]``; clean and noisy joints are its two marginals, so
both share the same feature marginal by construction.

The scorer is a single softmax layer over one-hot features; its parameters
form a ``(|Y|, |X| + 1)`` array (weights plus a bias column) and every gradient
returned by this module has that shape.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OracleError
from .losses import forward_corrected_loss

JOINT_TOL = 1e-12


@dataclass
class DiscreteJointModel:
    joint: np.ndarray

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.float64)
        if self.joint.ndim != 2:
            raise DomainError("joint must be a |X| x |Y| table")
        if (self.joint < 0).any() or abs(self.joint.sum() - 1.0) > JOINT_TOL:
            raise DomainError("joint must be non-negative and sum to 1")

    @property
    def feature_count(self):
        return self.joint.shape[0]

    @property
    def label_count(self):
        return self.joint.shape[1]

    def feature_marginal(self):
        return self.joint.sum(axis=1)


@dataclass
class PairedCorruption:
    coupling: np.ndarray
    clean: DiscreteJointModel = field(init=False)
    noisy: DiscreteJointModel = field(init=False)

    def __post_init__(self):
        self.coupling = np.asarray(self.coupling, dtype=np.float64)
        c = self.coupling
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise DomainError("coupling must be |X| x |Y| x |Y|")
        if (c < 0).any():
            raise DomainError("coupling entries must be non-negative")
        self.clean = DiscreteJointModel(c.sum(axis=2))
        self.noisy = DiscreteJointModel(c.sum(axis=1))
        gap = np.abs(self.clean.feature_marginal() - self.noisy.feature_marginal()).max()
        if gap > JOINT_TOL:
            raise DomainError(f"feature marginals differ by {gap:.3g}")


def random_pair(rng, feature_count, label_count, zero_prob=0.2):
    """Feature marginal, then per-feature clean labels, then a per-(x, y) corruption kernel.

    Each clean label is dropped from a feature's support with probability
    ``zero_prob`` (at least one label is kept), so undefined cells occur.
    """
    px = rng.dirichlet(np.ones(feature_count))
    pyx = rng.dirichlet(np.ones(label_count), size=feature_count)
    drop = rng.random((feature_count, label_count)) < zero_prob
    keep = rng.integers(label_count, size=feature_count)
    drop[np.arange(feature_count), keep] = False
    pyx[drop] = 0.0
    pyx /= pyx.sum(axis=1, keepdims=True)
    kernel = rng.dirichlet(np.ones(label_count), size=(feature_count, label_count))
    coupling = px[:, None, None] * pyx[:, :, None] * kernel
    coupling /= coupling.sum()
    return PairedCorruption(coupling)


def identity_pair(clean_joint):
    j = np.asarray(clean_joint, dtype=np.float64)
    coupling = np.zeros(j.shape + (j.shape[1],))
    for y in range(j.shape[1]):
        coupling[:, y, y] = j[:, y]
    return PairedCorruption(coupling)


def label_posterior_given_feature(model, x):
    row = model.joint[x]
    total = row.sum()
    if total <= 0:
        raise DomainError(f"feature {x} has zero mass")
    return row / total


def _divide(num, den):
    out = np.full(np.broadcast_shapes(num.shape, den.shape), np.nan)
    ok = np.broadcast_to(den > 0, out.shape)
    np.divide(num, den, out=out, where=ok)
    return out


def posterior_table(pair):
    """``post[x, y, noisy_y] = p(clean (x, y) | noisy (x, noisy_y))``; NaN where undefined."""
    return _divide(pair.coupling, pair.noisy.joint[:, None, :])


def conditional_table(pair):
    """``cond[x, y, noisy_y] = p(noisy (x, noisy_y) | clean (x, y))``; NaN where undefined."""
    return _divide(pair.coupling, pair.clean.joint[:, :, None])


def _clean_posteriors(model):
    return _divide(model.joint, model.joint.sum(axis=1, keepdims=True))


class SoftmaxScorer:
    """``p(y | x) = softmax(W[:, x] + b)`` over one-hot features."""

    def __init__(self, params):
        self.params = np.array(params, dtype=np.float64)

    @classmethod
    def random(cls, rng, feature_count, label_count, scale=1.0):
        return cls(scale * rng.standard_normal((label_count, feature_count + 1)))

    @classmethod
    def fitted(cls, model):
        """Maximum-likelihood scorer for a joint with full support."""
        post = _clean_posteriors(model)
        if not np.isfinite(post).all() or (post <= 0).any():
            raise DomainError("fitted scorer needs strictly positive posteriors")
        w = np.log(post).T
        return cls(np.hstack([w, np.zeros((model.label_count, 1))]))

    @property
    def feature_count(self):
        return self.params.shape[1] - 1

    def logits(self, x, params=None):
        p = self.params if params is None else params
        return p[:, x] + p[:, -1]

    def probs(self, x, params=None):
        z = self.logits(x, params)
        e = np.exp(z - z.max())
        return e / e.sum()

    def feature_vector(self, x):
        f = np.zeros(self.feature_count + 1)
        f[x] = 1.0
        f[-1] = 1.0
        return f

    def grad_log_prob(self, x, y):
        """Gradient of ``log p(y | x)`` with respect to the parameters."""
        g = -self.probs(x)
        g[y] += 1.0
        return np.outer(g, self.feature_vector(x))

    def grad_from_logit_grad(self, x, dlogits):
        return np.outer(dlogits, self.feature_vector(x))


def expected_gradient_clean(model, scorer):
    out = np.zeros_like(scorer.params)
    for x in range(model.feature_count):
        for y in range(model.label_count):
            w = model.joint[x, y]
            if w > 0:
                out += w * scorer.grad_log_prob(x, y)
    return out


def posterior_corrected_sample(pair, scorer, x, noisy_y, post=None):
    post = posterior_table(pair) if post is None else post
    weights = post[x, :, noisy_y]
    if np.isnan(weights).any():
        raise OracleError(f"posterior undefined at feature {x}, noisy label {noisy_y}")
    out = np.zeros_like(scorer.params)
    for y, w in enumerate(weights):
        if w > 0:
            out += w * scorer.grad_log_prob(x, y)
    return out


def posterior_corrected_expectation(pair, scorer):
    post = posterior_table(pair)
    out = np.zeros_like(scorer.params)
    nj = pair.noisy.joint
    for x in range(nj.shape[0]):
        for yt in range(nj.shape[1]):
            if nj[x, yt] > 0:
                out += nj[x, yt] * posterior_corrected_sample(pair, scorer, x, yt, post)
    return out


def substitution_transition(pair, x, cond=None):
    """``T_x[noisy_y, y] = cond[x, y, noisy_y]``; undefined clean cells map to themselves."""
    cond = conditional_table(pair) if cond is None else cond
    t = cond[x].T.copy()
    for y in range(t.shape[1]):
        if np.isnan(t[:, y]).any():
            t[:, y] = 0.0
            t[y, y] = 1.0
    return t


def conditional_corrected_sample(pair, scorer, x, noisy_y, substitute=False, cond=None):
    """Ratio form of the conditional correction for one ``(x, noisy_y)`` cell.

    With ``substitute=False`` the clean label posterior is the true one; with
    ``substitute=True`` it is replaced by the scorer's own prediction.
    """
    cond = conditional_table(pair) if cond is None else cond
    if substitute:
        q = scorer.probs(x)
        c = substitution_transition(pair, x, cond)[noisy_y]
    else:
        q = _clean_posteriors(pair.clean)[x]
        c = np.where(q > 0, cond[x, :, noisy_y], 0.0)
    weights = c * q
    den = weights.sum()
    if not den > 0:
        raise OracleError(f"zero normaliser at feature {x}, noisy label {noisy_y}")
    out = np.zeros_like(scorer.params)
    for y, w in enumerate(weights):
        if w > 0:
            out += (w / den) * scorer.grad_log_prob(x, y)
    return out


def conditional_corrected_expectation(pair, scorer, substitute=False):
    cond = conditional_table(pair)
    out = np.zeros_like(scorer.params)
    nj = pair.noisy.joint
    for x in range(nj.shape[0]):
        for yt in range(nj.shape[1]):
            if nj[x, yt] > 0:
                out += nj[x, yt] * conditional_corrected_sample(pair, scorer, x, yt, substitute, cond)
    return out


def recomposition_deviation(pair):
    """Max gap between the clean label posterior and its rebuild from noisy quantities."""
    post = np.nan_to_num(posterior_table(pair))
    noisy_post = np.nan_to_num(_clean_posteriors(pair.noisy))
    rebuilt = np.einsum("xyt,xt->xy", post, noisy_post)
    return float(np.abs(rebuilt - np.nan_to_num(_clean_posteriors(pair.clean))).max())


def bayes_deviation(pair):
    """Max gap between ``posterior_table`` and its Bayes rebuild from ``conditional_table``."""
    cond = np.nan_to_num(conditional_table(pair))
    q = np.nan_to_num(_clean_posteriors(pair.clean))
    num = cond * q[:, :, None]
    rebuilt = _divide(num, num.sum(axis=1, keepdims=True))
    post = posterior_table(pair)
    defined = ~np.isnan(post)
    return float(np.abs(rebuilt[defined] - post[defined]).max(initial=0.0))


def forward_loss_param_grad(pair, scorer, x, noisy_y, params=None):
    """Parameter gradient of ``-forward_corrected_loss`` through the scorer."""
    T = substitution_transition(pair, x)
    sc = scorer if params is None else SoftmaxScorer(params)
    p = sc.probs(x)
    out = forward_corrected_loss(p, noisy_y, T)
    pg = p * out.grad
    dlogits = pg - p * pg.sum()
    return -sc.grad_from_logit_grad(x, dlogits)


def forward_loss_fd_grad(pair, scorer, x, noisy_y, step=1e-5):
    """Central finite differences of ``-forward_corrected_loss`` over the scorer parameters."""
    T = substitution_transition(pair, x)
    theta = scorer.params
    g = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        up = theta.copy()
        dn = theta.copy()
        up[idx] += step
        dn[idx] -= step
        fu = forward_corrected_loss(scorer.probs(x, up), noisy_y, T).value
        fd = forward_corrected_loss(scorer.probs(x, dn), noisy_y, T).value
        g[idx] = -(fu - fd) / (2 * step)
    return g


@dataclass
class OracleReport:
    trials: int
    seed: int
    theorem: float = 0.0
    chain: float = 0.0
    recomposition: float = 0.0
    bayes: float = 0.0
    forward_analytic: float = 0.0
    forward_fd: float = 0.0
    seconds: float = 0.0

    TOLERANCES = {
        "theorem": 1e-10,
        "chain": 1e-12,
        "recomposition": 1e-12,
        "bayes": 1e-12,
        "forward_analytic": 1e-10,
        "forward_fd": 1e-6,
    }

    def failures(self):
        return [k for k, tol in self.TOLERANCES.items() if not getattr(self, k) < tol]

    @property
    def passed(self):
        return not self.failures()

    def lines(self):
        out = []
        for k, tol in self.TOLERANCES.items():
            v = getattr(self, k)
            out.append(f"{'PASS' if v < tol else 'FAIL'} {k:<17} max deviation {v:.3e} (tol {tol:.0e})")
        return out


def run_suite(trials=50, seed=0, max_features=4, max_labels=4):
    """Randomised check of every identity; returns the max deviation per check."""
    rng = np.random.default_rng(seed)
    report = OracleReport(trials, seed)
    t0 = time.perf_counter()
    for _ in range(trials):
        nx = int(rng.integers(1, max_features + 1))
        ny = int(rng.integers(2, max_labels + 1))
        pair = random_pair(rng, nx, ny)
        scorer = SoftmaxScorer.random(rng, nx, ny)
        clean = expected_gradient_clean(pair.clean, scorer)
        post_form = posterior_corrected_expectation(pair, scorer)
        report.theorem = max(report.theorem, float(np.abs(post_form - clean).max()))
        report.recomposition = max(report.recomposition, recomposition_deviation(pair))
        report.bayes = max(report.bayes, bayes_deviation(pair))
        post = posterior_table(pair)
        cond = conditional_table(pair)
        for x in range(nx):
            for yt in range(ny):
                if pair.noisy.joint[x, yt] <= 0:
                    continue
                a = posterior_corrected_sample(pair, scorer, x, yt, post)
                b = conditional_corrected_sample(pair, scorer, x, yt, False, cond)
                report.chain = max(report.chain, float(np.abs(a - b).max()))
                sub = conditional_corrected_sample(pair, scorer, x, yt, True, cond)
                ana = forward_loss_param_grad(pair, scorer, x, yt)
                fd = forward_loss_fd_grad(pair, scorer, x, yt)
                report.forward_analytic = max(report.forward_analytic, float(np.abs(sub - ana).max()))
                report.forward_fd = max(report.forward_fd, float(np.abs(sub - fd).max()))
    report.seconds = time.perf_counter() - t0
    return report
