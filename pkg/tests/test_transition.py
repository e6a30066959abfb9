import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelcorr import kernels
from labelcorr.errors import ConfigError, FormatError, ShapeError
from labelcorr.losses import forward_corrected_loss, log_loss
from labelcorr.transition import (
    EstimatorConfig,
    TransitionMatrix,
    empirical_transition,
    init_identity,
    maybe_update,
    update_sweep,
)


def test_init_identity():
    T = init_identity(3)
    assert np.array_equal(T.entries, np.eye(3))
    np.testing.assert_allclose(T.entries.sum(axis=0), 1.0)
    p = np.array([0.2, 0.3, 0.5])
    assert forward_corrected_loss(p, 1, T).value == log_loss(p, 1).value
    with pytest.raises(ConfigError):
        init_identity(1)


def test_invalid_matrices():
    with pytest.raises(ConfigError):
        TransitionMatrix([[0.5, 0.5], [0.4, 0.5]])
    with pytest.raises(ShapeError):
        TransitionMatrix(np.ones((2, 3)) / 2)
    with pytest.raises(ConfigError):
        TransitionMatrix([[1.5, 0.0], [-0.5, 1.0]])


@pytest.mark.parametrize("bad", [dict(gamma=1.0), dict(gamma=0.0), dict(epsilon=0.0), dict(epsilon=1.0)])
def test_estimator_config_bounds(bad):
    with pytest.raises(ConfigError):
        EstimatorConfig(**bad)


def test_estimator_defaults():
    cfg = EstimatorConfig()
    assert (cfg.gamma, cfg.epsilon, cfg.warmup_epochs) == (0.9999, 0.1, 0)


def test_below_threshold_no_update():
    T = init_identity(3)
    out, fired = maybe_update(T, [0.85, 0.1, 0.05], 1, EstimatorConfig(0.9, 0.1))
    assert not fired and out == T


def test_threshold_is_strict():
    T = init_identity(2)
    _, fired = maybe_update(T, [0.9, 0.1], 1, EstimatorConfig(0.9, 0.1))
    assert not fired


def test_agreeing_update_is_fixed_point():
    T = init_identity(3)
    out, fired = maybe_update(T, [0.0, 0.05, 0.95], 2, EstimatorConfig(0.5, 0.1))
    assert fired and np.array_equal(out.entries, T.entries)


def test_conflicting_update():
    T = init_identity(3)
    out, fired = maybe_update(T, [0.02, 0.03, 0.95], 0, EstimatorConfig(0.9, 0.1))
    assert fired
    np.testing.assert_allclose(out.entries[:, 2], [0.1, 0.0, 0.9], atol=1e-15)
    np.testing.assert_array_equal(out.entries[:, :2], np.eye(3)[:, :2])
    np.testing.assert_array_equal(T.entries, np.eye(3))  # input untouched


def test_gamma_near_one_keeps_identity_exactly():
    # gamma -> 1 limit: the estimate is frozen
    T = init_identity(3)
    probs = np.tile([0.99, 0.005, 0.005], (100, 1))
    update_sweep(T, probs, np.full(100, 2), 1.0, 0.1)
    assert np.array_equal(T.entries, np.eye(3))


def _random_confident_batch(rng, n, c):
    logits = rng.standard_normal((n, c)) * rng.uniform(0.5, 12)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True), rng.integers(0, c, size=n)


def test_stochastic_over_10k_updates(rng):
    c = 5
    T = init_identity(c)
    cfg = EstimatorConfig(0.95, 0.2)
    fired_total = 0
    worst = 0.0
    for _ in range(10_000):
        probs, labels = _random_confident_batch(rng, 1, c)
        T, fired = maybe_update(T, probs[0], labels[0], cfg)
        fired_total += fired
        worst = max(worst, T.column_deviation())
        assert (T.entries >= 0).all() and (T.entries <= 1).all()
    assert worst < 1e-9 and fired_total > 1000


def test_sweep_matches_sequential_maybe_update(rng):
    c = 4
    probs, labels = _random_confident_batch(rng, 300, c)
    cfg = EstimatorConfig(0.9, 0.15)
    seq = init_identity(c)
    count = 0
    for p, l in zip(probs, labels):
        seq, f = maybe_update(seq, p, l, cfg)
        count += f
    for sweep in (kernels.transition_sweep_loop, kernels.transition_sweep_numpy):
        T = np.eye(c)
        assert sweep(T, probs, labels, 0.9, 0.15) == count
        np.testing.assert_allclose(T, seq.entries, rtol=1e-12, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_sweep_never_fires_below_threshold(seed, gamma, eps):
    rng = np.random.default_rng(seed)
    probs, labels = _random_confident_batch(rng, 50, 3)
    below = probs.max(axis=1) <= 1 - eps
    T = init_identity(3)
    fired = update_sweep(T, probs[below], labels[below], gamma, eps)
    assert fired == 0 and np.array_equal(T.entries, np.eye(3))


def test_empirical_transition():
    T = empirical_transition([0, 0, 0, 0, 1], [0, 0, 1, 1, 1])
    np.testing.assert_allclose(T.entries, [[0.5, 0.0], [0.5, 1.0]])
    y = np.array([0, 1, 2, 2, 1])
    assert np.array_equal(empirical_transition(y, y, 3).entries, np.eye(3))


def test_empirical_transition_missing_class_falls_back():
    T = empirical_transition([0, 0], [1, 0], 3)
    np.testing.assert_allclose(T.entries[:, 1:], np.eye(3)[:, 1:])
    with pytest.raises(ShapeError):
        empirical_transition([0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_empirical_transition_stochastic(pairs):
    y, yt = zip(*pairs)
    T = empirical_transition(y, yt, 5)
    np.testing.assert_allclose(T.entries.sum(axis=0), 1.0, atol=1e-12)


def test_text_round_trip(tmp_path, rng):
    T = empirical_transition(rng.integers(0, 4, 200), rng.integers(0, 4, 200), 4)
    T.save(tmp_path / "t.txt")
    assert (tmp_path / "t.txt").read_text().startswith("labels=4\n")
    assert TransitionMatrix.load(tmp_path / "t.txt") == T


def test_text_bad_header(tmp_path):
    (tmp_path / "t.txt").write_text("1 0\n0 1\n")
    with pytest.raises(FormatError):
        TransitionMatrix.load(tmp_path / "t.txt")
