import time

import numpy as np
import pytest

from labelcorr.errors import DomainError
from labelcorr.losses import log_loss
from labelcorr.oracle import (
    DiscreteJointModel,
    OracleReport,
    PairedCorruption,
    SoftmaxScorer,
    conditional_corrected_expectation,
    conditional_corrected_sample,
    conditional_table,
    expected_gradient_clean,
    identity_pair,
    label_posterior_given_feature,
    posterior_corrected_expectation,
    posterior_table,
    random_pair,
    recomposition_deviation,
    run_suite,
)


def flip_pair(flip=0.2):
    """x0 carries label 1, x1 carries label 0, each with mass 0.5; labels flip with ``flip``."""
    clean = np.array([[0.0, 0.5], [0.5, 0.0]])
    kernel = np.array([[1 - flip, flip], [flip, 1 - flip]])
    return PairedCorruption(clean[:, :, None] * kernel[None, :, :])


def test_joint_validation():
    with pytest.raises(DomainError):
        DiscreteJointModel([[0.5, 0.6]])
    with pytest.raises(DomainError):
        DiscreteJointModel([[1.2, -0.2]])
    with pytest.raises(DomainError):
        PairedCorruption(np.ones((2, 2, 3)) / 12)


def test_marginals_share_feature_distribution(rng):
    pair = random_pair(rng, 4, 3)
    np.testing.assert_allclose(pair.coupling.sum(axis=2), pair.clean.joint, atol=1e-15)
    np.testing.assert_allclose(pair.coupling.sum(axis=1), pair.noisy.joint, atol=1e-15)
    np.testing.assert_allclose(pair.clean.feature_marginal(), pair.noisy.feature_marginal(), atol=1e-12)


def test_label_posterior():
    m = DiscreteJointModel([[0.1, 0.3], [0.0, 0.6]])
    np.testing.assert_allclose(label_posterior_given_feature(m, 0), [0.25, 0.75])
    np.testing.assert_array_equal(label_posterior_given_feature(m, 1), [0.0, 1.0])
    with pytest.raises(DomainError):
        label_posterior_given_feature(DiscreteJointModel([[0.0, 0.0], [0.5, 0.5]]), 0)


def test_flip_example_tables():
    pair = flip_pair(0.2)
    post = posterior_table(pair)
    assert post[1, 0, 1] == 1.0
    cond = conditional_table(pair)
    np.testing.assert_allclose(cond[1, 0], [0.8, 0.2])
    np.testing.assert_allclose(cond[0, 1], [0.2, 0.8])
    assert np.isnan(cond[0, 0]).all()  # clean cell (x0, y0) has no mass


def test_identity_corruption_tables(rng):
    pair = identity_pair(random_pair(rng, 3, 3).clean.joint)
    post = posterior_table(pair)
    cond = conditional_table(pair)
    eye = np.eye(3)
    for x in range(3):
        for t in range(3):
            if pair.noisy.joint[x, t] > 0:
                np.testing.assert_array_equal(post[x, :, t], eye[:, t])
        for y in range(3):
            if pair.clean.joint[x, y] > 0:
                np.testing.assert_array_equal(cond[x, y], eye[y])


def test_tables_normalised_where_defined(rng):
    for _ in range(30):
        pair = random_pair(rng, int(rng.integers(1, 5)), int(rng.integers(2, 5)))
        s = posterior_table(pair).sum(axis=1)
        np.testing.assert_allclose(s[~np.isnan(s)], 1.0, atol=1e-12)
        s = conditional_table(pair).sum(axis=2)
        np.testing.assert_allclose(s[~np.isnan(s)], 1.0, atol=1e-12)


def test_fitted_scorer_is_stationary(rng):
    joint = rng.dirichlet(np.ones(12)).reshape(4, 3)
    m = DiscreteJointModel(joint)
    assert np.abs(expected_gradient_clean(m, SoftmaxScorer.fitted(m))).max() <= 1e-8


def test_uniform_joint_symmetric_scorer():
    m = DiscreteJointModel(np.full((3, 4), 1 / 12))
    g = expected_gradient_clean(m, SoftmaxScorer(np.zeros((4, 4))))
    assert np.abs(g).max() < 1e-15


def test_identical_joints_identical_expectations(rng):
    joint = rng.dirichlet(np.ones(6)).reshape(2, 3)
    sc = SoftmaxScorer.random(rng, 2, 3)
    a = expected_gradient_clean(DiscreteJointModel(joint), sc)
    b = expected_gradient_clean(DiscreteJointModel(joint.copy()), sc)
    assert np.array_equal(a, b)


def test_scorer_gradient_matches_log_loss(rng):
    sc = SoftmaxScorer.random(rng, 3, 4)
    p = sc.probs(1)
    dlogits = p * log_loss(p, 2).grad
    dlogits -= p * dlogits.sum()
    np.testing.assert_allclose(-sc.grad_from_logit_grad(1, dlogits), sc.grad_log_prob(1, 2), atol=1e-15)


def test_identity_corruption_corrections_are_log_loss(rng):
    pair = identity_pair(random_pair(rng, 3, 3).clean.joint)
    sc = SoftmaxScorer.random(rng, 3, 3)
    clean = expected_gradient_clean(pair.clean, sc)
    np.testing.assert_allclose(posterior_corrected_expectation(pair, sc), clean, atol=1e-15)
    np.testing.assert_allclose(conditional_corrected_expectation(pair, sc), clean, atol=1e-15)
    x, t = np.argwhere(pair.noisy.joint > 0)[0]
    np.testing.assert_allclose(
        conditional_corrected_sample(pair, sc, x, t, substitute=True), sc.grad_log_prob(x, t), atol=1e-15
    )


def test_theorem_on_random_instances(rng):
    worst = 0.0
    for _ in range(50):
        pair = random_pair(rng, int(rng.integers(1, 5)), int(rng.integers(2, 5)))
        sc = SoftmaxScorer.random(rng, pair.clean.feature_count, pair.clean.label_count)
        diff = posterior_corrected_expectation(pair, sc) - expected_gradient_clean(pair.clean, sc)
        worst = max(worst, np.abs(diff).max())
        assert recomposition_deviation(pair) < 1e-12
    assert worst < 1e-10


def test_run_suite_passes_quickly():
    t0 = time.perf_counter()
    report = run_suite(50, seed=0)
    elapsed = time.perf_counter() - t0
    assert report.passed, report.lines()
    assert elapsed < 5.0
    assert len(report.lines()) == len(OracleReport.TOLERANCES)


def test_run_suite_deterministic():
    a, b = run_suite(5, seed=3), run_suite(5, seed=3)
    assert [getattr(a, k) for k in a.TOLERANCES] == [getattr(b, k) for k in b.TOLERANCES]


def test_report_flags_failures():
    r = OracleReport(1, 0, theorem=1e-3)
    assert r.failures() == ["theorem"] and not r.passed
