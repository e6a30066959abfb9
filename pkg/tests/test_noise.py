import numpy as np
import pytest
from scipy.stats import chisquare

from labelcorr.data import LabeledDataset, synth_clusters
from labelcorr.errors import AuditError, ConfigError, ShapeError
from labelcorr.model import NetworkSpec, init_network, predict_batch
from labelcorr.noise import (
    NoiseSpec,
    confusing_noise,
    flip_count,
    generate,
    noise_rate,
    symmetric_noise,
    wrong_labels,
)


def _clean(n, c, seed=0, dim=4):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.standard_normal((n, dim)), rng.integers(0, c, size=n), c)


def _baseline(dim, c, seed=3):
    return init_network(NetworkSpec([dim, 16, c], seed=seed))


def test_flip_count_rounds_half_up():
    assert flip_count(0.3, 10) == 3
    assert flip_count(0.25, 10) == 3
    assert flip_count(0.05, 10) == 1
    assert flip_count(0.04, 10) == 0
    assert flip_count(0.0, 1000) == 0


@pytest.mark.parametrize("rate", [-0.1, 0.5, 0.6])
def test_rate_out_of_range(rate):
    with pytest.raises(ConfigError):
        NoiseSpec("symmetric", rate)


def test_unknown_kind():
    with pytest.raises(ConfigError):
        NoiseSpec("pairwise", 0.1)


@pytest.mark.parametrize("kind", ["symmetric", "confusing"])
def test_rate_zero_is_identity(kind):
    clean = _clean(50, 4)
    noisy = generate(clean, NoiseSpec(kind, 0.0, 1), _baseline(4, 4))
    assert np.array_equal(noisy.labels, clean.labels)
    assert noise_rate(noisy) == 0.0


def test_symmetric_ten_samples():
    clean = _clean(10, 4)
    noisy = symmetric_noise(clean, NoiseSpec("symmetric", 0.3, 5))
    flipped = noisy.labels != clean.labels
    assert flipped.sum() == 3
    assert noise_rate(noisy) == pytest.approx(0.3)
    assert np.array_equal(noisy.true_labels, clean.labels)


@pytest.mark.parametrize("kind", ["symmetric", "confusing"])
@pytest.mark.parametrize("rate", [0.05, 0.17, 0.3, 0.45])
def test_exact_flip_count(kind, rate):
    clean = _clean(333, 5)
    noisy = generate(clean, NoiseSpec(kind, rate, 11), _baseline(4, 5))
    assert np.sum(noisy.labels != noisy.true_labels) == flip_count(rate, 333)
    assert noise_rate(noisy) == flip_count(rate, 333) / 333


def test_symmetric_uniform_over_wrong_labels():
    c, n = 10, 100_000
    clean = _clean(n, c, dim=1)
    noisy = symmetric_noise(clean, NoiseSpec("symmetric", 0.4, 2024))
    flipped = noisy.labels != clean.labels
    offsets = (noisy.labels[flipped] - clean.labels[flipped]) % c
    counts = np.bincount(offsets, minlength=c)
    assert counts[0] == 0
    assert chisquare(counts[1:]).pvalue > 0.01


def test_wrong_labels_branches():
    probs = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.4, 0.4, 0.2]])
    wrong, first, second = wrong_labels(probs, np.array([0, 0, 0]))
    assert first.tolist() == [0, 1, 0]
    assert second.tolist() == [1, 2, 1]  # tie in row 3 goes to the lower index
    # right top-1 takes the second choice; wrong top-1 is used as is
    assert wrong.tolist() == [1, 1, 1]


def test_confusing_flips_in_top2():
    clean = synth_clusters(6, 80, 5, 1.0, seed=1)
    base = _baseline(5, 6)
    noisy = confusing_noise(clean, NoiseSpec("confusing", 0.4, 9), base)
    probs = predict_batch(base, clean.features)
    top2 = np.argsort(-probs, axis=1, kind="stable")[:, :2]
    flipped = np.flatnonzero(noisy.labels != clean.labels)
    assert flipped.size == flip_count(0.4, len(clean))
    for i in flipped:
        assert noisy.labels[i] in top2[i]


def test_confusing_shape_mismatch():
    with pytest.raises(ShapeError):
        confusing_noise(_clean(20, 4), NoiseSpec("confusing", 0.2), _baseline(4, 5))


def test_confusing_needs_baseline():
    with pytest.raises(ConfigError):
        generate(_clean(20, 4), NoiseSpec("confusing", 0.2))


@pytest.mark.parametrize("kind", ["symmetric", "confusing"])
def test_deterministic_and_seed_sensitive(kind):
    clean = _clean(200, 5)
    base = _baseline(4, 5)
    runs = [generate(clean, NoiseSpec(kind, 0.3, s), base).labels for s in range(5)]
    again = generate(clean, NoiseSpec(kind, 0.3, 0), base).labels
    assert np.array_equal(runs[0], again)
    assert len({r.tobytes() for r in runs}) == 5


def test_noise_rate_fixture(five_sample):
    assert noise_rate(five_sample) == pytest.approx(0.4)
    assert noise_rate(five_sample.clean().with_noisy_labels(five_sample.true_labels)) == 0.0


def test_noise_rate_needs_truth():
    with pytest.raises(AuditError):
        noise_rate(_clean(5, 3))
