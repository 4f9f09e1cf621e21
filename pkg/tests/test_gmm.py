import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofaudit.gmm import (EmConfig, GmmModel, GmmPairModel, GmmTrainingError, e_step,
                            gmm_log_likelihood, score_llr, train_gmm)


def clusters(n=500, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal([-3.0, 0.0], 0.5, size=(n, 2))
    b = rng.normal([3.0, 1.0], 0.5, size=(n, 2))
    return np.vstack([a, b])


def random_model(k, d, seed):
    rng = np.random.default_rng(seed)
    w = rng.random(k)
    return GmmModel(w / w.sum(), rng.standard_normal((k, d)), rng.uniform(0.2, 2.0, (k, d)))


def test_recovers_two_clusters():
    m = train_gmm(clusters(), 2, seed=1)
    got = m.means[np.argsort(m.means[:, 0])]
    np.testing.assert_allclose(got, [[-3, 0], [3, 1]], atol=0.1)


def test_single_component_closed_form():
    x = np.random.default_rng(2).standard_normal((300, 4)) * [1, 2, 3, 4]
    m = train_gmm(x, 1, seed=0)
    np.testing.assert_allclose(m.means[0], x.mean(axis=0), atol=1e-6)
    np.testing.assert_allclose(m.variances[0], x.var(axis=0), atol=1e-6)
    assert m.weights[0] == pytest.approx(1.0)


def test_same_seed_identical():
    x = clusters(200, 3)
    a, b = train_gmm(x, 4, seed=7), train_gmm(x, 4, seed=7)
    assert a.to_dict() == b.to_dict()


def test_pool_too_small():
    with pytest.raises(GmmTrainingError):
        train_gmm(np.zeros((39, 2)), 4, seed=0)


@pytest.mark.parametrize("seed", range(5))
def test_em_monotone_50_iterations(seed):
    x = np.random.default_rng(100 + seed).standard_normal((2000, 6))
    x[:1000] += 1.5
    m = train_gmm(x, 8, seed=seed, config=EmConfig(max_iters=50, tol=-np.inf))
    hist = np.array(m.history)
    assert len(hist) == 50
    assert np.all(np.diff(hist) >= -1e-12 * np.abs(hist[1:]))


def test_log_likelihood_closed_form_and_far_frame():
    m = GmmModel(np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)))
    assert gmm_log_likelihood(m, np.zeros(1)) == pytest.approx(-0.5 * np.log(2 * np.pi))
    far = gmm_log_likelihood(random_model(4, 3, 0), np.full(3, 1e6))
    assert np.isfinite(far) and far < -1e10
    with pytest.raises(ValueError):
        gmm_log_likelihood(m, np.zeros(2))


def test_log_likelihood_matches_direct_sum():
    from decimal import Decimal, getcontext
    getcontext().prec = 50
    m = random_model(5, 3, 4)
    x = np.random.default_rng(5).standard_normal(3)
    total = Decimal(0)
    for w, mu, var in zip(m.weights, m.means, m.variances):
        logn = -0.5 * np.sum(np.log(2 * np.pi * var) + (x - mu) ** 2 / var)
        total += Decimal(float(w)) * Decimal(float(logn)).exp()
    assert gmm_log_likelihood(m, x) == pytest.approx(float(total.ln()), abs=1e-9)


def test_responsibilities_sum_to_one():
    m = random_model(6, 4, 1)
    resp, _ = e_step(m, np.random.default_rng(2).standard_normal((100, 4)) * 5)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-9)


def test_llr_examples():
    b, s = random_model(3, 2, 10), random_model(3, 2, 11)
    x = np.random.default_rng(0).standard_normal((40, 2))
    assert score_llr(GmmPairModel(b, b), x) == 0.0
    assert score_llr(GmmPairModel(s, b), x) == -score_llr(GmmPairModel(b, s), x)
    one = x[:1]
    assert score_llr(GmmPairModel(b, s), one) == pytest.approx(
        gmm_log_likelihood(b, one[0]) - gmm_log_likelihood(s, one[0]), abs=1e-12)
    with pytest.raises(ValueError):
        score_llr(GmmPairModel(b, s), np.zeros((0, 2)))


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_llr_frame_order_invariant(seed):
    pair = GmmPairModel(random_model(3, 2, 20), random_model(3, 2, 21))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((int(rng.integers(1, 60)), 2))
    assert score_llr(pair, x) == score_llr(pair, x[rng.permutation(len(x))])


def test_serialisation_round_trip(tmp_path):
    pair = GmmPairModel(random_model(4, 3, 30), random_model(4, 3, 31), "abc")
    pair.save(tmp_path / "m.json")
    back = GmmPairModel.load(tmp_path / "m.json")
    x = np.random.default_rng(1).standard_normal((50, 3))
    assert abs(score_llr(back, x) - score_llr(pair, x)) <= 1e-9
    assert back.fingerprint == "abc"
