import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from debiased_prediction.data_model import (
    Dataset, Loading, Seed, SimDesign, gen_glm_response, gen_lm_response, gen_loading,
    make_ar_covariance, make_block_covariance, mixture_probability, read_matrix, read_vector,
    sample_gaussian_design, sample_rademacher_design, symmetric_sqrt, write_matrix,
)


def test_seed_streams_are_reproducible_and_distinct():
    s = Seed(7)
    a = s.stream("design", 3).standard_normal(5)
    b = s.stream("design", 3).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, s.stream("noise", 3).standard_normal(5))
    assert not np.allclose(a, s.stream("design", 4).standard_normal(5))
    assert not np.allclose(a, Seed(8).stream("design", 3).standard_normal(5))


def test_seed_rejects_negative():
    with pytest.raises(ValueError):
        Seed(-1)


def test_dataset_validation():
    X = np.ones((3, 2))
    with pytest.raises(ValueError):
        Dataset(X, np.ones(4))
    with pytest.raises(ValueError):
        Dataset(X, np.array([0, 1, 2]), "logistic")
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0, np.nan]]), np.ones(1))
    with pytest.raises(ValueError):
        Dataset(X, np.ones(3), "poisson")
    d = Dataset(X, [0, 1, 1], "glm")
    assert d.family == "logistic" and d.n == 3 and d.p == 2
    assert d.subset([0, 2]).n == 2


def test_loading_rejects_zero():
    with pytest.raises(ValueError):
        Loading(np.zeros(4))


def test_ar_covariance_entries():
    S = make_ar_covariance(4, 0.3)
    assert S[0, 0] == 1.0
    assert S[0, 3] == pytest.approx(0.3 ** 3, abs=1e-15)
    np.testing.assert_array_equal(make_ar_covariance(3, 0.0), np.eye(3))


def test_block_covariance_structure():
    S = make_block_covariance(8)
    assert S[0, 0] == 5.0
    assert S[0, 1] == pytest.approx(0.5)
    assert S[4, 5] == 0.0 and S[5, 4] == 0.0
    assert S[5, 6] == pytest.approx(0.5)
    assert np.linalg.eigvalsh(S).min() > 0


def test_symmetric_sqrt_squares_back():
    S = make_block_covariance(9)
    R = symmetric_sqrt(S)
    np.testing.assert_allclose(R @ R, S, atol=1e-12)
    np.testing.assert_allclose(R, R.T, atol=1e-14)
    with pytest.raises(ValueError):
        symmetric_sqrt(np.diag([1.0, -1.0]))


def test_gaussian_design_moments():
    S = make_ar_covariance(5, 0.3)
    X = sample_gaussian_design(40_000, S, Seed(1).stream("design"))
    np.testing.assert_allclose(X.T @ X / X.shape[0], S, atol=0.03)
    with pytest.raises(ValueError):
        sample_gaussian_design(5, -np.eye(2), 0)


def test_rademacher_design_moments_and_support():
    S = make_block_covariance(7)
    X = sample_rademacher_design(40_000, S, 3)
    np.testing.assert_allclose(X.T @ X / X.shape[0], S, atol=0.15)
    # rows take at most 2^p distinct values
    assert np.unique(X[:, :5], axis=0).shape[0] <= 32


def test_lm_response_is_heteroscedastic():
    S = make_ar_covariance(6, 0.3)
    X = sample_gaussian_design(20_000, S, 0)
    g = np.array([4, 2, 4, 4, -2, 0.0])
    y = gen_lm_response(X, g, 1)
    r = y - X @ g
    assert abs(r.mean()) < 0.1
    # residual variance grows with X_1^2
    big = np.abs(X[:, 0]) > 1.5
    assert r[big].var() > 2 * r[~big].var()


def test_mixture_probability_limits():
    assert mixture_probability(np.array([0.0]))[0] == pytest.approx(0.5)
    np.testing.assert_allclose(mixture_probability(np.array([-50.0, 50.0])), [0.0, 1.0], atol=1e-15)
    p = mixture_probability(np.linspace(-3, 3, 7))
    np.testing.assert_allclose(p + p[::-1], 1.0, atol=1e-15)


def test_glm_response_binary():
    X = sample_rademacher_design(100, make_block_covariance(6), 0)
    y = gen_glm_response(X, np.r_[0.5, 0.5, 0.5, 0.5, 0.075, 0.0], 0)
    assert set(np.unique(y)) <= {0.0, 1.0}


def test_loading_heads_and_tail_scale():
    d = SimDesign("lm_ar", 100, 400, "first", q=0.01)
    xi = gen_loading(d, Seed(0).stream("loading")).xi
    np.testing.assert_array_equal(xi[:5], [-0.5, -0.25, 0.25, 0.5, 0.25])
    assert 0.005 < xi[5:].std() < 0.015
    xi0 = gen_loading(SimDesign("glm_rademacher", 100, 10, "second", q=0.0), 0).xi
    np.testing.assert_array_equal(xi0, [-1, 1, -1, 1, 3, 0, 0, 0, 0, 0])


def test_sim_design_validation():
    with pytest.raises(ValueError):
        SimDesign("probit", 100, 10)
    with pytest.raises(ValueError):
        SimDesign("lm_ar", 100, 5)
    with pytest.raises(ValueError):
        SimDesign("lm_ar", 100, 10, q=-0.1)
    d = SimDesign("glm_rademacher", 100, 10)
    assert d.family == "logistic"
    np.testing.assert_array_equal(d.gamma_star[:5], [0.5, 0.5, 0.5, 0.5, 0.075])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_csv_round_trip_is_exact(n, p, seed):
    import tempfile
    from pathlib import Path
    A = np.random.default_rng(seed).standard_normal((n, p)) * 10.0 ** np.random.default_rng(seed).integers(-8, 8)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "a.csv"
        write_matrix(path, A, header=[f"c{k}" for k in range(p)])
        np.testing.assert_array_equal(read_matrix(path), A)
        write_matrix(path, A[:, :1])
        np.testing.assert_array_equal(read_vector(path), A[:, 0])
