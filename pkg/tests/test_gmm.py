import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rffgam.errors import InvalidArgumentError
from rffgam.gmm import (COVARIANCE_RIDGE, GmmModel, fit_em, hard_assign, log_responsibilities,
                        responsibilities)


def _blobs(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 10.0]])
    labels = rng.integers(0, 2, n)
    return centers[labels] + rng.normal(size=(n, 2)), labels, centers


def _random_model(L=3, d=2, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.2, 1.0, L)
    covs = []
    for _ in range(L):
        A = rng.normal(size=(d, d))
        covs.append(A @ A.T + 0.5 * np.eye(d))
    return GmmModel(weights=w / w.sum(), means=rng.normal(scale=3, size=(L, d)),
                    covariances=np.array(covs))


class TestFitEm:
    def test_two_blobs(self):
        Z, labels, centers = _blobs()
        model = fit_em(Z, 2, seed=1)
        oracle = np.array([Z[labels == k].mean(axis=0) for k in range(2)])
        order = np.argsort(model.means[:, 0])
        np.testing.assert_allclose(model.means[order], oracle, atol=0.2)
        np.testing.assert_allclose(model.means[order], centers, atol=0.2)

    def test_single_component_closed_form(self):
        Z = np.random.default_rng(2).normal(size=(500, 3)) @ np.diag([1.0, 2.0, 0.5])
        model = fit_em(Z, 1, seed=0)
        np.testing.assert_allclose(model.means[0], Z.mean(axis=0), atol=1e-10)
        cov = np.cov(Z.T, bias=True)
        cov[np.diag_indices(3)] += COVARIANCE_RIDGE * np.trace(cov) / 3
        np.testing.assert_allclose(model.covariances[0], cov, atol=1e-10)
        assert model.weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_log_likelihood_monotone(self):
        rng = np.random.default_rng(3)
        Z = np.vstack([rng.normal(size=(300, 2)) + c for c in ([0, 0], [3, 1], [-2, 4])])
        for seed in range(4):
            model = fit_em(Z, 4, seed=seed, tol=1e-10, max_iter=200)
            assert np.all(np.diff(model.log_likelihood) >= -1e-9)

    def test_weights_on_simplex(self):
        Z, _, _ = _blobs(500, seed=4)
        model = fit_em(Z, 5, seed=0)
        assert abs(model.weights.sum() - 1.0) <= 1e-12
        assert np.all(model.weights > 0)
        for cov in model.covariances:
            np.linalg.cholesky(cov)

    def test_seed_determinism(self):
        Z, _, _ = _blobs(400, seed=5)
        a, b = fit_em(Z, 3, seed=11), fit_em(Z, 3, seed=11)
        for name in ("weights", "means", "covariances"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

    def test_too_few_rows(self):
        with pytest.raises(InvalidArgumentError):
            fit_em(np.zeros((2, 2)), 3)

    def test_subset_renormalizes(self):
        model = _random_model(L=4)
        sub = model.subset([0, 2])
        assert sub.weights.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(sub.weights, model.weights[[0, 2]] / model.weights[[0, 2]].sum())


class TestResponsibilities:
    def test_single_component(self):
        model = GmmModel(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])
        np.testing.assert_array_equal(responsibilities(model, np.array([3.0, -1.0])), [1.0])

    def test_symmetric_midpoint(self):
        model = GmmModel(np.array([0.5, 0.5]), np.array([[1.0, 0.0], [-1.0, 0.0]]),
                         np.array([np.eye(2), np.eye(2)]))
        np.testing.assert_allclose(responsibilities(model, np.zeros(2)), [0.5, 0.5], atol=1e-12)

    def test_far_tail_against_high_precision(self):
        model = _random_model(L=3, d=2, seed=7)
        z = np.array([60.0, -80.0])
        gamma = responsibilities(model, z)
        assert np.all(np.isfinite(gamma)) and abs(gamma.sum() - 1.0) <= 1e-12
        mpmath.mp.prec = 200
        logs = []
        for w, mu, cov in zip(model.weights, model.means, model.covariances):
            M = mpmath.matrix(cov.tolist())
            diff = mpmath.matrix((z - mu).tolist())
            quad = (diff.T * mpmath.inverse(M) * diff)[0]
            logs.append(mpmath.log(w) - quad / 2 - mpmath.log(mpmath.det(M)) / 2 - mpmath.log(2 * mpmath.pi))
        top = max(logs)
        total = sum(mpmath.e ** (v - top) for v in logs)
        ref = [float(mpmath.e ** (v - top) / total) for v in logs]
        np.testing.assert_allclose(gamma, ref, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 1000), st.floats(-50, 50), st.floats(-50, 50))
    def test_simplex(self, seed, a, b):
        model = _random_model(L=4, seed=seed)
        gamma = responsibilities(model, np.array([a, b]))
        assert np.all((gamma >= 0) & (gamma <= 1))
        assert abs(gamma.sum() - 1.0) <= 1e-12

    def test_permutation_equivariance(self):
        model = _random_model(L=4, seed=3)
        perm = np.array([2, 0, 3, 1])
        permuted = GmmModel(model.weights[perm], model.means[perm], model.covariances[perm])
        Z = np.random.default_rng(0).normal(scale=3, size=(50, 2))
        np.testing.assert_allclose(responsibilities(permuted, Z),
                                   responsibilities(model, Z)[:, perm], atol=1e-14)

    def test_log_space_consistency(self):
        model = _random_model(seed=5)
        Z = np.random.default_rng(1).normal(size=(10, 2))
        np.testing.assert_allclose(np.exp(log_responsibilities(model, Z)),
                                   responsibilities(model, Z), atol=1e-15)


class TestHardAssign:
    def test_point_at_mean(self):
        model = GmmModel(np.array([0.3, 0.7]), np.array([[0.0, 0.0], [20.0, 20.0]]),
                         np.array([np.eye(2), np.eye(2)]))
        assert list(hard_assign(model, np.array([[0.0, 0.0], [20.0, 20.0]]))) == [0, 1]

    def test_tie_goes_to_lowest_index(self):
        model = GmmModel(np.array([0.5, 0.5]), np.array([[1.0, 0.0], [-1.0, 0.0]]),
                         np.array([np.eye(2), np.eye(2)]))
        assert hard_assign(model, np.zeros((1, 2)))[0] == 0

    def test_matches_argmax_of_responsibilities(self):
        model = _random_model(L=5, seed=9)
        Z = np.random.default_rng(2).normal(scale=4, size=(1000, 2))
        np.testing.assert_array_equal(hard_assign(model, Z),
                                      np.argmax(responsibilities(model, Z), axis=1))
