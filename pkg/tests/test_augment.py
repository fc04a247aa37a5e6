import mpmath
import numpy as np
import pytest
from scipy import stats

from rffgam.augment import (AugmentConfig, augment_dataset, chi2_threshold, mahalanobis_sq,
                            train_augmented, _whitener)
from rffgam.errors import InvalidArgumentError
from rffgam.mixture import predict_mixture
from rffgam.rff import Standardizer, predict_rff, sample_frequencies, fit_rff


def _labeler(X, y, K=60, seed=0):
    return fit_rff(X, y, sample_frequencies(X.shape[1], K, 1.5, seed), 0.5, 1.5)


class TestChi2Threshold:
    @pytest.mark.parametrize("p,ref", [(1, 6.6349), (2, 9.21034), (5, 15.0863)])
    def test_reference_values(self, p, ref):
        assert chi2_threshold(p, 0.99) == pytest.approx(ref, abs=1e-3)

    def test_two_dof_closed_form(self):
        assert chi2_threshold(2, 0.99) == pytest.approx(-2 * np.log(0.01), abs=1e-9)

    @pytest.mark.parametrize("p,q", [(1, 0.99), (3, 0.5), (5, 0.99), (10, 0.9), (40, 0.999)])
    def test_high_precision_oracle(self, p, q):
        """Invert the regularized incomplete gamma function at 50 digits."""
        mpmath.mp.dps = 50
        f = lambda x: mpmath.gammainc(mpmath.mpf(p) / 2, 0, x / 2, regularized=True) - q
        ref = float(mpmath.findroot(f, stats.chi2.ppf(q, p)))
        assert abs(chi2_threshold(p, q) - ref) <= 1e-9

    @pytest.mark.parametrize("p,q", [(0, 0.5), (2, 0.0), (2, 1.0)])
    def test_invalid(self, p, q):
        with pytest.raises(InvalidArgumentError):
            chi2_threshold(p, q)


class TestAugmentDataset:
    def test_zero_perturbation_limit(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, size=(200, 3))
        y = X.sum(axis=1)
        lab = _labeler(X, y)
        out = augment_dataset(X, y, lab, AugmentConfig(n_per_point=3, epsilon=1e-12, seed=1))
        assert out.n_accepted == 600
        syn = out.is_synthetic
        expected = np.repeat(predict_rff(lab, X), 3)
        # noise std is 1e-6 in standardized units, labels move by ~|grad| times that
        np.testing.assert_allclose(out.y[syn], expected, atol=1e-5)

    def test_gaussian_acceptance_fraction(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(3000, 4))
        lab = _labeler(X, X[:, 0])
        out = augment_dataset(X, X[:, 0], lab, AugmentConfig(n_per_point=5, epsilon=0.05, seed=2))
        assert 0.97 <= out.acceptance_rate <= 1.0

    def test_accepted_rows_satisfy_filter(self):
        rng = np.random.default_rng(2)
        X = rng.standard_t(3, size=(500, 3)) * [1.0, 5.0, 0.2]
        lab = _labeler(X, X[:, 1])
        cfg = AugmentConfig(n_per_point=10, epsilon=0.5, seed=3)
        out = augment_dataset(X, X[:, 1], lab, cfg)
        st = Standardizer.fit(X)
        mean, chol = _whitener(st.transform(X))
        d2 = mahalanobis_sq(st.transform(out.X[out.is_synthetic]), mean, chol)
        assert np.all(d2 <= chi2_threshold(3, 0.99) * (1 + 1e-12))
        assert out.n_accepted < out.n_candidates

    def test_originals_first_and_unchanged(self):
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(100, 2)), rng.normal(size=100)
        out = augment_dataset(X, y, _labeler(X, y), AugmentConfig(seed=4))
        assert np.array_equal(out.X[:100], X) and np.array_equal(out.y[:100], y)
        assert not out.is_synthetic[:100].any() and out.is_synthetic[100:].all()
        frame = out.to_frame(["a", "b"], "t")
        assert list(frame.columns) == ["a", "b", "t", "is_synthetic"]

    def test_determinism(self):
        rng = np.random.default_rng(4)
        X, y = rng.normal(size=(80, 2)), rng.normal(size=80)
        lab = _labeler(X, y)
        a = augment_dataset(X, y, lab, AugmentConfig(seed=9))
        b = augment_dataset(X, y, lab, AugmentConfig(seed=9))
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_singular_covariance_gets_ridge(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=200)
        X = np.column_stack([x, 2 * x])
        out = augment_dataset(X, x, _labeler(X, x), AugmentConfig(n_per_point=2, seed=1))
        assert np.all(np.isfinite(out.X))

    def test_schema_mismatch(self):
        X = np.random.default_rng(6).normal(size=(50, 3))
        with pytest.raises(InvalidArgumentError):
            augment_dataset(X, X[:, 0], _labeler(X[:, :2], X[:, 0]))

    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            AugmentConfig(epsilon=0.0)
        with pytest.raises(InvalidArgumentError):
            AugmentConfig(chi2_quantile=1.0)


def test_train_augmented(regime, small_config):
    X, y = regime
    model, data = train_augmented(X, y, small_config, AugmentConfig(n_per_point=2, seed=0))
    assert data.X.shape[0] > X.shape[0]
    assert model.cluster_sizes.sum() == data.X.shape[0]
    assert np.all(np.isfinite(predict_mixture(model, X)))
    local_only, _ = train_augmented(X, y, small_config,
                                    AugmentConfig(n_per_point=2, seed=0, synthetic_in_locals=False))
    assert local_only.cluster_sizes.sum() == X.shape[0]
