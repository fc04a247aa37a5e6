import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from rffgam.errors import InvalidArgumentError
from rffgam.gam import (LINEAR, SplineBasis, bspline_basis, build_spline_basis, fit_gam,
                        penalty_matrix, predict_gam)


def de_boor_scalar(x, t, i, k):
    """Textbook recursion for a single B-spline B_{i,k}(x), half-open intervals."""
    if k == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    out = 0.0
    if t[i + k] > t[i]:
        out += (x - t[i]) / (t[i + k] - t[i]) * de_boor_scalar(x, t, i, k - 1)
    if t[i + k + 1] > t[i + 1]:
        out += (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * de_boor_scalar(x, t, i + 1, k - 1)
    return out


class TestBasis:
    def test_size_with_thirty_knots(self):
        x = np.random.default_rng(0).normal(size=5000)
        basis = build_spline_basis(x, 30)
        assert basis.n_basis == 34
        assert basis.evaluate(x).shape == (5000, 34)

    def test_uniform_knots_against_recursion(self):
        x = np.linspace(0.0, 1.0, 101)
        basis = build_spline_basis(x, 4)
        np.testing.assert_allclose(basis.interior_knots, [0.2, 0.4, 0.6, 0.8], atol=1e-12)
        t = basis.knots
        row = basis.evaluate(np.array([0.37]))[0]
        ref = [de_boor_scalar(0.37, t, i, 3) for i in range(basis.n_basis)]
        np.testing.assert_allclose(row, ref, atol=1e-13)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(1)
        x = rng.gamma(2.0, size=2000)
        basis = build_spline_basis(x, 12)
        pts = rng.uniform(*basis.boundary, size=10000)
        pts[:2] = basis.boundary
        assert np.max(np.abs(basis.evaluate(pts).sum(axis=1) - 1.0)) <= 1e-12

    def test_quantile_knots(self):
        x = np.random.default_rng(2).exponential(size=999)
        basis = build_spline_basis(x, 9)
        np.testing.assert_allclose(basis.interior_knots, np.quantile(x, np.arange(1, 10) / 10))

    def test_duplicate_knots_collapse_to_linear(self):
        x = np.concatenate([np.zeros(500), [1.0, 2.0, 3.0, 4.0]])
        basis = build_spline_basis(x, 10)
        assert basis.kind == LINEAR and basis.n_basis == 2

    def test_insufficient_distinct_values(self):
        with pytest.raises(InvalidArgumentError):
            build_spline_basis(np.array([0.0, 1.0, 0.0, 1.0, 2.0]), 3)

    def test_too_few_knots(self):
        with pytest.raises(InvalidArgumentError):
            build_spline_basis(np.arange(20.0), 1)

    def test_clamping(self):
        basis = build_spline_basis(np.linspace(-1, 1, 50), 5)
        np.testing.assert_array_equal(basis.evaluate(np.array([5.0, -7.0])),
                                      basis.evaluate(np.array([1.0, -1.0])))

    def test_matches_generic_recursion(self):
        t = np.r_[[0.0] * 4, 0.3, 0.35, 0.9, [2.0] * 4]
        x = np.linspace(0, 2, 37)[:-1]
        B = bspline_basis(x, t, 3)
        for i in range(len(t) - 4):
            ref = [de_boor_scalar(v, t, i, 3) for v in x]
            np.testing.assert_allclose(B[:, i], ref, atol=1e-13)


class TestPenalty:
    def test_null_space(self):
        omega = penalty_matrix(9)
        assert abs(np.ones(9) @ omega @ np.ones(9)) <= 1e-12
        ramp = np.arange(1.0, 10.0)
        assert abs(ramp @ omega @ ramp) <= 1e-12

    def test_bump(self):
        theta = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        D = np.array([[1, -2, 1, 0, 0], [0, 1, -2, 1, 0], [0, 0, 1, -2, 1]], dtype=float)
        assert theta @ penalty_matrix(5) @ theta == pytest.approx(6.0, abs=1e-14)
        np.testing.assert_allclose(penalty_matrix(5), D.T @ D)

    def test_psd(self):
        assert np.min(np.linalg.eigvalsh(penalty_matrix(12))) >= -1e-12

    def test_from_basis(self):
        basis = build_spline_basis(np.linspace(0, 1, 100), 5)
        assert penalty_matrix(basis).shape == (9, 9)

    def test_too_small(self):
        with pytest.raises(InvalidArgumentError):
            penalty_matrix(2)


def _joint_oracle(X, y, n_knots, lam):
    """Dense penalized solve on [1, B_1, ..., B_p] with sum-to-zero constraints."""
    N, p = X.shape
    bases = [build_spline_basis(X[:, j], n_knots) for j in range(p)]
    blocks = [b.evaluate(X[:, j]) for j, b in enumerate(bases)]
    B = np.hstack([np.ones((N, 1))] + blocks)
    P = linalg.block_diag(np.zeros((1, 1)), *[lam * penalty_matrix(b) for b in bases])
    sizes = [b.n_basis for b in bases]
    C = np.zeros((p, B.shape[1]))
    col = 1
    for j, q in enumerate(sizes):
        C[j, col:col + q] = blocks[j].sum(axis=0)
        col += q
    kkt = np.block([[B.T @ B + P, C.T], [C, np.zeros((p, p))]])
    sol = np.linalg.lstsq(kkt, np.r_[B.T @ y, np.zeros(p)], rcond=None)[0]
    return B @ sol[:B.shape[1]]


class TestFitGam:
    def test_constant_target(self):
        X = np.random.default_rng(0).normal(size=(100, 3))
        model = fit_gam(X, np.full(100, 2.5))
        assert model.alpha == 2.5
        for j in range(3):
            assert np.max(np.abs(model.component(j, X[:, j]))) <= 1e-8

    @pytest.mark.parametrize("seed,p", [(0, 2), (1, 3), (2, 1)])
    def test_backfitting_matches_joint_solve(self, seed, p):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-1, 1, size=(150, p))
        y = np.sin(2 * X[:, 0]) + (X[:, 1] ** 2 if p > 1 else 0) + 0.1 * rng.normal(size=150)
        model = fit_gam(X, y, n_knots=6, smooth_lambda=0.5, tol=1e-12, max_sweeps=2000)
        assert model.converged
        np.testing.assert_allclose(predict_gam(model, X), _joint_oracle(X, y, 6, 0.5), atol=1e-6)

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(300, 4))
        X[:, 1] = X[:, 0] + 0.3 * X[:, 1]
        y = X[:, 0] * np.cos(X[:, 1]) + rng.normal(size=300)
        model = fit_gam(X, y, n_knots=8, smooth_lambda=2.0)
        assert np.all(np.diff(model.objective) <= 1e-9)

    def test_components_centred(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(250, 3))
        y = np.exp(X[:, 0] / 2) + X[:, 2] + rng.normal(size=250)
        model = fit_gam(X, y)
        for j in range(3):
            assert abs(model.component(j, X[:, j]).mean()) <= 1e-8

    def test_prediction_matches_fitted_values(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 2))
        y = np.tanh(X[:, 0]) + rng.normal(size=200)
        model = fit_gam(X, y)
        np.testing.assert_allclose(predict_gam(model, X), model.fitted, atol=1e-10)

    def test_out_of_range_is_clamped(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 1, size=(120, 2))
        model = fit_gam(X, X[:, 0] ** 3 + X[:, 1])
        lo = np.array([X[:, 0].min(), X[:, 1].min()])
        hi = np.array([X[:, 0].max(), X[:, 1].max()])
        far = np.array([[5.0, -3.0]])
        np.testing.assert_array_equal(predict_gam(model, far),
                                      predict_gam(model, np.array([[hi[0], lo[1]]])))

    def test_zero_components_give_alpha(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(80, 2))
        model = fit_gam(X, rng.normal(size=80))
        zeroed = type(model)(alpha=model.alpha, bases=model.bases,
                             theta=[np.zeros_like(t) for t in model.theta],
                             offsets=np.zeros(2), smooth_lambda=1.0)
        np.testing.assert_array_equal(predict_gam(zeroed, X), np.full(80, model.alpha))

    def test_degenerate_features(self):
        rng = np.random.default_rng(8)
        X = np.column_stack([rng.normal(size=90), np.full(90, 4.0), rng.integers(0, 2, 90)])
        y = X[:, 0] + 2 * X[:, 2]
        model = fit_gam(X, y)
        assert [b.kind for b in model.bases] == ["spline", "constant", "linear"]
        assert np.sqrt(np.mean((predict_gam(model, X) - y) ** 2)) < 0.2

    def test_max_sweeps_flag(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(100, 2))
        X[:, 1] = X[:, 0] + 1e-3 * X[:, 1]
        model = fit_gam(X, X[:, 0], tol=1e-30, max_sweeps=2)
        assert not model.converged and model.n_sweeps == 2

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgumentError):
            fit_gam(np.zeros((5, 2)), np.zeros(5))
        with pytest.raises(InvalidArgumentError):
            fit_gam(np.random.default_rng(0).normal(size=(50, 2)), np.zeros(50), smooth_lambda=0)

    def test_dimension_mismatch(self):
        model = fit_gam(np.random.default_rng(0).normal(size=(50, 2)), np.zeros(50))
        with pytest.raises(InvalidArgumentError):
            predict_gam(model, np.zeros((3, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 15))
    def test_partition_property(self, seed, n_knots):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=300) ** 3
        basis = build_spline_basis(x, n_knots)
        pts = rng.uniform(*basis.boundary, size=500)
        B = basis.evaluate(pts)
        assert np.all(B >= -1e-15)
        assert np.max(np.abs(B.sum(axis=1) - 1.0)) <= 1e-12
        assert isinstance(basis, SplineBasis)
