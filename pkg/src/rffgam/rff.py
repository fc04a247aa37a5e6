"""Random Fourier feature regression.

The model is ``m(x) = y_mean + Re(sum_k beta_k exp(i omega_k . z))`` where
``z`` is the z-scored input.  Frequencies start as draws from the spectral
density of a Gaussian RBF kernel and can be adapted by a resampling loop
that concentrates them where the fitted amplitudes are large.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg.blas import zherk

from .errors import InvalidArgumentError, NumericalFailureError

logger = logging.getLogger(__name__)

# Rows per block when accumulating Phi^H Phi; bounds peak memory at
# roughly BLOCK_ROWS * K * 16 bytes.
BLOCK_ROWS = 2048


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring with statistics taken from training inputs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = _as_matrix(X)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # constant columns are passed through centred but unscaled
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"expected {self.n_features} columns, got {X.shape[1]}")
        return (X - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        Z = _as_matrix(Z)
        if Z.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"expected {self.n_features} columns, got {Z.shape[1]}")
        return Z * self.std + self.mean


@dataclass(frozen=True)
class RffModel:
    """A fitted random Fourier feature regressor.

    Attributes
    ----------
    omega : ndarray of shape (K, p)
        Frequencies, in radians per standardized input unit.
    beta : complex ndarray of shape (K,)
        Amplitudes solving the regularized normal equations.
    sigma : float
        Bandwidth of the Gaussian kernel the initial frequencies came from.
    lam : float
        Tikhonov parameter used in the final solve.
    standardizer : Standardizer
        Input scaling fitted on the training inputs.
    y_mean : float
        Response offset removed before the solve.
    """

    omega: np.ndarray
    beta: np.ndarray
    sigma: float
    lam: float
    standardizer: Standardizer
    y_mean: float

    @property
    def n_frequencies(self) -> int:
        return self.omega.shape[0]

    @property
    def n_features(self) -> int:
        return self.omega.shape[1]


@dataclass
class ResampleHistory:
    """Per-iteration diagnostics of :func:`resample_frequencies`."""

    train_rmse: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_iteration: int = 0


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D array, got ndim={X.ndim}")
    return X


def gaussian_kernel(X1, X2, sigma: float) -> np.ndarray:
    """Gaussian RBF kernel matrix ``exp(-|x - x'|^2 / (2 sigma^2))``."""
    X1 = _as_matrix(X1)
    X2 = _as_matrix(X2)
    sq = (np.sum(X1**2, axis=1)[:, None] + np.sum(X2**2, axis=1)[None, :]
          - 2.0 * X1 @ X2.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma**2))


def sample_frequencies(p: int, K: int, sigma: float, seed) -> np.ndarray:
    """Draw ``K`` frequencies from the spectral density of a Gaussian kernel.

    The Fourier transform of ``exp(-|x|^2 / (2 sigma^2))`` is, up to
    normalization, a Gaussian with covariance ``sigma**-2 * I``.

    Returns
    -------
    ndarray of shape (K, p)
    """
    if int(K) < 1:
        raise InvalidArgumentError(f"K must be positive, got {K}")
    if int(p) < 1:
        raise InvalidArgumentError(f"p must be positive, got {p}")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / sigma, size=(int(K), int(p)))


def build_design_matrix(X, omega) -> np.ndarray:
    """Complex design matrix with entries ``exp(i omega_k . x_i)``."""
    X = _as_matrix(X)
    omega = _as_matrix(omega)
    if X.shape[1] != omega.shape[1]:
        raise InvalidArgumentError(
            f"X has {X.shape[1]} columns but omega has {omega.shape[1]}")
    return np.exp(1j * (X @ omega.T))


def _solve_hpd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(A, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Cholesky factorization failed: {exc}") from exc
    x = linalg.cho_solve(factor, b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError("non-finite solution of the normal equations")
    return x


def fit_coefficients(Phi, y, lam: float) -> np.ndarray:
    """Solve ``(Phi^H Phi + lam I) beta = Phi^H y`` by Cholesky.

    When ``K > N`` the equivalent system ``(Phi Phi^H + lam I) a = y``,
    ``beta = Phi^H a`` is factored instead, which is much smaller.

    Parameters
    ----------
    Phi : complex ndarray of shape (N, K)
    y : ndarray of shape (N,)
    lam : float
        Tikhonov parameter, strictly positive.
    """
    Phi = np.asarray(Phi, dtype=np.complex128)
    y = np.asarray(y, dtype=np.float64).ravel()
    if Phi.ndim != 2 or Phi.shape[0] != y.shape[0]:
        raise InvalidArgumentError("Phi and y have incompatible shapes")
    if Phi.shape[0] < 1:
        raise InvalidArgumentError("need at least one sample")
    if not lam > 0:
        raise InvalidArgumentError(f"lam must be positive, got {lam}")
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite entries in Phi or y")
    N, K = Phi.shape
    if K > N:
        # push-through identity: same beta from an N x N Hermitian system
        G = Phi @ Phi.conj().T
        G[np.diag_indices_from(G)] += lam
        return Phi.conj().T @ _solve_hpd(G, y.astype(np.complex128))
    A = Phi.conj().T @ Phi
    A[np.diag_indices_from(A)] += lam
    return _solve_hpd(A, Phi.conj().T @ y)


def normal_equations(Xs, omega, y, block_rows: int = BLOCK_ROWS):
    """Accumulate ``Phi^H Phi`` and ``Phi^H y`` over fixed row blocks.

    ``Phi`` is never materialized in full.  Only the upper triangle of the
    returned matrix is meaningful, which is all the Cholesky solve reads.
    """
    Xs = _as_matrix(Xs)
    omega = _as_matrix(omega)
    y = np.asarray(y, dtype=np.float64).ravel()
    K = omega.shape[0]
    A = np.zeros((K, K), dtype=np.complex128, order="F")
    b = np.zeros(K, dtype=np.complex128)
    for start in range(0, Xs.shape[0], block_rows):
        Phi = build_design_matrix(Xs[start:start + block_rows], omega)
        A = zherk(1.0, Phi, beta=1.0, c=A, trans=2, lower=0, overwrite_c=1)
        b += Phi.conj().T @ y[start:start + block_rows]
    return A, b


def solve_rff(Xs, y, omega, lam: float, block_rows: int = BLOCK_ROWS) -> np.ndarray:
    """Fit amplitudes for standardized inputs ``Xs`` and centred ``y``."""
    if not lam > 0:
        raise InvalidArgumentError(f"lam must be positive, got {lam}")
    if not (np.all(np.isfinite(Xs)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite training data")
    A, b = normal_equations(Xs, omega, y, block_rows)
    A[np.diag_indices_from(A)] += lam
    return _solve_hpd(A, b)


def _predict_std(Xs, omega, beta, block_rows: int = BLOCK_ROWS) -> np.ndarray:
    out = np.empty(Xs.shape[0])
    for start in range(0, Xs.shape[0], block_rows):
        Phi = build_design_matrix(Xs[start:start + block_rows], omega)
        out[start:start + block_rows] = (Phi @ beta).real
    return out


def fit_rff(X, y, omega, lam: float, sigma: float,
            standardizer: Standardizer | None = None) -> RffModel:
    """Fit amplitudes on raw inputs for a fixed frequency matrix."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if standardizer is None:
        standardizer = Standardizer.fit(X)
    y_mean = float(y.mean())
    beta = solve_rff(standardizer.transform(X), y - y_mean, omega, lam)
    return RffModel(omega=np.asarray(omega, dtype=np.float64), beta=beta,
                    sigma=float(sigma), lam=float(lam),
                    standardizer=standardizer, y_mean=y_mean)


def predict_rff(model: RffModel, X_raw) -> np.ndarray:
    """Real part of the random Fourier feature expansion plus the offset."""
    Xs = model.standardizer.transform(X_raw)
    return model.y_mean + _predict_std(Xs, model.omega, model.beta)


def intermediate_features(model: RffModel, X_raw) -> np.ndarray:
    """Amplitude-weighted features ``S_ik = Re(beta_k exp(i omega_k . x_i))``.

    Row sums equal ``predict_rff(model, X) - model.y_mean``.
    """
    Xs = model.standardizer.transform(X_raw)
    S = np.empty((Xs.shape[0], model.n_frequencies))
    for start in range(0, Xs.shape[0], BLOCK_ROWS):
        Phi = build_design_matrix(Xs[start:start + BLOCK_ROWS], model.omega)
        S[start:start + BLOCK_ROWS] = (Phi * model.beta).real
    return S


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def resample_frequencies(X_fit, y_fit, X_val, y_val, K: int, sigma: float,
                         lam: float, delta: float, iters: int, seed,
                         weight_power: float = 2.0,
                         standardizer: Standardizer | None = None):
    """Adapt frequencies by amplitude-weighted resampling and a random walk.

    Each iteration fits amplitudes on the current frequencies, redraws the
    frequency rows with probability proportional to ``|beta_k|**weight_power``,
    jitters every redrawn row by ``N(0, delta**2 I)`` and refits.  The
    iterate with the smallest validation RMSE is returned, so the result is
    never worse on the validation split than the initial Gaussian draw.

    Returns
    -------
    model : RffModel
    history : ResampleHistory
    """
    X_fit = _as_matrix(X_fit)
    X_val = _as_matrix(X_val)
    y_fit = np.asarray(y_fit, dtype=np.float64).ravel()
    y_val = np.asarray(y_val, dtype=np.float64).ravel()
    if X_val.shape[0] == 0:
        raise InvalidArgumentError("validation split is empty")
    if int(iters) < 0:
        raise InvalidArgumentError(f"iters must be non-negative, got {iters}")
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be positive, got {delta}")

    if standardizer is None:
        standardizer = Standardizer.fit(X_fit)
    Xs_fit = standardizer.transform(X_fit)
    Xs_val = standardizer.transform(X_val)
    y_mean = float(y_fit.mean())
    yc = y_fit - y_mean

    omega = sample_frequencies(Xs_fit.shape[1], K, sigma, seed)
    walk_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    history = ResampleHistory()

    best = None
    for it in range(int(iters) + 1):
        if it > 0:
            weights = np.abs(beta) ** weight_power
            total = weights.sum()
            if not (np.isfinite(total) and total > 0):
                break
            idx = walk_rng.choice(K, size=K, replace=True, p=weights / total)
            omega = omega[idx] + delta * walk_rng.standard_normal(omega.shape)
        beta = solve_rff(Xs_fit, yc, omega, lam)
        train_rmse = _rmse(y_mean + _predict_std(Xs_fit, omega, beta), y_fit)
        val_rmse = _rmse(y_mean + _predict_std(Xs_val, omega, beta), y_val)
        history.train_rmse.append(train_rmse)
        history.val_rmse.append(val_rmse)
        logger.info("resample iter %d: train %.5g  val %.5g", it, train_rmse, val_rmse)
        if best is None or val_rmse < best[0]:
            best = (val_rmse, it, omega, beta)

    _, history.best_iteration, omega, beta = best
    model = RffModel(omega=omega, beta=beta, sigma=float(sigma), lam=float(lam),
                     standardizer=standardizer, y_mean=y_mean)
    return model, history


def train_rff(X, y, K: int, sigma: float, lam: float, delta: float,
              iters: int, seed, validation_fraction: float = 0.1,
              weight_power: float = 2.0, refit: bool = True):
    """Resample frequencies on a held-out split, then refit on all rows.

    The standardizer is fitted once on all of ``X``.  A ``validation_fraction``
    share of rows (chosen with ``seed``) drives best-iterate selection; when
    ``refit`` is true the winning frequencies get amplitudes re-solved on
    the full training set.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if not 0.0 < validation_fraction < 1.0:
        raise InvalidArgumentError("validation_fraction must lie in (0, 1)")
    n_val = max(1, int(round(validation_fraction * n)))
    if n_val >= n:
        raise InvalidArgumentError("too few rows for a validation split")
    split_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    perm = split_rng.permutation(n)
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])

    standardizer = Standardizer.fit(X)
    model, history = resample_frequencies(
        X[fit_idx], y[fit_idx], X[val_idx], y[val_idx], K, sigma, lam, delta,
        iters, seed, weight_power=weight_power, standardizer=standardizer)
    if refit:
        model = fit_rff(X, y, model.omega, lam, sigma, standardizer=standardizer)
    return model, history


def kernel_ridge_oracle(X, y, sigma: float, lam: float):
    """Dense kernel ridge regression with a Gaussian RBF kernel.

    Solves ``(Xi + lam I) eta = y`` and returns a callable evaluating
    ``sum_i eta_i k(x - x_i)``.  Intended for small reference problems.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    Xi = gaussian_kernel(X, X, sigma)
    Xi[np.diag_indices_from(Xi)] += lam
    try:
        factor = linalg.cho_factor(Xi)
        eta = linalg.cho_solve(factor, y)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError(f"kernel system is singular: {exc}") from exc

    def predict(X_new):
        return gaussian_kernel(X_new, X, sigma) @ eta

    predict.eta = eta
    return predict
