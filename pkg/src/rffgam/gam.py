"""Additive models built from penalized cubic B-splines.

Each feature gets a B-spline basis with interior knots at evenly spaced
empirical quantiles.  Coefficients carry a second-difference roughness
penalty and are estimated by backfitting: cycling over features and
solving the one-dimensional penalized problem on partial residuals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

SPLINE = "spline"
LINEAR = "linear"
CONSTANT = "constant"


@dataclass(frozen=True)
class SplineBasis:
    """Univariate basis for one feature.

    ``kind`` is ``"spline"`` for a proper B-spline basis.  Features with too
    few distinct values degrade to a ``"linear"`` term (two unpenalized hat
    functions), and constant features to a ``"constant"`` term that
    contributes nothing.
    """

    feature_index: int
    interior_knots: np.ndarray
    boundary: tuple
    degree: int = 3
    kind: str = SPLINE

    @property
    def n_basis(self) -> int:
        if self.kind == SPLINE:
            return len(self.interior_knots) + self.degree + 1
        return 2 if self.kind == LINEAR else 0

    @property
    def knots(self) -> np.ndarray:
        lo, hi = self.boundary
        k = self.degree + 1
        return np.concatenate([np.full(k, lo), self.interior_knots, np.full(k, hi)])

    def clamp(self, x) -> np.ndarray:
        lo, hi = self.boundary
        return np.clip(np.asarray(x, dtype=np.float64), lo, hi)

    def evaluate(self, x) -> np.ndarray:
        """Basis matrix of shape (n, n_basis); inputs are clamped first."""
        x = self.clamp(x)
        if self.kind == SPLINE:
            return bspline_basis(x, self.knots, self.degree)
        if self.kind == LINEAR:
            # degree-1 B-splines on the boundary knots: (1 - u, u)
            lo, hi = self.boundary
            u = (x - lo) / (hi - lo)
            return np.column_stack([1.0 - u, u])
        return np.zeros((x.shape[0], 0))


def bspline_basis(x, knots, degree: int) -> np.ndarray:
    """Evaluate all B-splines on ``knots`` at ``x`` via the Cox-de Boor recursion.

    ``x`` must lie in ``[knots[degree], knots[-degree-1]]``; the right end
    point belongs to the last non-empty interval so the basis still sums
    to one there.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(knots, dtype=np.float64)
    n_basis = len(t) - degree - 1
    lo, hi = t[degree], t[n_basis]

    # degree-0 indicators; the last non-degenerate interval is closed
    B = ((t[:-1][None, :] <= x[:, None]) & (x[:, None] < t[1:][None, :])).astype(np.float64)
    last = np.nonzero(t[:-1] < t[1:])[0][-1]
    B[x >= hi, :] = 0.0
    B[x >= hi, last] = 1.0
    B[(x < lo) | (x > hi), :] = 0.0

    for k in range(1, degree + 1):
        n = len(t) - k - 1
        left_den = t[k:k + n] - t[:n]
        right_den = t[k + 1:k + 1 + n] - t[1:1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:n]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k + 1:k + 1 + n] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :n] + right * B[:, 1:n + 1]
    return B


def build_spline_basis(x_col, n_knots: int, degree: int = 3,
                       feature_index: int = 0) -> SplineBasis:
    """Cubic B-spline basis with ``n_knots`` interior knots at quantiles.

    Knots sit at the ``i / (n_knots + 1)`` quantiles; duplicates and knots on
    the boundary are dropped.  When fewer than two interior knots survive
    the feature is represented by a linear term instead.
    """
    x = np.asarray(x_col, dtype=np.float64).ravel()
    if int(n_knots) < 2:
        raise InvalidArgumentError(f"n_knots must be at least 2, got {n_knots}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("non-finite feature values")
    n_distinct = np.unique(x).size
    if n_distinct < degree + 1:
        raise InvalidArgumentError(
            f"need at least {degree + 1} distinct values, got {n_distinct}")
    lo, hi = float(x.min()), float(x.max())
    levels = np.arange(1, int(n_knots) + 1) / (int(n_knots) + 1)
    interior = np.unique(np.quantile(x, levels))
    interior = interior[(interior > lo) & (interior < hi)]
    kind = SPLINE if interior.size >= 2 else LINEAR
    if kind == LINEAR:
        interior = np.empty(0)
    return SplineBasis(feature_index=feature_index, interior_knots=interior,
                       boundary=(lo, hi), degree=int(degree), kind=kind)


def feature_basis(x_col, n_knots: int, degree: int = 3, feature_index: int = 0) -> SplineBasis:
    """Like :func:`build_spline_basis` but never fails on degenerate columns."""
    x = np.asarray(x_col, dtype=np.float64).ravel()
    n_distinct = np.unique(x).size
    lo, hi = float(x.min()), float(x.max())
    if n_distinct == 1:
        return SplineBasis(feature_index, np.empty(0), (lo, hi), degree, CONSTANT)
    if n_distinct < degree + 1:
        return SplineBasis(feature_index, np.empty(0), (lo, hi), degree, LINEAR)
    return build_spline_basis(x, n_knots, degree, feature_index)


def difference_matrix(q: int, order: int = 2) -> np.ndarray:
    return np.diff(np.eye(q), n=order, axis=0)


def penalty_matrix(basis) -> np.ndarray:
    """Second-difference penalty ``D^T D`` on the coefficient sequence.

    ``basis`` may be a :class:`SplineBasis` or a basis size.
    """
    q = basis.n_basis if isinstance(basis, SplineBasis) else int(basis)
    if q < 3:
        raise InvalidArgumentError(f"second differences need at least 3 coefficients, got {q}")
    D = difference_matrix(q, 2)
    return D.T @ D


@dataclass(frozen=True)
class GamModel:
    """Fitted additive model ``alpha + sum_j g_j(x_j)``.

    ``g_j(x) = B_j(x) @ theta[j] - offsets[j]`` where the offset centres
    ``g_j`` over the training rows.
    """

    alpha: float
    bases: list
    theta: list
    offsets: np.ndarray
    smooth_lambda: float
    converged: bool = True
    n_sweeps: int = 0
    objective: list = field(default_factory=list, compare=False)
    fitted: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.bases)

    def component(self, j: int, x) -> np.ndarray:
        """Centred shape function ``g_j`` evaluated at raw values ``x``."""
        basis = self.bases[j]
        x = np.asarray(x, dtype=np.float64).ravel()
        if basis.n_basis == 0:
            return np.zeros(x.shape[0])
        return basis.evaluate(x) @ self.theta[j] - self.offsets[j]


def _penalized_system(B: np.ndarray, basis: SplineBasis, lam: float):
    if basis.kind == SPLINE:
        P = B.T @ B + lam * penalty_matrix(basis)
    else:
        P = B.T @ B
    try:
        return ("chol", linalg.cho_factor(P, lower=False))
    except linalg.LinAlgError:
        return ("pinv", linalg.pinvh(P))


def _apply(system, rhs: np.ndarray) -> np.ndarray:
    kind, fac = system
    if kind == "chol":
        return linalg.cho_solve(fac, rhs)
    return fac @ rhs


def _objective(resid: np.ndarray, bases, theta, lam: float) -> float:
    pen = 0.0
    for basis, th in zip(bases, theta):
        if basis.kind == SPLINE:
            d2 = np.diff(th, n=2)
            pen += float(d2 @ d2)
    return float(resid @ resid) + lam * pen


def fit_gam(X, y, n_knots: int = 10, degree: int = 3, smooth_lambda: float = 1.0,
            tol: float = 1e-7, max_sweeps: int = 100) -> GamModel:
    """Fit a penalized-spline additive model by backfitting.

    The intercept is the mean response.  Each sweep solves, feature by
    feature, ``(B_j^T B_j + lambda Omega_j) theta_j = B_j^T r_j`` on the partial
    residual ``r_j`` and re-centres ``g_j``.  Iteration stops once no
    coefficient moves by more than ``tol``.  Running out of sweeps is not an
    error; the result then carries ``converged=False``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    N, p = X.shape
    if y.shape[0] != N:
        raise InvalidArgumentError("X and y have different numbers of rows")
    if N <= p * degree:
        raise InvalidArgumentError(f"too few rows ({N}) for {p} features")
    if not smooth_lambda > 0:
        raise InvalidArgumentError(f"smooth_lambda must be positive, got {smooth_lambda}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite training data")

    bases = [feature_basis(X[:, j], n_knots, degree, j) for j in range(p)]
    designs = [b.evaluate(X[:, j]) for j, b in enumerate(bases)]
    systems = [_penalized_system(B, b, smooth_lambda) if b.n_basis else None
               for B, b in zip(designs, bases)]
    theta = [np.zeros(b.n_basis) for b in bases]
    offsets = np.zeros(p)
    parts = np.zeros((p, N))
    alpha = float(y.mean())
    resid = y - alpha

    history = [_objective(resid, bases, theta, smooth_lambda)]
    converged = False
    sweeps = 0
    for sweeps in range(1, int(max_sweeps) + 1):
        max_change = 0.0
        for j in range(p):
            if systems[j] is None:
                continue
            partial = resid + parts[j]
            new = _apply(systems[j], designs[j].T @ partial)
            raw = designs[j] @ new
            offsets[j] = raw.mean()
            max_change = max(max_change, float(np.max(np.abs(new - theta[j]))))
            theta[j] = new
            parts[j] = raw - offsets[j]
            resid = partial - parts[j]
        history.append(_objective(resid, bases, theta, smooth_lambda))
        if max_change < tol:
            converged = True
            break
    if not converged:
        logger.warning("backfitting hit max_sweeps=%d (last change above tol=%g)",
                       max_sweeps, tol)

    return GamModel(alpha=alpha, bases=bases, theta=theta, offsets=offsets.copy(),
                    smooth_lambda=float(smooth_lambda), converged=converged,
                    n_sweeps=sweeps, objective=history, fitted=y - resid)


def predict_gam(model: GamModel, X) -> np.ndarray:
    """``alpha + sum_j g_j(x_j)`` with inputs clamped to each training range."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise InvalidArgumentError(f"expected {model.n_features} columns, got {X.shape[1]}")
    out = np.full(X.shape[0], model.alpha)
    for j in range(model.n_features):
        out += model.component(j, X[:, j])
    return out
