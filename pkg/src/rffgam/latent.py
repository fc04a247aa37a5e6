"""Principal-component reduction of intermediate features.

Also hosts the density-weighted PCA used to read a dominant orientation
off a cloud of learned frequency vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericalFailureError

# Above this many matrix entries the K x K Gram route replaces a dense SVD.
DENSE_SVD_MAX_ENTRIES = 20_000_000
GRAM_BLOCK_ROWS = 4096


@dataclass(frozen=True)
class LatentProjector:
    """Affine map ``h(s) = V_d (s - s_mean)``.

    Attributes
    ----------
    s_mean : ndarray of shape (K,)
    v_d : ndarray of shape (d, K)
        Leading right singular vectors of the centred feature matrix, one
        per row.
    singular_values : ndarray of shape (d,)
    """

    s_mean: np.ndarray
    v_d: np.ndarray
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.v_d.shape[0]

    def transform(self, S) -> np.ndarray:
        return project(self, S)


@dataclass(frozen=True)
class FrequencyAnalysis:
    principal_directions: np.ndarray
    weighted_eigenvalues: np.ndarray
    kde_bandwidth: float
    weights: np.ndarray
    weighted_mean: np.ndarray


def _orient(v: np.ndarray) -> np.ndarray:
    """Flip rows so the largest-magnitude entry of each is positive."""
    idx = np.argmax(np.abs(v), axis=1)
    signs = np.sign(v[np.arange(v.shape[0]), idx])
    signs[signs == 0] = 1.0
    return v * signs[:, None]


def fit_pca(S, d: int) -> LatentProjector:
    """Centre ``S`` and keep its ``d`` leading principal directions.

    Small problems use a thin SVD of the centred matrix; large ones
    eigen-decompose the ``K x K`` Gram matrix accumulated in row blocks,
    which yields the same directions and singular values.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise InvalidArgumentError("S must be a 2-D array")
    N, K = S.shape
    if not 1 <= int(d) <= min(N, K):
        raise InvalidArgumentError(f"d={d} outside [1, {min(N, K)}]")
    d = int(d)
    s_mean = S.mean(axis=0)

    try:
        if N * K <= DENSE_SVD_MAX_ENTRIES:
            _, sv, vt = linalg.svd(S - s_mean, full_matrices=False,
                                   lapack_driver="gesdd")
            v_d, sv = vt[:d], sv[:d]
        else:
            G = np.zeros((K, K))
            for start in range(0, N, GRAM_BLOCK_ROWS):
                block = S[start:start + GRAM_BLOCK_ROWS] - s_mean
                G += block.T @ block
            evals, evecs = linalg.eigh(G, subset_by_index=[K - d, K - 1])
            order = np.argsort(evals)[::-1]
            sv = np.sqrt(np.maximum(evals[order], 0.0))
            v_d = evecs[:, order].T
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailureError(f"PCA decomposition failed: {exc}") from exc

    return LatentProjector(s_mean=s_mean, v_d=np.ascontiguousarray(_orient(v_d)),
                           singular_values=sv)


def project(projector: LatentProjector, s) -> np.ndarray:
    """Apply ``V_d (s - s_mean)`` to one feature vector or a batch of rows."""
    s = np.asarray(s, dtype=np.float64)
    K = projector.s_mean.shape[0]
    if s.shape[-1] != K:
        raise InvalidArgumentError(f"expected length-{K} features, got {s.shape[-1]}")
    return (s - projector.s_mean) @ projector.v_d.T


def scott_bandwidth(points) -> float:
    """Scott's rule ``n**(-1/(p+4))`` times the average coordinate spread."""
    points = np.asarray(points, dtype=np.float64)
    n, p = points.shape
    spread = np.sqrt(np.mean(points.var(axis=0, ddof=1)))
    return float(spread * n ** (-1.0 / (p + 4)))


def kde_weights(points, bandwidth: float, block_rows: int = 1024) -> np.ndarray:
    """Rosenblatt-Parzen Gaussian density estimate evaluated at each sample."""
    points = np.asarray(points, dtype=np.float64)
    n, p = points.shape
    sq_norm = np.sum(points**2, axis=1)
    dens = np.empty(n)
    norm = n * (2.0 * np.pi * bandwidth**2) ** (p / 2.0)
    for start in range(0, n, block_rows):
        blk = points[start:start + block_rows]
        sq = sq_norm[start:start + block_rows, None] + sq_norm[None, :] - 2.0 * blk @ points.T
        np.maximum(sq, 0.0, out=sq)
        dens[start:start + block_rows] = np.exp(-sq / (2.0 * bandwidth**2)).sum(axis=1)
    return dens / norm


def weighted_frequency_pca(omega, kde_bandwidth: float | None = None) -> FrequencyAnalysis:
    """PCA of frequency samples weighted by their estimated density.

    Weights come from a Gaussian kernel density estimate evaluated at each
    sample, which emphasizes the high-density core of the cloud.  Samples
    are centred by the weighted mean before the weighted second moment is
    eigen-decomposed.

    Returns
    -------
    FrequencyAnalysis
        ``principal_directions[:, 0]`` is the dominant direction.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 2:
        raise InvalidArgumentError("omega must be a 2-D array")
    K, p = omega.shape
    if K < p + 1:
        raise InvalidArgumentError(f"need at least p+1={p + 1} samples, got {K}")
    if kde_bandwidth is None:
        kde_bandwidth = scott_bandwidth(omega)
    if not kde_bandwidth > 0:
        raise InvalidArgumentError(f"kde_bandwidth must be positive, got {kde_bandwidth}")

    w = kde_weights(omega, kde_bandwidth)
    w = w / w.sum()
    mean = w @ omega
    centred = omega - mean
    M = (centred * w[:, None]).T @ centred
    evals, evecs = linalg.eigh(M)
    order = np.argsort(evals)[::-1]
    directions = _orient(evecs[:, order].T).T
    return FrequencyAnalysis(principal_directions=directions,
                             weighted_eigenvalues=np.maximum(evals[order], 0.0),
                             kde_bandwidth=float(kde_bandwidth), weights=w,
                             weighted_mean=mean)
