"""Symmetric linear algebra, Gaussian log-densities and chi-square functions.

Everything here is pure given its inputs; randomness only enters through an
explicit :class:`~trimclust.rng.RngStream`.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .rng import RngStream

LOG_2PI = float(np.log(2.0 * np.pi))

# Smallest admissible ratio of the smallest to the largest covariance
# eigenvalue before a log-density evaluation is refused.
PSD_RTOL = 1e-12


class SingularCovarianceError(ValueError):
    """Covariance matrix too close to singular for the requested operation."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the exactly symmetric part (m + m.T) / 2."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def sym_eigen(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(values, vectors)`` with eigenvalues in non-increasing order
    and orthonormal eigenvectors in the matching columns, so that
    ``vectors @ diag(values) @ vectors.T`` reconstructs the input.
    """
    m = symmetrize(m)
    values, vectors = np.linalg.eigh(m)  # ascending; raises on non-convergence
    order = slice(None, None, -1)
    return values[order].copy(), vectors[:, order].copy()


def _as_points(x: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim == 1:
        if p == 1 and x.shape[0] != 1:
            return x.reshape(-1, 1), False  # vector of scalar observations
        return x.reshape(1, p), True
    return x, False


def log_gaussian_density(x, mean, cov) -> float | np.ndarray:
    """log of the p-variate normal density at ``x``.

    ``x`` may be a single point of length p or an (n, p) array; a float is
    returned for a single point, an array otherwise.  Raises
    :class:`SingularCovarianceError` when the smallest covariance eigenvalue
    falls below ``PSD_RTOL`` times the largest.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    p = mean.shape[0]
    values, vectors = sym_eigen(cov)
    if values[0] <= 0.0 or values[-1] <= PSD_RTOL * values[0]:
        raise SingularCovarianceError(
            f"covariance is numerically singular (eigenvalues {values})"
        )
    pts, single = _as_points(x, p)
    y = (pts - mean) @ vectors
    quad = np.einsum("ij,ij->i", y / values, y)
    out = -0.5 * (p * LOG_2PI + np.sum(np.log(values)) + quad)
    return float(out[0]) if single else out


def chi2_cdf(x, df: int):
    """Chi-square distribution function (regularized lower incomplete gamma)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("chi2_cdf requires x >= 0")
    if df <= 0:
        raise ValueError("chi2_cdf requires a positive df")
    out = special.gammainc(df / 2.0, x / 2.0)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(q, df: int):
    """Inverse of :func:`chi2_cdf` on (0, 1)."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("chi2_quantile requires 0 < q < 1")
    if df <= 0:
        raise ValueError("chi2_quantile requires a positive df")
    out = 2.0 * special.gammaincinv(df / 2.0, q)
    return float(out) if out.ndim == 0 else out


def sample_mvnormal(mean, cov, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` points from N(mean, cov), deterministically for a stream.

    The covariance may be positive semidefinite; degenerate directions
    collapse onto the mean.  Indefinite input raises
    :class:`SingularCovarianceError`.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    p = mean.shape[0]
    values, vectors = sym_eigen(cov)
    scale = max(values[0], 1.0)
    if values[-1] < -1e-10 * scale:
        raise SingularCovarianceError(
            f"covariance is indefinite (eigenvalues {values})"
        )
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    z = rng.generator().standard_normal((n, p))
    return mean + z @ root.T
