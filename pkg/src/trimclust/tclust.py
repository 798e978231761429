"""Trimmed classification-likelihood clustering under an eigenvalue-ratio bound.

The estimator maximizes

    sum_j sum_{i in R_j} log(pi_j * phi(x_i; mu_j, Sigma_j))

over hard partitions {R_0, ..., R_k} with exactly ``floor(n * alpha)``
trimmed indices in R_0, subject to

    max_{j,l} lambda_l(Sigma_j) / min_{j,l} lambda_l(Sigma_j) <= c,

by multistart concentration steps (trim, assign, constrained update).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .statmath import LOG_2PI, SingularCovarianceError, sym_eigen, symmetrize

WEIGHT_TOL = 1e-10
RATIO_TOL = 1e-8


class DegenerateDataError(ValueError):
    """Every scatter eigenvalue vanished; the assigned data carry no spread."""


class InfeasibleError(ValueError):
    """Problem sizes cannot accommodate the requested (k, alpha, p)."""


def trim_count(n: int, alpha: float) -> int:
    """Number of trimmed observations, floor(n * alpha).

    The small nudge keeps grid values like 0.29 * 100 from landing one
    binary ulp below the integer they represent.
    """
    return int(np.floor(n * alpha + 1e-9))


def as_data_matrix(data) -> np.ndarray:
    """Validate and return data as a float (n, p) array without NaNs."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise ValueError(f"data must be 2-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains NaN or infinite entries")
    return x


@dataclass
class ClusterModel:
    """Mixture parameters (weights, means, covariances) plus the ratio bound."""

    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, p)
    covs: np.ndarray  # (k, p, p)
    c: float

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float)
        if self.covs.ndim == 2:
            self.covs = self.covs.reshape(self.k, 1, 1)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def eigenvalue_ratio(self) -> float:
        values = np.linalg.eigvalsh(symmetrize_batch(self.covs))
        lo, hi = values.min(), values.max()
        return np.inf if lo <= 0 else float(hi / lo)

    def validate(self) -> None:
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {self.weights.sum()}, not 1")
        if np.any(self.weights < 0):
            raise ValueError("negative cluster weight")
        if self.c < 1:
            raise ValueError("eigenvalue-ratio bound c must be >= 1")
        if self.eigenvalue_ratio() > self.c * (1 + RATIO_TOL):
            raise ValueError(
                f"eigenvalue ratio {self.eigenvalue_ratio():g} exceeds c={self.c:g}"
            )

    def copy(self) -> "ClusterModel":
        return ClusterModel(
            self.weights.copy(), self.means.copy(), self.covs.copy(), self.c
        )


@dataclass
class TrimmedPartition:
    """Hard labels in {0, 1, ..., k}; label 0 marks a trimmed observation."""

    labels: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=int)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_trimmed(self) -> int:
        return int(np.count_nonzero(self.labels == 0))


@dataclass
class FitResult:
    model: ClusterModel
    partition: TrimmedPartition
    objective: float
    iterations: int
    converged: bool
    restarts_used: int


@dataclass
class FitConfig:
    n_starts: int = 32
    max_iter: int = 100
    tol: float = 1e-8
    rng: RngStream = field(default_factory=lambda: RngStream(0))

    def __post_init__(self) -> None:
        if self.n_starts < 1 or self.max_iter < 1:
            raise ValueError("n_starts and max_iter must be >= 1")


def symmetrize_batch(covs: np.ndarray) -> np.ndarray:
    return 0.5 * (covs + np.swapaxes(covs, -1, -2))


def weighted_log_densities(data: np.ndarray, model: ClusterModel) -> np.ndarray:
    """(k, n) matrix of log(pi_j * phi(x_i; mu_j, Sigma_j)).

    Rows of weight-zero clusters are -inf so they never win an assignment.
    """
    x = as_data_matrix(data)
    n, p = x.shape
    out = np.full((model.k, n), -np.inf)
    active = np.flatnonzero(model.weights > 0)
    if active.size == 0:
        raise ValueError("model has no active clusters")
    try:
        chol = np.linalg.cholesky(symmetrize_batch(model.covs[active]))
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "cluster covariance is not positive definite"
        ) from exc
    diff = x[None, :, :] - model.means[active, None, :]  # (a, n, p)
    y = np.linalg.solve(chol, np.swapaxes(diff, 1, 2))  # (a, p, n)
    quad = np.einsum("apn,apn->an", y, y)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    out[active] = (
        np.log(model.weights[active])[:, None]
        - 0.5 * (p * LOG_2PI + logdet[:, None] + quad)
    )
    return out


def objective(data, model: ClusterModel, partition: TrimmedPartition) -> float:
    """Trimmed classification log-likelihood of a (model, partition) pair."""
    x = as_data_matrix(data)
    labels = partition.labels
    if labels.shape[0] != x.shape[0]:
        raise ValueError("partition length does not match data")
    if labels.min() < 0 or labels.max() > model.k:
        raise ValueError("labels outside {0, ..., k}")
    total = 0.0
    for j in range(1, model.k + 1):
        rows = x[labels == j]
        if rows.shape[0] == 0:
            continue
        if model.weights[j - 1] <= 0:
            raise ValueError(f"weight-zero cluster {j} contains points")
        values, vectors = sym_eigen(model.covs[j - 1])
        if values[-1] <= 0:
            raise SingularCovarianceError(f"cluster {j} covariance is singular")
        y = (rows - model.means[j - 1]) @ vectors
        quad = np.einsum("ij,ij->i", y / values, y)
        total += rows.shape[0] * (
            np.log(model.weights[j - 1])
            - 0.5 * (x.shape[1] * LOG_2PI + np.sum(np.log(values)))
        ) - 0.5 * float(quad.sum())
    return float(total)


def constrain_eigenvalues(eig_sets, sizes, c: float) -> np.ndarray:
    """Optimally truncate scatter eigenvalues into a common [t, c*t] window.

    Among all truncations m_jl(t) = clip(lambda_jl; t, c*t) this returns the
    one minimizing sum_j n_j sum_l [log m_jl(t) + lambda_jl / m_jl(t)], the
    negative profile log-likelihood contribution of the scatters.  The cost
    is piecewise smooth in t with breakpoints exactly at {lambda_jl,
    lambda_jl / c}, so scanning those intervals together with each piece's
    interior stationary point (a weighted mean) is exact.

    Zero eigenvalues are raised to t.  Input already satisfying the ratio
    bound is returned unchanged.  Clusters with size 0 do not influence t
    but their eigenvalues are still clipped into the window.
    """
    lam = np.atleast_2d(np.asarray(eig_sets, dtype=float))
    w = np.asarray(sizes, dtype=float)
    if c < 1:
        raise ValueError("c must be >= 1")
    if lam.size == 0:
        raise ValueError("no eigenvalue sets given")
    if np.any(lam < -1e-9 * max(lam.max(), 1.0)):
        raise ValueError("negative eigenvalue passed to constrain_eigenvalues")
    lam = np.clip(lam, 0.0, None)

    lo, hi = lam.min(), lam.max()
    if lo > 0 and hi / lo <= c:
        return lam.copy()

    active = w > 0
    lam_act = lam[active].ravel()
    if lam_act.size == 0 or np.all(lam_act <= 0):
        raise DegenerateDataError("all scatter eigenvalues are zero")
    w_act = np.repeat(w[active], lam.shape[1])
    t = _optimal_threshold(lam_act, w_act, c)
    return np.clip(lam, t, c * t)


def _optimal_threshold(lam: np.ndarray, w: np.ndarray, c: float) -> float:
    """Minimizer of sum w * (log clip(lam; t, ct) + lam / clip(lam; t, ct))."""
    pos = lam[lam > 0]
    cand = np.unique(np.concatenate([pos, pos / c]))
    lefts = np.concatenate([[0.0], cand])  # interval i is (lefts[i], rights[i])
    rights = np.concatenate([cand, [np.inf]])
    # membership is constant on each open interval: lam < t iff lam <= left,
    # lam > c*t iff lam / c >= right
    below = lam[None, :] <= lefts[:, None]
    above = lam[None, :] / c >= rights[:, None]
    wl = w * lam
    denom = below @ w + above @ w
    numer = below @ wl + (above @ wl) / c
    t = np.divide(numer, denom, out=rights.copy(), where=denom > 0)
    t = np.where(np.isfinite(t), t, lefts)
    t = np.clip(t, lefts, np.where(np.isfinite(rights), rights, lefts + 1.0))
    valid = t > 0
    t_safe = np.where(valid, t, 1.0)
    m = np.clip(lam[None, :], t_safe[:, None], c * t_safe[:, None])
    cost = np.where(valid, (w * (np.log(m) + lam / m)).sum(axis=1), np.inf)
    best = int(np.argmin(cost))
    if not np.isfinite(cost[best]):
        raise DegenerateDataError("no admissible truncation threshold found")
    return float(t[best])


def _eigh_desc_batch(covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values, vectors = np.linalg.eigh(symmetrize_batch(covs))
    return values[:, ::-1].copy(), vectors[:, :, ::-1].copy()


def _gaussian_cache(model: ClusterModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster (precision, logdet) for repeated density evaluation."""
    values, vectors = _eigh_desc_batch(model.covs)
    if np.any(values[:, -1] <= 0):
        raise SingularCovarianceError("cluster covariance is not positive definite")
    prec = np.einsum("kij,kj,klj->kil", vectors, 1.0 / values, vectors)
    logdet = np.sum(np.log(values), axis=1)
    return prec, logdet


def _log_weighted(
    x: np.ndarray, model: ClusterModel, prec: np.ndarray, logdet: np.ndarray
) -> np.ndarray:
    p = x.shape[1]
    out = np.full((model.k, x.shape[0]), -np.inf)
    active = np.flatnonzero(model.weights > 0)
    diff = x[None, :, :] - model.means[active, None, :]
    quad = np.einsum("anp,apq,anq->an", diff, prec[active], diff)
    out[active] = (
        np.log(model.weights[active])[:, None]
        - 0.5 * (p * LOG_2PI + logdet[active][:, None] + quad)
    )
    return out


def _e_step_from(
    x: np.ndarray,
    model: ClusterModel,
    prec: np.ndarray,
    logdet: np.ndarray,
    alpha: float,
) -> np.ndarray:
    logw = _log_weighted(x, model, prec, logdet)
    best = logw.max(axis=0)
    labels = logw.argmax(axis=0) + 1  # exact ties go to the lowest index
    m = trim_count(x.shape[0], alpha)
    if m > 0:
        order = np.argsort(best, kind="stable")
        labels[order[:m]] = 0
    return labels


def _m_step(
    x: np.ndarray, xx: np.ndarray, labels: np.ndarray, model: ClusterModel
) -> tuple[ClusterModel, float, np.ndarray, np.ndarray]:
    """Constrained parameter update given assignments.

    Returns the new model, the objective of (new model, labels) in closed
    form from the truncation, and the new (precision, logdet) cache.  The
    constrained optimum keeps each cluster's sample eigenvectors and only
    truncates eigenvalues, so tr(Sigma_new^-1 S_j) = sum_l lam_jl / m_jl.
    """
    n, p = x.shape
    k = model.k
    hot = (labels[None, :] == np.arange(1, k + 1)[:, None]).astype(float)
    sizes = hot.sum(axis=1)
    h = sizes.sum()
    occupied = sizes > 0
    safe = np.where(occupied, sizes, 1.0)
    means = np.where(
        occupied[:, None], (hot @ x) / safe[:, None], model.means
    )
    scatters = np.tensordot(hot, xx, axes=1) / safe[:, None, None]
    scatters -= means[:, :, None] * means[:, None, :]
    scatters = np.where(occupied[:, None, None], scatters, model.covs)
    raw_eigs, vecs = _eigh_desc_batch(scatters)
    raw_eigs = np.clip(raw_eigs, 0.0, None)  # scrub tiny negative round-off
    trunc = constrain_eigenvalues(raw_eigs, sizes, model.c)
    covs = symmetrize_batch(np.einsum("kij,kj,klj->kil", vecs, trunc, vecs))
    prec = symmetrize_batch(np.einsum("kij,kj,klj->kil", vecs, 1.0 / trunc, vecs))
    logdet = np.sum(np.log(trunc), axis=1)
    weights = sizes / h

    obj = float(
        np.sum(sizes[occupied] * np.log(weights[occupied]))
        - 0.5 * h * p * LOG_2PI
        - 0.5
        * np.sum(
            sizes[occupied, None]
            * (np.log(trunc[occupied]) + raw_eigs[occupied] / trunc[occupied])
        )
    )
    return ClusterModel(weights, means, covs, model.c), obj, prec, logdet


def concentration_step(
    data, model: ClusterModel, alpha: float
) -> tuple[TrimmedPartition, ClusterModel]:
    """One trim-assign-update iteration.

    Trims the floor(n * alpha) observations with the smallest best weighted
    density, assigns the rest to the argmax cluster, then refits weights,
    means and eigenvalue-constrained covariances.  The objective of the
    returned pair never falls below the objective of (input model, returned
    partition).
    """
    x = as_data_matrix(data)
    xx = x[:, :, None] * x[:, None, :]
    prec, logdet = _gaussian_cache(model)
    labels = _e_step_from(x, model, prec, logdet, alpha)
    new_model, _, _, _ = _m_step(x, xx, labels, model)
    return TrimmedPartition(labels, alpha), new_model


def _random_init(
    x: np.ndarray, k: int, c: float, rng: RngStream
) -> ClusterModel:
    n, p = x.shape
    gen = rng.generator()
    idx = gen.permutation(n)[: k * (p + 1)]
    groups = idx.reshape(k, p + 1)
    means = np.empty((k, p))
    eigs = np.empty((k, p))
    vecs = np.empty((k, p, p))
    for j in range(k):
        rows = x[groups[j]]
        means[j] = rows.mean(axis=0)
        centred = rows - means[j]
        eigs[j], vecs[j] = sym_eigen(centred.T @ centred / rows.shape[0])
    trunc = constrain_eigenvalues(eigs, np.full(k, p + 1.0), c)
    covs = symmetrize_batch(np.einsum("kij,kj,klj->kil", vecs, trunc, vecs))
    return ClusterModel(np.full(k, 1.0 / k), means, covs, c)


def split_cluster(model: ClusterModel, j: int) -> ClusterModel:
    """(k+1)-cluster model splitting cluster ``j`` along its top
    eigen-direction, halving its weight between the two halves."""
    values, vectors = sym_eigen(model.covs[j])
    shift = np.sqrt(max(values[0], 0.0)) * vectors[:, 0]
    weights = np.append(model.weights, model.weights[j] / 2.0)
    weights[j] /= 2.0
    means = np.vstack([model.means, model.means[j] + shift])
    means[j] = means[j] - shift
    covs = np.concatenate([model.covs, model.covs[j][None]], axis=0)
    return ClusterModel(weights, means, covs, model.c)


def split_widest_cluster(model: ClusterModel) -> ClusterModel:
    """(k+1)-cluster model splitting the widest cluster along its top
    eigen-direction."""
    spreads = [sym_eigen(model.covs[j])[0][0] if model.weights[j] > 0 else -np.inf
               for j in range(model.k)]
    return split_cluster(model, int(np.argmax(spreads)))


def split_each_cluster(model: ClusterModel) -> tuple[ClusterModel, ...]:
    """One split candidate per active cluster."""
    return tuple(
        split_cluster(model, j) for j in range(model.k) if model.weights[j] > 0
    )


def add_empty_cluster(model: ClusterModel) -> ClusterModel:
    """(k+1)-cluster model with an extra weight-zero cluster.

    Concentrating from this model can never fall below the k-cluster
    objective, which is what makes warm-started refits monotone in k.
    """
    weights = np.append(model.weights, 0.0)
    means = np.vstack([model.means, model.means[0]])
    covs = np.concatenate([model.covs, model.covs[:1]], axis=0)
    return ClusterModel(weights, means, covs, model.c)


def _concentrate(
    x: np.ndarray,
    xx: np.ndarray,
    init: ClusterModel,
    alpha: float,
    max_iter: int,
    tol: float,
) -> tuple[ClusterModel, np.ndarray, float, int, bool]:
    model = init
    prec, logdet = _gaussian_cache(model)
    prev = -np.inf
    labels = None
    obj = -np.inf
    converged = False
    for it in range(1, max_iter + 1):
        labels = _e_step_from(x, model, prec, logdet, alpha)
        model, obj, prec, logdet = _m_step(x, xx, labels, model)
        if obj - prev < tol and np.isfinite(prev):
            converged = True
            break
        prev = obj
    return model, labels, obj, it, converged


def fit_tclust(
    data,
    k: int,
    alpha: float,
    c: float,
    config: FitConfig | None = None,
    warm_starts: tuple[ClusterModel, ...] = (),
) -> FitResult:
    """Best trimmed classification-likelihood fit over multistart runs.

    Each random start draws k disjoint subsets of size p + 1, fits their
    moments, applies the eigenvalue constraint and concentrates to
    convergence; optional ``warm_starts`` models are concentrated the same
    way.  The best objective wins, with ties going to the earliest start.
    Deterministic given ``config.rng``.
    """
    x = as_data_matrix(data)
    n, p = x.shape
    if k < 1:
        raise InfeasibleError("k must be >= 1")
    if not 0.0 <= alpha < 1.0:
        raise InfeasibleError("alpha must lie in [0, 1)")
    if c < 1.0:
        raise InfeasibleError("c must be >= 1")
    cfg = config if config is not None else FitConfig()
    h = n - trim_count(n, alpha)
    if h < k * (p + 1):
        raise InfeasibleError(
            f"need n - floor(n*alpha) >= k*(p+1): {h} < {k * (p + 1)}"
        )

    xx = x[:, :, None] * x[:, None, :]
    best: tuple[float, ClusterModel, np.ndarray, int, bool] | None = None
    restarts = 0
    for s in range(cfg.n_starts):
        init = _random_init(x, k, c, cfg.rng.child(s))
        model, labels, obj, iters, conv = _concentrate(
            x, xx, init, alpha, cfg.max_iter, cfg.tol
        )
        restarts += 1
        if best is None or obj > best[0]:
            best = (obj, model, labels, iters, conv)
    for warm in warm_starts:
        if warm.k != k:
            raise ValueError(f"warm start has k={warm.k}, expected {k}")
        model, labels, obj, iters, conv = _concentrate(
            x, xx, warm.copy(), alpha, cfg.max_iter, cfg.tol
        )
        restarts += 1
        if best is None or obj > best[0]:
            best = (obj, model, labels, iters, conv)

    obj, model, labels, iters, conv = best
    return FitResult(
        model=model,
        partition=TrimmedPartition(labels, alpha),
        objective=obj,
        iterations=iters,
        converged=conv,
        restarts_used=restarts,
    )


def warm_starts_for_next_k(model: ClusterModel) -> tuple[ClusterModel, ...]:
    """Warm starts for a (k+1)-fit derived from a k-cluster solution: the
    zero-weight embedding (guarantees monotonicity in k) plus one split
    candidate per cluster."""
    return (add_empty_cluster(model),) + split_each_cluster(model)


def augment_with_worst_cluster(
    data, model: ClusterModel, alpha: float
) -> ClusterModel:
    """(k+1)-cluster warm start whose extra cluster covers the points the
    k-cluster model fits worst (the trimmed set, when there is one).

    Small tight groups sitting in the trimmed region are hard to reach from
    random subset initializations; seeding a cluster on the worst-fitting
    points lets one concentration run snap onto them.
    """
    x = as_data_matrix(data)
    n, p = x.shape
    best = weighted_log_densities(x, model).max(axis=0)
    take = max(trim_count(n, alpha), 2 * (p + 1))
    rows = x[np.argsort(best, kind="stable")[:take]]
    mu = rows.mean(axis=0)
    centred = rows - mu
    values, vectors = sym_eigen(centred.T @ centred / rows.shape[0])
    # clip the new scatter into the host model's eigenvalue window so the
    # augmented model stays feasible
    host = np.linalg.eigvalsh(symmetrize_batch(model.covs))
    hi = host.max()
    values = np.clip(values, hi / model.c, hi)
    cov = symmetrize(vectors @ np.diag(values) @ vectors.T)
    w_new = take / n
    weights = np.append(model.weights * (1.0 - w_new), w_new)
    means = np.vstack([model.means, mu])
    covs = np.concatenate([model.covs, cov[None]], axis=0)
    return ClusterModel(weights, means, covs, model.c)


def replace_config(cfg: FitConfig, **kwargs) -> FitConfig:
    return dataclasses.replace(cfg, **kwargs)
