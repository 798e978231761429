"""Seeded generation of simulation scenarios: Gaussian components plus
uniform box contamination, and overlap-targeted mixture construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .statmath import chi2_quantile, sample_mvnormal, sym_eigen
from .tclust import ClusterModel, weighted_log_densities

MAX_REJECTION_ATTEMPTS = 100_000


@dataclass
class ComponentSpec:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.count <= 0:
            raise ValueError("component count must be positive")


@dataclass
class ContaminationSpec:
    """Uniform noise on a box, optionally kept away from every component
    by a squared-Mahalanobis floor at the given chi-square percentile."""

    bounds: np.ndarray  # (p, 2) rows of (low, high)
    count: int
    exclusion_percentile: float | None = None

    def __post_init__(self) -> None:
        self.bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if self.count <= 0:
            raise ValueError("contamination count must be positive")
        if np.any(self.bounds[:, 1] <= self.bounds[:, 0]):
            raise ValueError("degenerate contamination rectangle")


@dataclass
class ScenarioSpec:
    components: list[ComponentSpec]
    contamination: list[ContaminationSpec] = field(default_factory=list)
    seed: int | None = None

    @property
    def n(self) -> int:
        return sum(c.count for c in self.components) + sum(
            c.count for c in self.contamination
        )

    def to_model(self, c: float = np.inf) -> ClusterModel:
        counts = np.array([comp.count for comp in self.components], dtype=float)
        return ClusterModel(
            counts / counts.sum(),
            np.vstack([comp.mean for comp in self.components]),
            np.stack([comp.cov for comp in self.components]),
            c,
        )


def gen_scenario(
    spec: ScenarioSpec, rng: RngStream | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Generate (data, true_labels); contamination carries label 0.

    Rows come grouped component by component, contamination last, so the
    label vector is reproducible from the spec alone.
    """
    if rng is None:
        rng = RngStream(spec.seed if spec.seed is not None else 0)
    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    p = spec.components[0].mean.shape[0]
    for i, comp in enumerate(spec.components):
        blocks.append(sample_mvnormal(comp.mean, comp.cov, comp.count, rng.child(1, i)))
        labels.append(np.full(comp.count, i + 1, dtype=int))
    for i, cont in enumerate(spec.contamination):
        blocks.append(_gen_contamination(spec, cont, p, rng.child(2, i)))
        labels.append(np.zeros(cont.count, dtype=int))
    return np.vstack(blocks), np.concatenate(labels)


def _gen_contamination(
    spec: ScenarioSpec, cont: ContaminationSpec, p: int, rng: RngStream
) -> np.ndarray:
    gen = rng.generator()
    lo, hi = cont.bounds[:, 0], cont.bounds[:, 1]
    if cont.exclusion_percentile is None:
        return gen.uniform(lo, hi, size=(cont.count, p))
    threshold = chi2_quantile(cont.exclusion_percentile, p)
    precisions = [np.linalg.inv(comp.cov) for comp in spec.components]
    out = np.empty((cont.count, p))
    got = 0
    attempts = 0
    while got < cont.count:
        take = max(4 * (cont.count - got), 64)
        attempts += take
        if attempts > MAX_REJECTION_ATTEMPTS:
            raise RuntimeError(
                "contamination rejection sampling exhausted; the box leaves "
                "no room outside the components"
            )
        x = gen.uniform(lo, hi, size=(take, p))
        d2 = np.full(take, np.inf)
        for comp, prec in zip(spec.components, precisions):
            diff = x - comp.mean
            d2 = np.minimum(d2, np.einsum("ij,jk,ik->i", diff, prec, diff))
        keep = x[d2 >= threshold]
        use = min(keep.shape[0], cont.count - got)
        out[got : got + use] = keep[:use]
        got += use
    return out


def fig1_scenario(scale: int = 1, seed: int | None = None) -> ScenarioSpec:
    """Four well-separated bivariate components (counts 240/230/200/230)
    plus 20 uniform points on [10,15]x[35,40] and 80 on [30,60]x[25,45];
    ``scale=2`` halves every count for a desk-size variant."""
    counts = [240, 230, 200, 230, 20, 80]
    counts = [c // scale for c in counts]
    components = [
        ComponentSpec([3.0, 23.0], [[5.0, 1.5], [1.5, 3.0]], counts[0]),
        ComponentSpec([23.0, 3.0], [[3.0, -1.0], [-1.0, 5.0]], counts[1]),
        ComponentSpec([14.0, 14.0], [[4.0, 1.0], [1.0, 4.0]], counts[2]),
        ComponentSpec([30.0, 30.0], [[6.0, -2.0], [-2.0, 4.0]], counts[3]),
    ]
    contamination = [
        ContaminationSpec([[10.0, 15.0], [35.0, 40.0]], counts[4]),
        ContaminationSpec([[30.0, 60.0], [25.0, 45.0]], counts[5]),
    ]
    return ScenarioSpec(components, contamination, seed=seed)


SCENARIOS = {
    "fig1": lambda seed=None: fig1_scenario(1, seed),
    "fig1-small": lambda seed=None: fig1_scenario(2, seed),
}


def pairwise_overlap(
    model: ClusterModel,
    mc_draws: int = 100_000,
    rng: RngStream | None = None,
) -> np.ndarray:
    """Symmetric matrix of misclassification overlaps w_jl = w_{j|l} + w_{l|j}
    with w_{j|l} = P[pi_l phi_l(X) < pi_j phi_j(X)] for X from component l."""
    if model.k < 2:
        raise ValueError("need at least two components")
    rng = rng if rng is not None else RngStream(0)
    w_cond = np.zeros((model.k, model.k))
    for l in range(model.k):
        x = sample_mvnormal(model.means[l], model.covs[l], mc_draws, rng.child(l))
        logw = weighted_log_densities(x, model)
        for j in range(model.k):
            if j == l:
                continue
            w_cond[j, l] = float(np.count_nonzero(logw[l] < logw[j])) / mc_draws
    return w_cond + w_cond.T


def _mean_overlap(model: ClusterModel, z_blocks: list[np.ndarray]) -> float:
    """Average pairwise overlap with frozen standard-normal draws (common
    random numbers keep the bisection monotone)."""
    k = model.k
    total = 0.0
    for l in range(k):
        values, vectors = sym_eigen(model.covs[l])
        root = vectors * np.sqrt(np.clip(values, 0.0, None))
        x = model.means[l] + z_blocks[l] @ root.T
        logw = weighted_log_densities(x, model)
        for j in range(k):
            if j != l:
                total += float(np.count_nonzero(logw[l] < logw[j])) / z_blocks[l].shape[0]
    # total sums w_{j|l} over ordered pairs, i.e. sum of w_jl over unordered ones
    return total / (k * (k - 1) / 2)


def _model_at_scale(
    s: float, dirs: np.ndarray, covs: np.ndarray, weights: np.ndarray, c: float
) -> ClusterModel:
    return ClusterModel(weights, s * dirs, covs, c)


def gen_overlap_target(
    k: int,
    p: int,
    c: float,
    target_avg_overlap: float,
    counts,
    rng: RngStream | None = None,
    mc_draws: int = 20_000,
    max_iter: int = 60,
) -> tuple[ScenarioSpec, float]:
    """Random mixture whose average pairwise overlap hits a target.

    Means sit on a sphere of radius s in random directions, covariances get
    random orientations with eigenvalues log-uniform on [1, c] (so the
    global ratio bound holds by construction), and s is bisected until the
    Monte Carlo average overlap lands within 10% relative of the target
    (within 0.005 absolute for target 0).
    """
    if not 0.0 <= target_avg_overlap < 0.5:
        raise ValueError("target average overlap must lie in [0, 0.5)")
    if c < 1:
        raise ValueError("c must be >= 1")
    counts = [int(x) for x in counts]
    if len(counts) != k or any(x <= 0 for x in counts):
        raise ValueError("need k positive component counts")
    rng = rng if rng is not None else RngStream(0)
    gen = rng.generator()

    dirs = _well_spread_directions(k, p, gen)
    covs = np.empty((k, p, p))
    for j in range(k):
        eigs = np.exp(gen.uniform(0.0, math.log(c) if c > 1 else 0.0, size=p))
        q, _ = np.linalg.qr(gen.standard_normal((p, p)))
        covs[j] = q @ np.diag(eigs) @ q.T
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    weights = np.asarray(counts, dtype=float)
    weights = weights / weights.sum()
    z_blocks = [gen.standard_normal((mc_draws, p)) for _ in range(k)]

    def overlap_at(s: float) -> float:
        return _mean_overlap(_model_at_scale(s, dirs, covs, weights, c), z_blocks)

    tol_abs = 0.005
    s_lo, s_hi = 0.0, 4.0
    w_hi = overlap_at(s_hi)
    expansions = 0
    while w_hi > max(target_avg_overlap, tol_abs if target_avg_overlap == 0 else -1):
        s_lo, s_hi = s_hi, 2.0 * s_hi
        w_hi = overlap_at(s_hi)
        expansions += 1
        if expansions > max_iter:
            raise RuntimeError("could not bracket the target overlap")

    if target_avg_overlap == 0.0:
        s, achieved = s_hi, w_hi
    else:
        s, achieved = s_hi, w_hi
        for _ in range(max_iter):
            if abs(achieved - target_avg_overlap) <= 0.1 * target_avg_overlap:
                break
            mid = 0.5 * (s_lo + s_hi)
            w_mid = overlap_at(mid)
            if w_mid > target_avg_overlap:
                s_lo = mid
            else:
                s_hi = mid
            s, achieved = mid, w_mid
        else:
            raise RuntimeError(
                "bisection did not reach the target overlap within "
                f"{max_iter} iterations (achieved {achieved:.4f})"
            )

    components = [
        ComponentSpec(s * dirs[j], covs[j], counts[j]) for j in range(k)
    ]
    return ScenarioSpec(components), achieved


def _well_spread_directions(k: int, p: int, gen: np.random.Generator) -> np.ndarray:
    """Unit directions with pairwise chord distance at least 0.3, so growing
    the sphere radius always separates every pair."""
    for _ in range(1000):
        d = gen.standard_normal((k, p))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        dist = np.linalg.norm(d[:, None, :] - d[None, :, :], axis=2)
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= 0.3:
            return d
    raise RuntimeError(f"could not place {k} well-spread directions in R^{p}")


def add_range_contamination(
    spec: ScenarioSpec, data: np.ndarray, count: int
) -> ScenarioSpec:
    """Append uniform contamination over the bounding box of clean data."""
    bounds = np.stack([data.min(axis=0), data.max(axis=0)], axis=1)
    return ScenarioSpec(
        spec.components,
        spec.contamination + [ContaminationSpec(bounds, count)],
        seed=spec.seed,
    )
