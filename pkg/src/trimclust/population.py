"""Population-level overlap functionals of the trimmed classification model.

The reference distribution is the normalized restriction of the weighted
component densities to their winner regions,

    f0(x) = eta * sum_j I[x in Z_j] pi_j phi(x; mu_j, Sigma_j),

where Z_j = {x : pi_j phi_j(x) >= pi_r phi_r(x) for all r} and eta >= 1 is
the normalizer.  eta acts as an overlap index (1 means fully separated
components); xi is its trimmed analogue on the untrimmed region B of mass
1 - alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .rng import RngStream
from .statmath import chi2_cdf, chi2_quantile, sample_mvnormal
from .tclust import ClusterModel, weighted_log_densities

MIN_XI_DRAWS = 10_000
DEFAULT_MC_DRAWS = 1_000_000
N_BATCHES = 10


@dataclass(frozen=True)
class OverlapEstimate:
    value: float
    se: float


@dataclass
class PopulationModel:
    """A cluster model read as the generator of f0, with its eta cached."""

    model: ClusterModel
    mc_draws: int = DEFAULT_MC_DRAWS
    _eta: OverlapEstimate | None = None

    def eta(self, rng: RngStream | None = None) -> OverlapEstimate:
        if self._eta is None:
            self._eta = eta(self.model, mc_draws=self.mc_draws, rng=rng)
        return self._eta


def _active(model: ClusterModel) -> np.ndarray:
    return np.flatnonzero(model.weights > 0)


def _crossings_1d(model: ClusterModel) -> np.ndarray:
    """All real roots of the pairwise weighted log-density differences.

    In one dimension each difference is a quadratic in x, so these roots are
    exactly the winner-region boundaries.
    """
    act = _active(model)
    pis = model.weights[act]
    mus = model.means[act, 0]
    vs = model.covs[act, 0, 0]
    roots: list[float] = []
    for a in range(len(act)):
        for b in range(a + 1, len(act)):
            qa = -0.5 / vs[a] + 0.5 / vs[b]
            qb = mus[a] / vs[a] - mus[b] / vs[b]
            qc = (
                math.log(pis[a])
                - 0.5 * math.log(vs[a])
                - mus[a] ** 2 / (2 * vs[a])
                - math.log(pis[b])
                + 0.5 * math.log(vs[b])
                + mus[b] ** 2 / (2 * vs[b])
            )
            if abs(qa) < 1e-14:
                if abs(qb) < 1e-14:
                    if abs(qc) < 1e-14:
                        raise ValueError(
                            "components are identical; winner regions undefined"
                        )
                    continue
                roots.append(-qc / qb)
            else:
                disc = qb * qb - 4 * qa * qc
                if disc > 0:
                    roots.append((-qb + math.sqrt(disc)) / (2 * qa))
                    roots.append((-qb - math.sqrt(disc)) / (2 * qa))
    return np.sort(np.asarray(roots, dtype=float))


def winner_region_masses(
    model: ClusterModel,
    mc_draws: int = DEFAULT_MC_DRAWS,
    rng: RngStream | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """p_j(Z_j) = probability component j gives to its own winner region.

    One-dimensional models are handled exactly: the winner is constant
    between consecutive crossing points, so each interval adds one Gaussian
    CDF difference.  In higher dimension the masses are Monte Carlo
    estimates from ``mc_draws`` draws per component; the second return value
    carries their standard errors (zero for the exact path).  Weight-zero
    components have mass zero by convention.
    """
    masses = np.zeros(model.k)
    ses = np.zeros(model.k)
    act = _active(model)
    if act.size == 0:
        raise ValueError("model has no active components")
    if act.size == 1:
        masses[act[0]] = 1.0
        return masses, ses
    if model.p == 1:
        pts = _crossings_1d(model)
        bounds = np.concatenate([[-np.inf], pts, [np.inf]])
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi - lo <= 0:
                continue
            if np.isinf(lo) and np.isinf(hi):
                rep = float(model.means[act[0], 0])
            elif np.isinf(lo):
                rep = hi - 1.0
            elif np.isinf(hi):
                rep = lo + 1.0
            else:
                rep = 0.5 * (lo + hi)
            logw = weighted_log_densities(np.array([[rep]]), model)[:, 0]
            w = int(np.argmax(logw))
            sd = math.sqrt(model.covs[w, 0, 0])
            masses[w] += norm.cdf(hi, model.means[w, 0], sd) - norm.cdf(
                lo, model.means[w, 0], sd
            )
        return masses, ses

    rng = rng if rng is not None else RngStream(0)
    chunk = 200_000
    for j in act:
        hits = 0
        done = 0
        batch = 0
        while done < mc_draws:
            take = min(chunk, mc_draws - done)
            x = sample_mvnormal(
                model.means[j], model.covs[j], take, rng.child(int(j), batch)
            )
            logw = weighted_log_densities(x, model)
            hits += int(np.count_nonzero(logw[j] >= logw.max(axis=0)))
            done += take
            batch += 1
        m = hits / mc_draws
        masses[j] = m
        ses[j] = math.sqrt(max(m * (1.0 - m), 0.0) / mc_draws)
    return masses, ses


def eta(
    model: ClusterModel,
    mc_draws: int = DEFAULT_MC_DRAWS,
    rng: RngStream | None = None,
) -> OverlapEstimate:
    """Overlap index 1 / sum_j pi_j p_j(Z_j); always >= 1."""
    masses, ses = winner_region_masses(model, mc_draws=mc_draws, rng=rng)
    denom = float(model.weights @ masses)
    value = 1.0 / denom
    se = float(np.sqrt(np.sum((model.weights * ses) ** 2))) * value * value
    return OverlapEstimate(value, se)


def sample_reference(
    model: ClusterModel, n: int, rng: RngStream
) -> np.ndarray:
    """Draw n points from f0 by rejection: draw a component j with
    probability pi_j, draw x from it, accept iff x lies in Z_j.  Accepted
    draws have density f0 and the acceptance rate is exactly 1 / eta."""
    act = _active(model)
    out = np.empty((n, model.p))
    got = 0
    batch = 0
    gen = rng.generator()
    while got < n:
        take = max(2 * (n - got), 1000)
        comps = act[gen.choice(act.size, size=take, p=model.weights[act])]
        x = np.empty((take, model.p))
        for j in act:
            rows = comps == j
            cnt = int(np.count_nonzero(rows))
            if cnt:
                x[rows] = sample_mvnormal(
                    model.means[j], model.covs[j], cnt, rng.child(batch, int(j))
                )
        logw = weighted_log_densities(x, model)
        accept = logw[comps, np.arange(take)] >= logw.max(axis=0)
        kept = x[accept]
        take_now = min(kept.shape[0], n - got)
        out[got : got + take_now] = kept[:take_now]
        got += take_now
        batch += 1
    return out


def _max_log_weighted(x: np.ndarray, model: ClusterModel) -> np.ndarray:
    return weighted_log_densities(x, model).max(axis=0)


def xi(
    model: ClusterModel,
    alpha: float,
    mc_draws: int = DEFAULT_MC_DRAWS,
    rng: RngStream | None = None,
) -> OverlapEstimate:
    """Trimmed overlap index 1 / sum_j pi_j p_j(Z_j intersect B).

    B is the upper-(1 - alpha) level set of max_j pi_j phi_j under f0; its
    threshold is estimated as the empirical alpha-quantile of that maximum
    over draws from f0.  Estimation runs in independent batches so the
    reported standard error includes the threshold noise.  alpha = 0 is the
    exact identity xi = eta and takes that code path.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if alpha == 0.0:
        return eta(model, mc_draws=mc_draws, rng=rng)
    if mc_draws < MIN_XI_DRAWS:
        raise ValueError(
            f"need at least {MIN_XI_DRAWS} draws for a stable quantile"
        )
    rng = rng if rng is not None else RngStream(0)
    act = _active(model)
    per_batch = max(mc_draws // N_BATCHES, 1)
    values = []
    for b in range(N_BATCHES):
        ref = sample_reference(model, per_batch, rng.child(b, 0))
        threshold = float(np.quantile(_max_log_weighted(ref, model), alpha))
        denom = 0.0
        for j in act:
            x = sample_mvnormal(
                model.means[j], model.covs[j], per_batch, rng.child(b, 1 + int(j))
            )
            logw = weighted_log_densities(x, model)
            inside = (logw[j] >= logw.max(axis=0)) & (logw.max(axis=0) >= threshold)
            denom += model.weights[j] * np.count_nonzero(inside) / per_batch
        values.append(1.0 / denom)
    value = math.fsum(values) / len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    return OverlapEstimate(value, se)


def mcd_consistency_factor(alpha: float, p: int) -> float:
    """nu_alpha = F_{chi2_{p+2}}(chi2_{p, alpha-upper-quantile}) / (1 - alpha).

    Rescales the optimal trimmed scatter to the true covariance; equals 1 at
    alpha = 0 and is strictly below 1 for any positive trimming.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if alpha == 0.0:
        return 1.0
    q = chi2_quantile(1.0 - alpha, p)
    return float(chi2_cdf(q, p + 2) / (1.0 - alpha))


@dataclass(frozen=True)
class Prop1Check:
    lhs: float
    rhs: float
    se: float
    holds: bool


def check_proposition1(
    model0: PopulationModel | ClusterModel,
    model: ClusterModel,
    mc_draws: int = 100_000,
    rng: RngStream | None = None,
) -> Prop1Check:
    """Monte Carlo check of the overlap penalty inequality.

    Under f0, the expected winner-region classification log-likelihood of
    the generating parameters exceeds that of any candidate (theta, pi) by
    at least log(eta(theta, pi) / eta(theta0, pi0)).  Both eta values share
    one random stream, so identical models give an exactly zero right side.
    """
    pop = model0 if isinstance(model0, PopulationModel) else PopulationModel(model0)
    gen_model = pop.model
    rng = rng if rng is not None else RngStream(0)
    x = sample_reference(gen_model, mc_draws, rng.child(0))
    d = _max_log_weighted(x, gen_model) - _max_log_weighted(x, model)
    lhs = float(math.fsum(d) / mc_draws)
    se_lhs = float(np.std(d, ddof=1) / math.sqrt(mc_draws))

    eta_draws = max(pop.mc_draws, mc_draws)
    eta0 = pop.eta(rng=rng.child(1)) if pop._eta is None else pop.eta()
    eta1 = eta(model, mc_draws=eta_draws, rng=rng.child(1))
    rhs = float(np.log(eta1.value) - np.log(eta0.value))
    se = math.sqrt(
        se_lhs**2 + (eta0.se / eta0.value) ** 2 + (eta1.se / eta1.value) ** 2
    )
    return Prop1Check(lhs=lhs, rhs=rhs, se=se, holds=bool(lhs >= rhs - 3.0 * se))
