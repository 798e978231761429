"""Parametric bootstrap p-values for k vs k+1 and the sequential sweep that
produces the short list of sensible (k, alpha) pairs.

For a cell (k, alpha) the observed statistic is t = L(alpha, k+1) -
L(alpha, k) on the data.  Replicate samples redraw the untrimmed rows from
the fitted k-component mixture while trimmed rows are either kept verbatim
or regenerated uniformly over the variable ranges far from every centroid;
the p-value is the fraction of replicates whose refitted statistic strictly
exceeds t.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .statmath import chi2_quantile
from .tclust import (
    ClusterModel,
    DegenerateDataError,
    FitConfig,
    FitResult,
    InfeasibleError,
    SingularCovarianceError,
    as_data_matrix,
    augment_with_worst_cluster,
    fit_tclust,
    replace_config,
    split_widest_cluster,
    warm_starts_for_next_k,
)

log = logging.getLogger(__name__)

OUTLIER_MODES = ("keep-original", "uniform-range")
MAX_ATTEMPTS_PER_POINT = 100_000


class CellError(RuntimeError):
    """A (k, alpha) cell could not be evaluated even after a retry."""


@dataclass
class BootstrapConfig:
    B: int = 100
    crit: float = 0.1
    outlier_mode: str = "keep-original"
    mahalanobis_percentile: float = 0.975
    rng: RngStream = field(default_factory=lambda: RngStream(0))
    fit: FitConfig = field(default_factory=FitConfig)
    threads: int = 1

    def __post_init__(self) -> None:
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0.0 < self.crit < 1.0:
            raise ValueError("crit must lie in (0, 1)")
        if self.outlier_mode not in OUTLIER_MODES:
            raise ValueError(f"outlier_mode must be one of {OUTLIER_MODES}")


@dataclass
class SensibleEntry:
    k: int
    alpha: float
    fit: FitResult
    pvalue: float


@dataclass
class SensibleSolutions:
    """Accepted (k, alpha) pairs in discovery order plus the p-value grid
    (NaN marks cells the sequential sweep never evaluated)."""

    entries: list[SensibleEntry]
    pvalue_grid: np.ndarray  # (k_max, n_alpha)
    k_values: list[int]
    alpha_values: list[float]


def generate_bootstrap_sample(
    data,
    fit: FitResult,
    mode: str = "keep-original",
    rng: RngStream | None = None,
    mahalanobis_percentile: float = 0.975,
) -> np.ndarray:
    """One bootstrap sample for the model behind ``fit``.

    Untrimmed row positions are filled with i.i.d. draws from the fitted
    mixture.  Trimmed positions keep the original rows verbatim in
    ``keep-original`` mode; in ``uniform-range`` mode they are redrawn
    uniformly over each variable's observed range, rejecting draws whose
    squared Mahalanobis distance to some centroid falls below the given
    chi-square percentile.
    """
    if mode not in OUTLIER_MODES:
        raise ValueError(f"mode must be one of {OUTLIER_MODES}")
    x = as_data_matrix(data)
    n, p = x.shape
    labels = fit.partition.labels
    if labels.shape[0] != n:
        raise ValueError("fit partition does not match the data")
    rng = rng if rng is not None else RngStream(0)
    gen = rng.generator()
    model = fit.model
    active = np.flatnonzero(model.weights > 0)
    w = model.weights[active] / model.weights[active].sum()

    out = np.empty_like(x)
    fresh = labels != 0
    n_fresh = int(np.count_nonzero(fresh))
    comps = active[gen.choice(active.size, size=n_fresh, p=w)]
    draws = np.empty((n_fresh, p))
    for j in active:
        rows = comps == j
        cnt = int(np.count_nonzero(rows))
        if cnt == 0:
            continue
        values, vectors = np.linalg.eigh(model.covs[j])
        root = vectors * np.sqrt(np.clip(values, 0.0, None))
        draws[rows] = model.means[j] + gen.standard_normal((cnt, p)) @ root.T
    out[fresh] = draws

    trimmed = ~fresh
    if np.any(trimmed):
        if mode == "keep-original":
            out[trimmed] = x[trimmed]
        else:
            out[trimmed] = _uniform_range_outliers(
                x, model, int(np.count_nonzero(trimmed)), gen, mahalanobis_percentile
            )
    return out


def _uniform_range_outliers(
    x: np.ndarray,
    model: ClusterModel,
    count: int,
    gen: np.random.Generator,
    percentile: float,
) -> np.ndarray:
    p = x.shape[1]
    lo, hi = x.min(axis=0), x.max(axis=0)
    threshold = chi2_quantile(percentile, p)
    active = np.flatnonzero(model.weights > 0)
    precisions = [np.linalg.inv(model.covs[j]) for j in active]
    means = [model.means[j] for j in active]
    out = np.empty((count, p))
    got = 0
    attempts = 0
    while got < count:
        take = max(4 * (count - got), 64)
        attempts += take
        if attempts > MAX_ATTEMPTS_PER_POINT * count:
            raise RuntimeError(
                "uniform-range outlier rejection exhausted: the variable "
                "ranges leave no room outside the fitted components"
            )
        cand = gen.uniform(lo, hi, size=(take, p))
        d2 = np.full(take, np.inf)
        for mu, prec in zip(means, precisions):
            diff = cand - mu
            d2 = np.minimum(d2, np.einsum("ij,jk,ik->i", diff, prec, diff))
        keep = cand[d2 >= threshold]
        use = min(keep.shape[0], count - got)
        out[got : got + use] = keep[:use]
        got += use
    return out


def _replicate_config(
    fit_cfg: FitConfig, rng: RngStream, full: bool = False
) -> FitConfig:
    # the replicate k-fit runs half the random starts (the generating model
    # is a near-optimal warm start for its own replicate); the k+1 refit
    # keeps the full budget so the replicate statistic chases improvements
    # as hard as the observed one did
    n = fit_cfg.n_starts if full else max(1, fit_cfg.n_starts // 2)
    return replace_config(fit_cfg, n_starts=n, rng=rng)


def _one_replicate_diff(
    x: np.ndarray,
    gen_fit: FitResult,
    k: int,
    alpha: float,
    c: float,
    boot_fit: FitConfig,
    mode: str,
    percentile: float,
    rep_rng: RngStream,
) -> float:
    sample = generate_bootstrap_sample(
        x, gen_fit, mode=mode, rng=rep_rng.child(0), mahalanobis_percentile=percentile
    )
    fit_k = fit_tclust(
        sample,
        k,
        alpha,
        c,
        _replicate_config(boot_fit, rep_rng.child(1)),
        warm_starts=(gen_fit.model,),
    )
    # the k+1 refit gets the same kind of warm starts the observed statistic
    # was computed with, so both sides chase improvements equally hard
    fit_k1 = fit_tclust(
        sample,
        k + 1,
        alpha,
        c,
        _replicate_config(boot_fit, rep_rng.child(2), full=True),
        warm_starts=warm_starts_for_next_k(fit_k.model)
        + (
            split_widest_cluster(gen_fit.model),
            augment_with_worst_cluster(sample, fit_k.model, alpha),
        ),
    )
    return fit_k1.objective - fit_k.objective


def _replicate_chunk(args) -> list[tuple[int, float | None, str]]:
    (x, gen_fit, k, alpha, c, boot_fit, mode, percentile, cell_rng, b_list) = args
    results = []
    for b in b_list:
        try:
            diff = _one_replicate_diff(
                x, gen_fit, k, alpha, c, boot_fit, mode, percentile, cell_rng.child(b)
            )
            results.append((b, diff, ""))
        except (InfeasibleError, DegenerateDataError, SingularCovarianceError,
                RuntimeError, np.linalg.LinAlgError) as exc:
            # one retry with a fresh stream, then give the cell up
            try:
                diff = _one_replicate_diff(
                    x, gen_fit, k, alpha, c, boot_fit, mode, percentile,
                    cell_rng.child(b, 777),
                )
                results.append((b, diff, ""))
            except Exception as exc2:  # noqa: BLE001 - reported to the caller
                results.append((b, None, f"{exc!s}; retry: {exc2!s}"))
    return results


def _replicate_diffs(
    x: np.ndarray,
    gen_fit: FitResult,
    k: int,
    alpha: float,
    c: float,
    boot: BootstrapConfig,
    cell_rng: RngStream,
    executor: concurrent.futures.Executor | None = None,
) -> np.ndarray:
    payload_common = (
        x, gen_fit, k, alpha, c, boot.fit, boot.outlier_mode,
        boot.mahalanobis_percentile, cell_rng,
    )
    b_all = list(range(boot.B))
    if executor is None or boot.threads <= 1:
        chunks = [_replicate_chunk(payload_common + (b_all,))]
    else:
        n_chunks = min(boot.threads, boot.B)
        parts = [b_all[i::n_chunks] for i in range(n_chunks)]
        chunks = list(
            executor.map(_replicate_chunk, [payload_common + (part,) for part in parts])
        )
    diffs = np.full(boot.B, np.nan)
    for chunk in chunks:
        for b, diff, err in chunk:
            if diff is None:
                raise CellError(f"replicate {b} of cell (k={k}, alpha={alpha}): {err}")
            diffs[b] = diff
    return diffs


def bootstrap_pvalue(
    data, k: int, alpha: float, c: float, boot: BootstrapConfig
) -> tuple[float, float]:
    """p-value for improving k to k+1 at trimming level alpha.

    Fits (k, alpha) and (k+1, alpha) on the data for the observed statistic
    and the generating model, then counts strict exceedances over B
    replicate refits.
    """
    x = as_data_matrix(data)
    # chain the original-data fits up from k=1 so t_obs does not pick up
    # local-optimum noise; cells inside select_sensible share one such chain
    fit_j = None
    for j in range(1, k + 2):
        warm: tuple[ClusterModel, ...] = ()
        if fit_j is not None:
            warm = warm_starts_for_next_k(fit_j.model) + (
                augment_with_worst_cluster(x, fit_j.model, alpha),
            )
        fit = fit_tclust(
            x, j, alpha, c,
            replace_config(boot.fit, rng=boot.fit.rng.child(j)),
            warm_starts=warm,
        )
        if j == k:
            fit_k = fit
        fit_j = fit
    fit_k1 = fit_j
    t_obs = fit_k1.objective - fit_k.objective
    with _pool(boot) as executor:
        diffs = _replicate_diffs(x, fit_k, k, alpha, c, boot, boot.rng, executor)
    p = float(np.count_nonzero(diffs > t_obs)) / boot.B
    return p, float(t_obs)


class _pool:
    def __init__(self, boot: BootstrapConfig):
        self.threads = boot.threads
        self.executor: concurrent.futures.Executor | None = None

    def __enter__(self):
        if self.threads > 1:
            self.executor = concurrent.futures.ProcessPoolExecutor(
                max_workers=self.threads
            )
        return self.executor

    def __exit__(self, *exc):
        if self.executor is not None:
            self.executor.shutdown()
        return False


class _FitCache:
    """Warm-started fits of the original data, shared across cells."""

    def __init__(self, x: np.ndarray, c: float, fit_cfg: FitConfig):
        self.x = x
        self.c = c
        self.cfg = fit_cfg
        self.fits: dict[tuple[int, int], FitResult] = {}

    def get(self, k: int, a_idx: int, alpha: float) -> FitResult:
        key = (k, a_idx)
        if key not in self.fits:
            warm: list[ClusterModel] = []
            below = self.fits.get((k - 1, a_idx))
            if below is not None:
                warm.extend(warm_starts_for_next_k(below.model))
                warm.append(augment_with_worst_cluster(self.x, below.model, alpha))
            left = self.fits.get((k, a_idx - 1))
            if left is not None:
                warm.append(left.model)
            cfg = replace_config(self.cfg, rng=self.cfg.rng.child(90, a_idx, k))
            self.fits[key] = fit_tclust(
                self.x, k, alpha, self.c, cfg, warm_starts=tuple(warm)
            )
        return self.fits[key]


def select_sensible(
    data,
    k_max: int,
    alpha_max: float,
    L: int,
    c: float,
    boot: BootstrapConfig,
) -> SensibleSolutions:
    """Sequential sweep over the alpha grid 0, alpha_max/L, ..., alpha_max.

    For each alpha, k rises from 1 while it stays below the best k accepted
    so far; the first k whose p-value exceeds ``crit`` is recorded as
    sensible and becomes the new ceiling.  Cells never visited stay NaN in
    the returned grid; a cell that fails to evaluate is logged and treated
    as rejected.
    """
    x = as_data_matrix(data)
    if k_max < 1 or L < 1 or not 0.0 <= alpha_max < 1.0:
        raise ValueError("need k_max >= 1, L >= 1 and alpha_max in [0, 1)")
    alphas = [alpha_max * i / L for i in range(L + 1)]
    grid = np.full((k_max, len(alphas)), np.nan)
    entries: list[SensibleEntry] = []
    cache = _FitCache(x, c, boot.fit)
    k_best = k_max + 1
    with _pool(boot) as executor:
        for a_idx, alpha in enumerate(alphas):
            k = 1
            while k < k_best:
                try:
                    fit_k = cache.get(k, a_idx, alpha)
                    fit_k1 = cache.get(k + 1, a_idx, alpha)
                    t_obs = fit_k1.objective - fit_k.objective
                    diffs = _replicate_diffs(
                        x, fit_k, k, alpha, c, boot, boot.rng.child(a_idx, k), executor
                    )
                    p = float(np.count_nonzero(diffs > t_obs)) / boot.B
                except (CellError, InfeasibleError, DegenerateDataError) as exc:
                    log.warning(
                        "cell (k=%d, alpha=%g) failed, treating as rejected: %s",
                        k, alpha, exc,
                    )
                    k += 1
                    continue
                grid[k - 1, a_idx] = p
                if p > boot.crit:
                    entries.append(SensibleEntry(k, alpha, fit_k, p))
                    k_best = k
                else:
                    k += 1
    return SensibleSolutions(entries, grid, list(range(1, k_max + 1)), alphas)


def pvalue_grid_to_csv(solutions: SensibleSolutions, path) -> None:
    """Table of p-values, one row per k, 'Na' for unevaluated cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"] + [f"{a:.10g}" for a in solutions.alpha_values])
        for k in solutions.k_values:
            row = [str(k)]
            for a_idx in range(len(solutions.alpha_values)):
                p = solutions.pvalue_grid[k - 1, a_idx]
                row.append("Na" if np.isnan(p) else f"{p:.4g}")
            writer.writerow(row)


def sensible_to_json_dict(solutions: SensibleSolutions) -> dict:
    out = {"solutions": [], "alpha_grid": solutions.alpha_values}
    for e in solutions.entries:
        out["solutions"].append(
            {
                "k": e.k,
                "alpha": e.alpha,
                "pvalue": e.pvalue,
                "weights": e.fit.model.weights.tolist(),
                "means": e.fit.model.means.tolist(),
                "covariances": e.fit.model.covs.tolist(),
                "trimmed_indices": np.flatnonzero(
                    e.fit.partition.labels == 0
                ).tolist(),
                "objective": e.fit.objective,
            }
        )
    return out


def sensible_to_json(solutions: SensibleSolutions, path) -> None:
    with open(path, "w") as fh:
        json.dump(sensible_to_json_dict(solutions), fh, indent=2)
        fh.write("\n")
