"""Classification trimmed likelihood curves over a (k, alpha) grid."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .tclust import (
    DegenerateDataError,
    FitConfig,
    FitResult,
    InfeasibleError,
    as_data_matrix,
    augment_with_worst_cluster,
    fit_tclust,
    replace_config,
    warm_starts_for_next_k,
)

log = logging.getLogger(__name__)

# A first difference in k may only be negative by floating-point noise; the
# zero-weight warm start makes larger violations impossible.
TDIFF_TOL = 1e-8


@dataclass
class CtlCurves:
    """Grid of best objectives L(alpha, k) and the matching fits.

    ``objective[k-1, a]`` is the optimum for k clusters at alpha_values[a],
    NaN when that cell was infeasible.  For each alpha the column is
    non-decreasing in k (warm starts enforce the theoretical inequality).
    """

    k_values: list[int]
    alpha_values: list[float]
    objective: np.ndarray  # (k_max, n_alpha)
    fits: list[list[FitResult | None]]
    c: float

    def alpha_index(self, alpha: float) -> int:
        for i, a in enumerate(self.alpha_values):
            if abs(a - alpha) <= 1e-12:
                return i
        raise ValueError(f"alpha={alpha} is not on the grid {self.alpha_values}")


def compute_ctlcurves(
    data,
    k_max: int,
    alpha_grid,
    c: float,
    config: FitConfig | None = None,
) -> CtlCurves:
    """Fit every (k, alpha) cell of the grid.

    Cells are visited alpha-outer / k-inner.  Each fit is warm-started from
    the (k-1, alpha) solution (zero-weight embedding plus a split of its
    widest cluster) and from the (k, previous alpha) solution, which both
    speeds the grid up and guarantees monotonicity in k.  A failing cell is
    recorded as invalid instead of aborting the grid.
    """
    x = as_data_matrix(data)
    alphas = [float(a) for a in alpha_grid]
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if any(not 0.0 <= a < 1.0 for a in alphas):
        raise ValueError("alpha grid values must lie in [0, 1)")
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha grid must be strictly increasing")
    cfg = config if config is not None else FitConfig()

    objective = np.full((k_max, len(alphas)), np.nan)
    fits: list[list[FitResult | None]] = [
        [None] * len(alphas) for _ in range(k_max)
    ]
    for a_idx, alpha in enumerate(alphas):
        for k in range(1, k_max + 1):
            warm = []
            prev_k = fits[k - 2][a_idx] if k >= 2 else None
            if prev_k is not None:
                warm.extend(warm_starts_for_next_k(prev_k.model))
                warm.append(augment_with_worst_cluster(x, prev_k.model, alpha))
            prev_a = fits[k - 1][a_idx - 1] if a_idx >= 1 else None
            if prev_a is not None:
                warm.append(prev_a.model)
            cell_cfg = replace_config(cfg, rng=cfg.rng.child(a_idx, k))
            try:
                fit = fit_tclust(x, k, alpha, c, cell_cfg, warm_starts=tuple(warm))
            except (InfeasibleError, DegenerateDataError) as exc:
                log.warning("curves cell (k=%d, alpha=%g) invalid: %s", k, alpha, exc)
                continue
            fits[k - 1][a_idx] = fit
            objective[k - 1, a_idx] = fit.objective
    return CtlCurves(list(range(1, k_max + 1)), alphas, objective, fits, c)


def tdiff(curves: CtlCurves, k: int, alpha: float) -> float:
    """First difference t_{k,alpha} = L(alpha, k+1) - L(alpha, k)."""
    a_idx = curves.alpha_index(alpha)
    if k < 1 or k + 1 > len(curves.k_values):
        raise ValueError(f"need both k={k} and k+1 on the grid")
    lo = curves.objective[k - 1, a_idx]
    hi = curves.objective[k, a_idx]
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError(f"cells (k={k}, alpha={alpha}) and above must both be valid")
    return float(hi - lo)


def curves_to_csv(curves: CtlCurves, path) -> None:
    """Write the grid as rows (k, alpha, objective, tdiff) for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "alpha", "objective", "tdiff"])
        for a_idx, alpha in enumerate(curves.alpha_values):
            for k in curves.k_values:
                obj = curves.objective[k - 1, a_idx]
                if k < len(curves.k_values) and np.isfinite(obj) and np.isfinite(
                    curves.objective[k, a_idx]
                ):
                    diff = f"{curves.objective[k, a_idx] - obj:.10g}"
                else:
                    diff = ""
                writer.writerow(
                    [k, f"{alpha:.10g}", f"{obj:.10g}" if np.isfinite(obj) else "Na", diff]
                )
