"""Robust model-based clustering with impartial trimming.

Fits Gaussian clusters by maximizing a trimmed classification likelihood
under an eigenvalue-ratio constraint, monitors the (k, alpha) likelihood
curves, and selects a short list of sensible (number of clusters, trimming
level) pairs by parametric bootstrap.
"""

from .bootstrap import (
    BootstrapConfig,
    SensibleEntry,
    SensibleSolutions,
    bootstrap_pvalue,
    generate_bootstrap_sample,
    select_sensible,
)
from .ctlcurves import CtlCurves, compute_ctlcurves, tdiff
from .datagen import (
    ComponentSpec,
    ContaminationSpec,
    ScenarioSpec,
    fig1_scenario,
    gen_overlap_target,
    gen_scenario,
    pairwise_overlap,
)
from .metrics import adjusted_rand_index, correct_k_rate
from .population import (
    OverlapEstimate,
    PopulationModel,
    Prop1Check,
    check_proposition1,
    eta,
    mcd_consistency_factor,
    winner_region_masses,
    xi,
)
from .rng import RngStream
from .statmath import (
    chi2_cdf,
    chi2_quantile,
    log_gaussian_density,
    sample_mvnormal,
    sym_eigen,
)
from .tclust import (
    ClusterModel,
    DegenerateDataError,
    FitConfig,
    FitResult,
    InfeasibleError,
    TrimmedPartition,
    concentration_step,
    constrain_eigenvalues,
    fit_tclust,
    objective,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "ClusterModel",
    "ComponentSpec",
    "ContaminationSpec",
    "CtlCurves",
    "DegenerateDataError",
    "FitConfig",
    "FitResult",
    "InfeasibleError",
    "OverlapEstimate",
    "PopulationModel",
    "Prop1Check",
    "RngStream",
    "ScenarioSpec",
    "SensibleEntry",
    "SensibleSolutions",
    "TrimmedPartition",
    "adjusted_rand_index",
    "bootstrap_pvalue",
    "check_proposition1",
    "chi2_cdf",
    "chi2_quantile",
    "compute_ctlcurves",
    "concentration_step",
    "constrain_eigenvalues",
    "correct_k_rate",
    "eta",
    "fig1_scenario",
    "fit_tclust",
    "gen_overlap_target",
    "gen_scenario",
    "generate_bootstrap_sample",
    "log_gaussian_density",
    "mcd_consistency_factor",
    "objective",
    "pairwise_overlap",
    "sample_mvnormal",
    "select_sensible",
    "sym_eigen",
    "tdiff",
    "winner_region_masses",
    "xi",
]
