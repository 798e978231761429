"""Command-line front end.

Subcommands: fit, curves, select, simulate, overlap, eval.  Every run reads
plain CSV, owns one master seed, and writes machine-readable results into
the --out directory (formats documented in docs/formats.md).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, io, population
from .bootstrap import (
    BootstrapConfig,
    pvalue_grid_to_csv,
    select_sensible,
    sensible_to_json,
)
from .ctlcurves import compute_ctlcurves, curves_to_csv
from .metrics import adjusted_rand_index
from .rng import RngStream
from .tclust import ClusterModel, FitConfig, fit_tclust

THREADS_ENV = "TRIMCLUST_THREADS"


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    spec = {
        "input": (str, None, "input CSV (or JSON model file for 'overlap')"),
        "out": (str, ".", "output directory"),
        "k": (int, 1, "number of clusters"),
        "kmax": (int, 7, "largest number of clusters to consider"),
        "alpha": (float, 0.0, "trimming proportion"),
        "alpha-max": (float, 0.2, "largest trimming proportion on the grid"),
        "grid": (int, 8, "number of grid steps between 0 and --alpha-max"),
        "c": (float, 50.0, "eigenvalue-ratio bound"),
        "B": (int, 100, "bootstrap replicates per cell"),
        "crit": (float, 0.1, "p-value acceptance threshold"),
        "outlier-mode": (str, "keep-original",
                         "bootstrap outlier handling: keep-original | uniform-range"),
        "starts": (int, 32, "random starts per fit"),
        "seed": (int, 0, "master seed"),
        "threads": (int, None, f"worker processes (default: ${THREADS_ENV} or CPU count)"),
    }
    for name in names:
        typ, default, help_ = spec[name]
        required = name == "input"
        p.add_argument(f"--{name}", type=typ, default=default,
                       required=required, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trimclust",
        description="Robust trimmed model-based clustering and (k, alpha) selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="single trimmed clustering fit")
    _add_common(p, "input", "out", "k", "alpha", "c", "starts", "seed")

    p = sub.add_parser("curves", help="classification trimmed likelihood curves")
    _add_common(p, "input", "out", "kmax", "alpha-max", "grid", "c", "starts", "seed")

    p = sub.add_parser("select", help="bootstrap selection of sensible (k, alpha)")
    _add_common(p, "input", "out", "kmax", "alpha-max", "grid", "c", "B", "crit",
                "outlier-mode", "starts", "seed", "threads")

    p = sub.add_parser("simulate", help="generate a benchmark scenario")
    _add_common(p, "out", "seed")
    p.add_argument("--scenario", type=str, default="fig1",
                   help="scenario name (%s) or path to a scenario JSON"
                   % ", ".join(sorted(datagen.SCENARIOS)))

    p = sub.add_parser("overlap", help="population overlap indexes of a model file")
    _add_common(p, "input", "out", "alpha", "seed")
    p.add_argument("--draws", type=int, default=1_000_000,
                   help="Monte Carlo draws per component")

    p = sub.add_parser("eval", help="agreement between two labelings")
    _add_common(p, "input", "out")
    p.add_argument("--truth", type=str, required=True, help="true labels CSV")
    p.add_argument("--k-true", type=int, default=None,
                   help="true number of clusters, for the correct-k flag")
    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_fit(args) -> int:
    x, _ = io.load_data_csv(args.input)
    cfg = FitConfig(n_starts=args.starts, rng=RngStream(args.seed))
    fit = fit_tclust(x, args.k, args.alpha, args.c, cfg)
    out = _outdir(args)
    io.save_json(
        out / "fit.json",
        {
            "k": args.k,
            "alpha": args.alpha,
            "c": args.c,
            "objective": fit.objective,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "restarts_used": fit.restarts_used,
            "weights": fit.model.weights.tolist(),
            "means": fit.model.means.tolist(),
            "covariances": fit.model.covs.tolist(),
            "trimmed_indices": np.flatnonzero(fit.partition.labels == 0).tolist(),
        },
    )
    io.save_labels_csv(out / "labels.csv", fit.partition.labels)
    print(f"fit: objective={fit.objective:.6f} -> {out / 'fit.json'}")
    return 0


def _cmd_curves(args) -> int:
    x, _ = io.load_data_csv(args.input)
    alphas = [args.alpha_max * i / args.grid for i in range(args.grid + 1)]
    cfg = FitConfig(n_starts=args.starts, rng=RngStream(args.seed))
    curves = compute_ctlcurves(x, args.kmax, alphas, args.c, cfg)
    out = _outdir(args)
    curves_to_csv(curves, out / "curves.csv")
    print(f"curves: {len(curves.k_values)}x{len(alphas)} grid -> {out / 'curves.csv'}")
    return 0


def _cmd_select(args) -> int:
    x, _ = io.load_data_csv(args.input)
    threads = args.threads if args.threads is not None else _default_threads()
    boot = BootstrapConfig(
        B=args.B,
        crit=args.crit,
        outlier_mode=args.outlier_mode,
        rng=RngStream(args.seed).child(1),
        fit=FitConfig(n_starts=args.starts, rng=RngStream(args.seed).child(2)),
        threads=threads,
    )
    solutions = select_sensible(x, args.kmax, args.alpha_max, args.grid, args.c, boot)
    out = _outdir(args)
    pvalue_grid_to_csv(solutions, out / "pvalues.csv")
    sensible_to_json(solutions, out / "sensible.json")
    for e in solutions.entries:
        print(f"sensible: k={e.k} alpha={e.alpha:g} p={e.pvalue:.3f}")
    print(f"select: {len(solutions.entries)} solutions -> {out / 'sensible.json'}")
    return 0


def _cmd_simulate(args) -> int:
    if args.scenario in datagen.SCENARIOS:
        spec = datagen.SCENARIOS[args.scenario](seed=args.seed)
    else:
        spec = _load_scenario_json(args.scenario, args.seed)
    x, labels = datagen.gen_scenario(spec, RngStream(args.seed))
    out = _outdir(args)
    io.save_matrix_csv(out / "data.csv", x, names=[f"x{i+1}" for i in range(x.shape[1])])
    io.save_json(
        out / "spec.json",
        {
            "scenario": args.scenario,
            "seed": args.seed,
            "components": [
                {"mean": c.mean.tolist(), "cov": c.cov.tolist(), "count": c.count}
                for c in spec.components
            ],
            "contamination": [
                {
                    "bounds": c.bounds.tolist(),
                    "count": c.count,
                    "exclusion_percentile": c.exclusion_percentile,
                }
                for c in spec.contamination
            ],
            "true_labels": labels.tolist(),
        },
    )
    print(f"simulate: n={x.shape[0]} p={x.shape[1]} -> {out / 'data.csv'}")
    return 0


def _load_scenario_json(path: str, seed: int) -> datagen.ScenarioSpec:
    with open(path) as fh:
        raw = json.load(fh)
    components = [
        datagen.ComponentSpec(c["mean"], c["cov"], c["count"])
        for c in raw["components"]
    ]
    contamination = [
        datagen.ContaminationSpec(
            c["bounds"], c["count"], c.get("exclusion_percentile")
        )
        for c in raw.get("contamination", [])
    ]
    return datagen.ScenarioSpec(components, contamination, seed=seed)


def _cmd_overlap(args) -> int:
    with open(args.input) as fh:
        raw = json.load(fh)
    model = ClusterModel(
        np.asarray(raw["weights"], dtype=float),
        np.asarray(raw["means"], dtype=float),
        np.asarray(raw["covariances"], dtype=float),
        float(raw.get("c", np.inf)),
    )
    rng = RngStream(args.seed)
    eta_est = population.eta(model, mc_draws=args.draws, rng=rng.child(1))
    xi_est = population.xi(model, args.alpha, mc_draws=args.draws, rng=rng.child(2))
    nu = population.mcd_consistency_factor(args.alpha, model.p)
    out = _outdir(args)
    io.save_json(
        out / "overlap.json",
        {
            "alpha": args.alpha,
            "eta": eta_est.value,
            "eta_se": eta_est.se,
            "xi": xi_est.value,
            "xi_se": xi_est.se,
            "nu_alpha": nu,
            "draws": args.draws,
        },
    )
    print(
        f"overlap: eta={eta_est.value:.4f} xi={xi_est.value:.4f} nu={nu:.5f} "
        f"-> {out / 'overlap.json'}"
    )
    return 0


def _cmd_eval(args) -> int:
    pred = io.load_labels_csv(args.input)
    truth = io.load_labels_csv(args.truth)
    ari = adjusted_rand_index(pred, truth)
    k_pred = int(np.unique(pred[pred > 0]).size)
    payload = {"ari": ari, "k_pred": k_pred}
    if args.k_true is not None:
        payload["k_true"] = args.k_true
        payload["correct_k"] = bool(k_pred == args.k_true)
    out = _outdir(args)
    io.save_json(out / "eval.json", payload)
    print(f"eval: ari={ari:.4f} -> {out / 'eval.json'}")
    return 0


COMMANDS = {
    "fit": _cmd_fit,
    "curves": _cmd_curves,
    "select": _cmd_select,
    "simulate": _cmd_simulate,
    "overlap": _cmd_overlap,
    "eval": _cmd_eval,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
