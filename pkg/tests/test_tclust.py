import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimclust.metrics import adjusted_rand_index
from trimclust.rng import RngStream
from trimclust.statmath import log_gaussian_density, sample_mvnormal
from trimclust.tclust import (
    ClusterModel,
    FitConfig,
    InfeasibleError,
    TrimmedPartition,
    add_empty_cluster,
    concentration_step,
    constrain_eigenvalues,
    fit_tclust,
    objective,
    trim_count,
    weighted_log_densities,
)


def brute_force_objective(x, model, labels):
    total = 0.0
    for i, lab in enumerate(labels):
        if lab == 0:
            continue
        j = lab - 1
        total += math.log(model.weights[j]) + log_gaussian_density(
            x[i], model.means[j], model.covs[j]
        )
    return total


def random_model(k, p, c, rng):
    gen = rng.generator()
    means = gen.uniform(-5, 5, size=(k, p))
    covs = np.empty((k, p, p))
    for j in range(k):
        a = gen.standard_normal((p, p))
        covs[j] = a @ a.T + 0.3 * np.eye(p)
    eigs = np.linalg.eigvalsh(covs)
    trunc = constrain_eigenvalues(np.sort(eigs, axis=1)[:, ::-1], np.ones(k), c)
    covs_fixed = np.empty_like(covs)
    for j in range(k):
        _, vecs = np.linalg.eigh(covs[j])
        covs_fixed[j] = vecs @ np.diag(trunc[j][::-1]) @ vecs.T
    w = gen.uniform(0.2, 1.0, size=k)
    return ClusterModel(w / w.sum(), means, covs_fixed, c)


class TestObjective:
    def test_k1_alpha0_is_gaussian_mle_loglik(self):
        x = RngStream(0).generator().standard_normal((40, 3)) * 2.0
        n, p = x.shape
        mu = x.mean(axis=0)
        cov = (x - mu).T @ (x - mu) / n
        model = ClusterModel([1.0], mu[None], cov[None], 1e9)
        part = TrimmedPartition(np.ones(n, dtype=int), 0.0)
        want = n * (
            -p / 2 * math.log(2 * math.pi)
            - 0.5 * np.linalg.slogdet(cov)[1]
            - p / 2
        )
        assert objective(x, model, part) == pytest.approx(want, abs=1e-8)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_matches_brute_force_resummation(self, seed):
        rng = RngStream(seed)
        gen = rng.generator()
        k, p = int(gen.integers(1, 4)), int(gen.integers(1, 3))
        n = int(gen.integers(k + 2, 25))
        x = gen.standard_normal((n, p)) * 3
        model = random_model(k, p, 100.0, rng.child(1))
        labels = gen.integers(0, k + 1, size=n)
        part = TrimmedPartition(labels, float(np.count_nonzero(labels == 0)) / n)
        want = brute_force_objective(x, model, labels)
        assert objective(x, model, part) == pytest.approx(want, abs=1e-12 * max(1, abs(want)))

    def test_weight_zero_cluster_with_points_rejected(self):
        x = np.zeros((4, 1))
        model = ClusterModel([0.0, 1.0], [[0.0], [1.0]], [[[1.0]], [[1.0]]], 10.0)
        part = TrimmedPartition([1, 2, 2, 2], 0.0)
        with pytest.raises(ValueError):
            objective(x, model, part)


class TestConstrainEigenvalues:
    def test_inactive_constraint_identity(self):
        lam = np.array([[4.0, 2.0], [3.0, 1.5]])
        out = constrain_eigenvalues(lam, [5, 5], 10.0)
        assert np.array_equal(out, lam)

    def test_c1_equal_sizes_weighted_mean(self):
        out = constrain_eigenvalues([[4.0], [1.0]], [5, 5], 1.0)
        assert out == pytest.approx(np.array([[2.5], [2.5]]))

    def test_c1_unequal_sizes_weighted_mean(self):
        out = constrain_eigenvalues([[4.0], [1.0]], [30, 10], 1.0)
        assert out == pytest.approx(np.full((2, 1), (30 * 4 + 10 * 1) / 40))

    def test_zero_eigenvalues_raised(self):
        out = constrain_eigenvalues([[2.0, 0.0]], [8], 4.0)
        assert out[0, 1] > 0
        assert out.max() / out.min() <= 4.0 * (1 + 1e-12)

    def test_all_zero_degenerate(self):
        from trimclust.tclust import DegenerateDataError

        with pytest.raises(DegenerateDataError):
            constrain_eigenvalues([[0.0, 0.0]], [5], 3.0)

    @staticmethod
    def grid_oracle(lam, sizes, c, n_grid=1_000_000):
        lam = np.asarray(lam, dtype=float)
        w = np.repeat(np.asarray(sizes, dtype=float), lam.shape[1])
        flat = lam.ravel()
        pos = flat[flat > 0]
        ts = np.linspace(pos.min() / c, flat.max(), n_grid)
        best_cost, best_t = np.inf, None
        for chunk in np.array_split(ts, 20):
            m = np.clip(flat[None, :], chunk[:, None], c * chunk[:, None])
            cost = (w * (np.log(m) + flat / m)).sum(axis=1)
            i = int(np.argmin(cost))
            if cost[i] < best_cost:
                best_cost, best_t = float(cost[i]), float(chunk[i])
        return best_t, best_cost

    def test_c2_single_cluster_against_grid_oracle(self):
        lam = [[9.0, 1.0]]
        sizes = [10]
        got = constrain_eigenvalues(lam, sizes, 2.0)
        w = np.repeat(np.asarray(sizes, float), 2)
        got_cost = float(np.sum(w * (np.log(got.ravel()) + np.ravel(lam) / got.ravel())))
        _, oracle_cost = self.grid_oracle(lam, sizes, 2.0)
        assert got_cost <= oracle_cost + 1e-12
        assert got_cost == pytest.approx(oracle_cost, rel=1e-6)

    def test_random_inputs_against_grid_oracle(self):
        gen = RngStream(314).generator()
        for _ in range(100):
            k = int(gen.integers(1, 5))
            p = int(gen.integers(1, 4))
            lam = gen.uniform(0.0, 10.0, size=(k, p))
            if np.all(lam <= 0):
                lam[0, 0] = 1.0
            sizes = gen.integers(1, 40, size=k)
            c = float(gen.uniform(1.0, 30.0))
            got = constrain_eigenvalues(lam, sizes, c)
            assert got.max() / got.min() <= c * (1 + 1e-9)
            w = np.repeat(sizes.astype(float), p)
            got_cost = float(
                np.sum(w * (np.log(got.ravel()) + lam.ravel() / got.ravel()))
            )
            _, oracle_cost = self.grid_oracle(lam, sizes, c, n_grid=200_000)
            assert got_cost <= oracle_cost + 1e-9 * abs(oracle_cost)
            assert got_cost == pytest.approx(oracle_cost, rel=1e-6)


class TestConcentrationStep:
    def test_well_separated_one_step_exact(self):
        x = np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]])
        model = ClusterModel(
            [0.5, 0.5], [[0.0], [10.0]], [[[1.0]], [[1.0]]], 50.0
        )
        part, new = concentration_step(x, model, 0.0)
        assert list(part.labels) == [1, 1, 1, 2, 2, 2]
        assert new.means[:, 0] == pytest.approx([0.1, 10.1], abs=1e-12)
        var = np.var([0.0, 0.1, 0.2])
        assert new.covs[:, 0, 0] == pytest.approx([var, var], abs=1e-12)

    def test_fixed_point_idempotent(self):
        x = sample_mvnormal([0, 0], np.eye(2), 60, RngStream(5))
        fit = fit_tclust(x, 2, 0.1, 20.0, FitConfig(n_starts=6, rng=RngStream(6)))
        part1, model1 = concentration_step(x, fit.model, 0.1)
        part2, model2 = concentration_step(x, model1, 0.1)
        assert np.array_equal(part1.labels, part2.labels)
        assert np.allclose(model1.means, model2.means, atol=1e-9)
        assert np.allclose(model1.covs, model2.covs, atol=1e-9)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_ascent_across_steps(self, seed):
        rng = RngStream(seed)
        gen = rng.generator()
        k = int(gen.integers(1, 4))
        n = int(gen.integers(20, 60))
        alpha = float(gen.choice([0.0, 0.1, 0.25]))
        x = np.vstack(
            [gen.standard_normal((n // 2, 2)), gen.standard_normal((n - n // 2, 2)) + 4]
        )
        model = random_model(k, 2, 12.0, rng.child(1))
        prev = None
        for _ in range(4):
            part, model = concentration_step(x, model, alpha)
            obj = objective(x, model, part)
            if prev is not None:
                assert obj >= prev - 1e-10 * max(1.0, abs(prev))
            prev = obj


class TestFitTclust:
    def test_k1_alpha0_recovers_mle(self):
        x = sample_mvnormal([3.0, -1.0], [[2.0, 0.5], [0.5, 1.0]], 80, RngStream(1))
        fit = fit_tclust(x, 1, 0.0, 1e6, FitConfig(n_starts=4, rng=RngStream(2)))
        assert np.allclose(fit.model.means[0], x.mean(axis=0), atol=1e-8)
        assert np.allclose(fit.model.covs[0], np.cov(x.T, bias=True), atol=1e-8)

    def test_five_point_trimming_enumeration(self):
        x = np.array([[-2.0], [-1.0], [0.0], [1.0], [10.0]])
        best = -np.inf
        best_leave = None
        for leave in range(5):
            keep = np.delete(x[:, 0], leave)
            mu, var = keep.mean(), keep.var()
            ll = sum(log_gaussian_density(v, [mu], [[var]]) for v in keep)
            if ll > best:
                best, best_leave = ll, leave
        assert best_leave == 4  # trimming the outlier 10 maximizes
        fit = fit_tclust(x, 1, 0.2, 1e6, FitConfig(n_starts=8, rng=RngStream(3)))
        assert fit.partition.labels[4] == 0
        assert fit.objective == pytest.approx(best, abs=1e-8)

    def test_two_blobs_exact_recovery(self):
        gen_rng = RngStream(9)
        a = sample_mvnormal([-10.0], [[1.0]], 30, gen_rng.child(0))
        b = sample_mvnormal([10.0], [[1.0]], 30, gen_rng.child(1))
        x = np.vstack([a, b])
        truth = np.array([1] * 30 + [2] * 30)
        fit = fit_tclust(x, 2, 0.0, 10.0, FitConfig(n_starts=8, rng=RngStream(10)))
        assert adjusted_rand_index(fit.partition.labels, truth) == 1.0

    def test_deterministic_given_stream(self):
        x = sample_mvnormal([0, 0], np.eye(2), 50, RngStream(20))
        cfg = FitConfig(n_starts=5, rng=RngStream(21))
        f1 = fit_tclust(x, 2, 0.1, 10.0, cfg)
        f2 = fit_tclust(x, 2, 0.1, 10.0, cfg)
        assert f1.objective == f2.objective
        assert np.array_equal(f1.partition.labels, f2.partition.labels)

    def test_objective_recomputable(self):
        x = sample_mvnormal([0, 0], np.eye(2), 70, RngStream(30))
        fit = fit_tclust(x, 3, 0.1, 20.0, FitConfig(n_starts=6, rng=RngStream(31)))
        assert fit.objective == pytest.approx(
            objective(x, fit.model, fit.partition), abs=1e-8
        )

    def test_infeasible_sizes(self):
        x = np.zeros((7, 2)) + RngStream(0).generator().standard_normal((7, 2))
        with pytest.raises(InfeasibleError):
            fit_tclust(x, 2, 0.5, 10.0)  # 7 - 3 = 4 < 2 * 3

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_trim_count_and_feasibility(self, seed):
        rng = RngStream(seed)
        gen = rng.generator()
        n = int(gen.integers(30, 80))
        alpha = float(gen.uniform(0.0, 0.3))
        k = int(gen.integers(1, 4))
        c = float(gen.uniform(1.0, 50.0))
        x = gen.standard_normal((n, 2)) * gen.uniform(0.5, 3)
        if n - trim_count(n, alpha) < k * 3:
            return
        fit = fit_tclust(x, k, alpha, c, FitConfig(n_starts=4, rng=rng.child(1)))
        assert fit.partition.n_trimmed == trim_count(n, alpha)
        eigs = np.linalg.eigvalsh(fit.model.covs)
        assert eigs.max() / eigs.min() <= c * (1 + 1e-8)
        assert fit.model.weights.sum() == pytest.approx(1.0, abs=1e-10)

    def test_monotone_in_k_with_warm_start(self):
        x = sample_mvnormal([0, 0], np.eye(2), 90, RngStream(40))
        prev = fit_tclust(x, 1, 0.1, 30.0, FitConfig(n_starts=4, rng=RngStream(41)))
        for k in (2, 3, 4):
            nxt = fit_tclust(
                x, k, 0.1, 30.0,
                FitConfig(n_starts=4, rng=RngStream(41).child(k)),
                warm_starts=(add_empty_cluster(prev.model),),
            )
            assert nxt.objective >= prev.objective - 1e-8
            prev = nxt

    def test_mcd_small_exhaustive(self):
        # k=1 trimming minimizes the trimmed covariance determinant
        gen = RngStream(77).generator()
        x = gen.uniform(-1, 1, size=(9, 2))
        x[0] = [8.0, 8.0]
        fit = fit_tclust(x, 1, 2 / 9, 1e9, FitConfig(n_starts=32, rng=RngStream(78)))
        kept = np.flatnonzero(fit.partition.labels == 1)
        best_det = np.inf
        for keep in itertools.combinations(range(9), 7):
            sub = x[list(keep)]
            det = np.linalg.det(np.cov(sub.T, bias=True))
            best_det = min(best_det, det)
        got_det = np.linalg.det(np.cov(x[kept].T, bias=True))
        assert got_det <= best_det * (1 + 1e-9)


def test_weighted_log_densities_dead_cluster_is_minus_inf():
    x = np.zeros((3, 1))
    model = ClusterModel([0.0, 1.0], [[0.0], [0.0]], [[[1.0]], [[1.0]]], 10.0)
    logw = weighted_log_densities(x, model)
    assert np.all(np.isneginf(logw[0]))
    assert np.all(np.isfinite(logw[1]))


def test_trim_count_floor_semantics():
    assert trim_count(10, 0.0) == 0
    assert trim_count(12, 0.25) == 3
    assert trim_count(1000, 0.075) == 75
    assert trim_count(100, 0.29) == 29
    assert trim_count(500, 0.175) == 87
