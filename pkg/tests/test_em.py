import numpy as np
import pytest

from grouphub.em import (
    FitConfig,
    PosteriorMatrix,
    e_step,
    fit_em,
    init_params,
    m_step,
    map_labels,
)
from grouphub.errors import AllRestartsFailed, InvalidParams
from grouphub.model import (
    GroupedData,
    HubModelParams,
    LabelAssignment,
    ModelVariant,
    complete_data_mle,
    component_log_density,
    enumerate_pmf,
    generate,
    log_likelihood,
)

from conftest import random_params


def group_index(row):
    return int(sum(v << j for j, v in enumerate(row)))


class TestInitParams:
    def test_deterministic(self):
        a = init_params((1, 3), ModelVariant.WITH_NULL, 6, 99)
        b = init_params((1, 3), ModelVariant.WITH_NULL, 6, 99)
        assert np.array_equal(a.rho, b.rho)
        assert np.array_equal(a.A, b.A)

    def test_hub_diagonals(self):
        for seed in range(10):
            p = init_params((2, 4), ModelVariant.ASYMMETRIC, 5, seed)
            assert p.A[0, 1] == 1.0
            assert p.A[1, 3] == 1.0

    def test_simplex_uniform_means(self):
        draws = np.array(
            [init_params((1, 2), ModelVariant.WITH_NULL, 4, s).rho for s in range(1000)]
        )
        assert np.max(np.abs(draws.mean(axis=0) - 1.0 / 3.0)) < 0.02


class TestEStep:
    def test_single_component(self):
        params = HubModelParams(
            ModelVariant.ASYMMETRIC, 3, (1,), np.array([1.0]), np.array([[1.0, 0.2, 0.7]])
        )
        data, _ = generate(params, 20, 0)
        post = e_step(params, data)
        assert np.all(post.h == 1.0)

    def test_lone_hub_present_forces_label(self):
        rng = np.random.default_rng(2)
        params = random_params(rng, n=6, n_L=3, variant=ModelVariant.ASYMMETRIC)
        data = GroupedData(np.array([[0, 0, 0, 0, 0, 0]]))
        G = np.zeros((1, 6), dtype=np.int8)
        G[0, params.hub_set[1] - 1] = 1
        post = e_step(params, GroupedData(G))
        assert post.h[0, 1] == pytest.approx(1.0)
        assert post.h[0, 0] == 0.0 and post.h[0, 2] == 0.0

    def test_matches_enumeration_bayes(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            params = random_params(rng, n=int(rng.integers(3, 8)))
            data, _ = generate(params, 30, rng.integers(1 << 30))
            post = e_step(params, data)
            comp_pmfs = []
            for label in params.component_labels:
                probs = np.zeros(2**params.n)
                for m in range(2**params.n):
                    g = [(m >> j) & 1 for j in range(params.n)]
                    ld = component_log_density(params, g, int(label))
                    probs[m] = np.exp(ld) if np.isfinite(ld) else 0.0
                comp_pmfs.append(probs)
            comp_pmfs = np.array(comp_pmfs)
            idx = [group_index(row) for row in np.asarray(data.G)]
            bayes = (params.rho[:, None] * comp_pmfs[:, idx]).T
            bayes /= bayes.sum(axis=1, keepdims=True)
            assert np.max(np.abs(post.h - bayes)) < 1e-12

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, n=7, variant=ModelVariant.WITH_NULL)
        data, _ = generate(params, 200, 3)
        post = e_step(params, data)
        assert np.max(np.abs(post.h.sum(axis=1) - 1.0)) < 1e-10


class TestMStep:
    def test_hard_labels_match_complete_mle(self):
        rng = np.random.default_rng(12)
        params = random_params(rng, n=6, n_L=2, variant=ModelVariant.ASYMMETRIC)
        data, labels = generate(params, 60, 7)
        K = params.n_components
        h = np.zeros((data.T, K))
        h[np.arange(data.T), labels.z - 1] = 1.0
        floor = 1e-12
        est = m_step(data, PosteriorMatrix(h, params.component_labels), params.variant, params.hub_set, floor)
        ref = complete_data_mle(data, labels, params.variant, params.hub_set)
        assert np.max(np.abs(est.rho - ref.rho)) < 1e-12
        clipped = np.clip(ref.A, floor, 1 - floor)
        for i, v in enumerate(params.hub_set):
            clipped[i, v - 1] = 1.0
        assert np.max(np.abs(est.A - clipped)) < 1e-12

    def test_constant_column_clamped(self):
        data = GroupedData(np.array([[1, 1], [1, 1], [1, 1]]))
        h = np.ones((3, 1))
        est = m_step(data, PosteriorMatrix(h, np.array([1])), ModelVariant.ASYMMETRIC, (1,), 1e-6)
        assert est.A[0, 1] == pytest.approx(1 - 1e-6)

    def test_dead_component_zero_row(self):
        data = GroupedData(np.array([[1, 0, 1], [1, 1, 0]]))
        h = np.zeros((2, 2))
        h[:, 0] = 1.0
        est = m_step(data, PosteriorMatrix(h, np.array([1, 2])), ModelVariant.ASYMMETRIC, (1, 2), 1e-9)
        assert est.rho[1] == 0.0
        assert np.all(est.A[1] == 0.0)


class TestFitEm:
    def test_monotone_loglik(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            params = random_params(rng, n=int(rng.integers(4, 10)))
            data, _ = generate(params, int(rng.integers(20, 50)), rng.integers(1 << 30))
            config = FitConfig(num_restarts=2, seed=int(rng.integers(1 << 30)), prob_floor=1e-12)
            res = fit_em(data, params.hub_set, params.variant, config)
            diffs = np.diff(np.array(res.loglik_trace))
            assert np.all(diffs >= -1e-9)

    def test_loglik_consistent_with_params(self):
        rng = np.random.default_rng(21)
        params = random_params(rng, n=6)
        data, _ = generate(params, 80, 9)
        res = fit_em(data, params.hub_set, params.variant, FitConfig(num_restarts=3, seed=1))
        assert res.log_lik == pytest.approx(log_likelihood(res.params, data), abs=1e-8)

    def test_restart_determinism(self):
        rng = np.random.default_rng(22)
        params = random_params(rng, n=6)
        data, _ = generate(params, 60, 10)
        config = FitConfig(num_restarts=4, seed=77)
        a = fit_em(data, params.hub_set, params.variant, config)
        b = fit_em(data, params.hub_set, params.variant, config)
        assert a.restart_index == b.restart_index
        assert a.log_lik == b.log_lik
        assert np.array_equal(a.params.A, b.params.A)

    def test_single_component_recovery(self):
        # one hub: memberships reduce to independent frequencies
        truth = HubModelParams(
            ModelVariant.ASYMMETRIC,
            5,
            (2,),
            np.array([1.0]),
            np.array([[0.3, 1.0, 0.6, 0.1, 0.8]]),
        )
        data, _ = generate(truth, 10_000, 3)
        res = fit_em(data, (2,), ModelVariant.ASYMMETRIC, FitConfig(num_restarts=2, seed=5))
        assert np.max(np.abs(res.params.A - truth.A)) < 0.02

    def test_all_restarts_failed(self):
        # no hub-set node ever appears: infeasible under the asymmetric model
        data = GroupedData(np.array([[0, 0, 1], [0, 0, 1]]))
        with pytest.raises(AllRestartsFailed):
            fit_em(data, (1,), ModelVariant.ASYMMETRIC, FitConfig(num_restarts=2, seed=1))

    def test_fixed_point_stationarity_in_rho(self):
        # at an EM fixed point the simplex-projected gradient in rho vanishes
        rng = np.random.default_rng(23)
        params = random_params(rng, n=6, n_L=2, variant=ModelVariant.ASYMMETRIC)
        data, _ = generate(params, 40, 17)
        res = fit_em(
            data, params.hub_set, params.variant,
            FitConfig(num_restarts=2, seed=2, rel_tol=1e-13, max_iter=5000),
        )
        rho = res.params.rho
        if np.any(rho <= 1e-9):
            pytest.skip("boundary fixed point; interior gradient check not applicable")

        def ll_of_rho(r):
            p = HubModelParams(params.variant, params.n, params.hub_set, r, res.params.A)
            return log_likelihood(p, data)

        # central differences along simplex tangent directions
        base = np.eye(len(rho))
        for i in range(len(rho) - 1):
            d = base[i] - base[-1]
            h = 1e-5
            g = (ll_of_rho(rho + h * d) - ll_of_rho(rho - h * d)) / (2 * h)
            assert abs(g) < 1e-4 * (1 + abs(res.log_lik))


class TestMapLabels:
    def test_argmax(self):
        post = PosteriorMatrix(np.array([[0.2, 0.8]]), np.array([1, 2]))
        assert map_labels(post).z[0] == 2

    def test_tie_break_to_smaller_label(self):
        post = PosteriorMatrix(np.array([[0.5, 0.5]]), np.array([1, 2]))
        assert map_labels(post).z[0] == 1

    def test_hard_posterior_recovers_truth(self):
        rng = np.random.default_rng(30)
        params = random_params(rng, n=6, variant=ModelVariant.WITH_NULL)
        data, labels = generate(params, 50, 8)
        K = params.n_components
        h = np.zeros((data.T, K))
        h[np.arange(data.T), labels.z] = 1.0
        post = PosteriorMatrix(h, params.component_labels)
        assert np.array_equal(map_labels(post).z, labels.z)


def test_fit_config_validation():
    with pytest.raises(InvalidParams):
        FitConfig(max_iter=0)
    with pytest.raises(InvalidParams):
        FitConfig(prob_floor=0.1)
    with pytest.raises(InvalidParams):
        FitConfig(rel_tol=1.5)
