import numpy as np
import pytest

from grouphub.em import FitConfig
from grouphub.errors import EmptyTrueSet, InvalidParams, NonFiniteObjective
from grouphub.model import (
    GroupedData,
    HubModelParams,
    ModelVariant,
    fit_null_model,
    generate,
    log_likelihood,
)
from grouphub.select import (
    PenaltyConfig,
    SparseFit,
    _projected_gradient_norm,
    default_dof,
    find_extinction_lambda,
    information_criteria,
    lambda_path,
    modified_em,
    penalized_loglik,
    penalty_term,
    rho_subproblem_gradient,
    rho_subproblem_objective,
    solve_rho_subproblem,
    tpr_fpr,
)

from conftest import random_params


def small_null_scenario(seed=0, n_L=2, n=12, T=250, M=5):
    rng = np.random.default_rng(seed)
    A = np.zeros((n_L + 1, n))
    A[0] = 0.05
    followers = list(range(n_L + 1, n + 1))
    block = len(followers) // n_L
    for i in range(1, n_L + 1):
        A[i] = rng.uniform(0.0, 0.2, n)
        cols = [v - 1 for v in followers[(i - 1) * block : i * block]]
        A[i, cols] = rng.uniform(0.25, 0.4, len(cols))
        A[i, i - 1] = 1.0
    raw = rng.uniform(0.3, 1.0, n_L)
    rho = np.concatenate([[0.2], 0.8 * raw / raw.sum()])
    params = HubModelParams(ModelVariant.WITH_NULL, n, tuple(range(1, n_L + 1)), rho, A)
    data, labels = generate(params, T, seed + 1)
    return params, data, labels, tuple(range(1, M + 1))


class TestPenalizedLoglik:
    def test_lambda_zero_identity(self):
        rng = np.random.default_rng(1)
        params, data, _, _ = small_null_scenario(3)
        pen = PenaltyConfig(lam=0.0)
        assert penalized_loglik(params, data, pen) == pytest.approx(
            log_likelihood(params, data), abs=1e-12
        )

    def test_pure_null_has_zero_penalty(self):
        n = 6
        A = np.zeros((2, n))
        A[0] = 0.3
        A[1] = 0.2
        A[1, 0] = 1.0
        params = HubModelParams(
            ModelVariant.WITH_NULL, n, (1,), np.array([1.0, 0.0]), np.array(A)
        )
        data = GroupedData(np.array([[0, 1, 0, 0, 1, 0], [1, 0, 0, 0, 0, 0]]))
        pen = PenaltyConfig(lam=3.0)
        assert penalty_term(params.rho, data.T, pen) == 0.0
        assert penalized_loglik(params, data, pen) == pytest.approx(
            log_likelihood(params, data)
        )

    def test_matches_arbitrary_precision_recomputation(self):
        import mpmath

        mpmath.mp.dps = 60
        rng = np.random.default_rng(5)
        params, data, _, _ = small_null_scenario(7, n_L=2, n=8, T=40)
        pen = PenaltyConfig(lam=0.37, epsilon=1e-8)
        got = penalized_loglik(params, data, pen)

        G = np.asarray(data.G)
        total = mpmath.mpf(0)
        for t in range(data.T):
            mix = mpmath.mpf(0)
            for i in range(params.n_components):
                prod = mpmath.mpf(params.rho[i])
                for j in range(params.n):
                    a = mpmath.mpf(params.A[i, j])
                    prod *= a if G[t, j] else (1 - a)
                mix += prod
            total += mpmath.log(mix)
        eps = mpmath.mpf(pen.epsilon)
        for i in range(1, params.n_components):
            total -= data.T * mpmath.mpf(pen.lam) * (
                mpmath.log(eps + mpmath.mpf(params.rho[i])) - mpmath.log(eps)
            )
        assert got == pytest.approx(float(total), abs=1e-10)

    def test_penalty_ignores_null_weight(self):
        pen = PenaltyConfig(lam=0.5)
        rho_a = np.array([0.5, 0.3, 0.2])
        rho_b = np.array([0.1, 0.3, 0.2])  # same penalized entries
        assert penalty_term(rho_a, 100, pen) == penalty_term(rho_b, 100, pen)


class TestRhoSubproblem:
    def random_table(self, rng, T=30, K=4):
        table = rng.normal(-6, 2, size=(T, K))
        return table

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        pen = PenaltyConfig(lam=0.05)
        for _ in range(20):
            table = self.random_table(rng)
            rho = rng.dirichlet(np.ones(4))
            rho = np.clip(rho, 0.05, None)
            rho /= rho.sum()
            g = rho_subproblem_gradient(table, rho, pen)
            step = 1e-6
            fd = np.zeros(4)
            for i in range(4):
                e = np.zeros(4)
                e[i] = step
                fd[i] = (
                    rho_subproblem_objective(table, rho + e, pen)
                    - rho_subproblem_objective(table, rho - e, pen)
                ) / (2 * step)
            assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0) < 1e-5

    def test_huge_lambda_collapses_to_null(self):
        rng = np.random.default_rng(10)
        table = self.random_table(rng, K=2)
        pen = PenaltyConfig(lam=1e6)
        sol = solve_rho_subproblem(table, pen, np.array([0.5, 0.5]))
        assert sol == pytest.approx([1.0, 0.0])

    def test_matches_grid_search_oracle(self):
        # lambda = 0: concave in rho, so the local solve is global
        rng = np.random.default_rng(11)
        table = rng.normal(-5, 1.5, size=(20, 2))
        pen = PenaltyConfig(lam=0.0)
        sol = solve_rho_subproblem(table, pen, np.array([0.7, 0.3]))
        grid = np.linspace(0.0, 1.0, 10_001)
        vals = np.array(
            [rho_subproblem_objective(table, np.array([1 - x, x]), pen) for x in grid]
        )
        assert abs(rho_subproblem_objective(table, sol, pen) - vals.max()) < 1e-6

    def test_multistart_matches_grid_search_with_penalty(self):
        # the penalty makes the objective multimodal; a small multistart
        # (as the outer algorithm uses) reaches the global optimum
        rng = np.random.default_rng(11)
        table = rng.normal(-5, 1.5, size=(20, 2))
        pen = PenaltyConfig(lam=0.03)
        best = -np.inf
        for init in ([0.7, 0.3], [0.05, 0.95], [0.95, 0.05]):
            sol = solve_rho_subproblem(table, pen, np.array(init))
            best = max(best, rho_subproblem_objective(table, sol, pen))
        grid = np.linspace(0.0, 1.0, 10_001)
        vals = np.array(
            [rho_subproblem_objective(table, np.array([1 - x, x]), pen) for x in grid]
        )
        assert abs(best - vals.max()) < 1e-6

    def test_never_below_initial_objective(self):
        rng = np.random.default_rng(12)
        pen = PenaltyConfig(lam=0.1)
        for _ in range(30):
            table = self.random_table(rng, T=25, K=5)
            rho0 = rng.dirichlet(np.ones(5))
            sol = solve_rho_subproblem(table, pen, rho0)
            assert sol.min() >= 0.0
            assert sol.sum() == pytest.approx(1.0, abs=1e-12)
            assert rho_subproblem_objective(table, sol, pen) >= rho_subproblem_objective(
                table, rho0, pen
            )

    def test_stationarity_certificate(self):
        rng = np.random.default_rng(13)
        pen = PenaltyConfig(lam=0.02)
        table = self.random_table(rng, T=40, K=3)
        sol = solve_rho_subproblem(table, pen, np.array([0.4, 0.3, 0.3]))
        g = rho_subproblem_gradient(table, sol, pen)
        assert _projected_gradient_norm(g, sol) <= 1e-5

    def test_all_infeasible_group_raises(self):
        table = np.full((3, 2), -np.inf)
        with pytest.raises(NonFiniteObjective):
            rho_subproblem_objective(table, np.array([0.5, 0.5]), PenaltyConfig(lam=0.1))


class TestModifiedEm:
    def test_recovers_true_hubs(self):
        params, data, _, potential = small_null_scenario(21)
        fit = modified_em(data, potential, PenaltyConfig(lam=0.02), FitConfig(num_restarts=2, seed=4))
        assert set(fit.selected_set) == set(params.hub_set)

    def test_objective_trace_monotone(self):
        rng = np.random.default_rng(23)
        for trial in range(5):
            params, data, _, potential = small_null_scenario(30 + trial, T=100)
            fit = modified_em(
                data,
                potential,
                PenaltyConfig(lam=0.03),
                FitConfig(num_restarts=2, seed=trial, prob_floor=1e-12),
            )
            trace = np.array(fit.objective_trace)
            assert np.all(np.diff(trace) >= -1e-6)

    def test_exact_zeros_and_simplex(self):
        params, data, _, potential = small_null_scenario(25)
        fit = modified_em(data, potential, PenaltyConfig(lam=0.08), FitConfig(num_restarts=2, seed=1))
        assert fit.params.rho.sum() == pytest.approx(1.0, abs=1e-12)
        dead = [k for k in range(1, len(fit.params.rho)) if fit.params.rho[k] == 0.0]
        for k in dead:
            assert np.all(fit.params.A[k] == 0.0)
        assert fit.selected_set == tuple(
            potential[k - 1] for k in range(1, len(fit.params.rho)) if fit.params.rho[k] != 0.0
        )

    def test_extinction_gives_null_model(self):
        _, data, _, potential = small_null_scenario(27)
        fit = modified_em(data, potential, PenaltyConfig(lam=50.0), FitConfig(num_restarts=1, seed=2))
        assert fit.selected_set == ()
        _, null_ll = fit_null_model(data)
        assert fit.log_lik == pytest.approx(null_ll, abs=1e-8)

    def test_loglik_matches_params(self):
        _, data, _, potential = small_null_scenario(29)
        fit = modified_em(data, potential, PenaltyConfig(lam=0.03), FitConfig(num_restarts=1, seed=3))
        assert fit.log_lik == pytest.approx(log_likelihood(fit.params, data), abs=1e-8)

    def test_warm_start_freezes_dropped_components(self):
        params, data, _, potential = small_null_scenario(31)
        fit1 = modified_em(data, potential, PenaltyConfig(lam=0.08), FitConfig(num_restarts=1, seed=5))
        fit2 = modified_em(
            data, potential, PenaltyConfig(lam=0.1), FitConfig(num_restarts=1, seed=5),
            warm_start=fit1.params,
        )
        if fit2.restart_index == -1:
            dropped = set(potential) - set(fit1.selected_set)
            assert dropped.isdisjoint(fit2.selected_set)


class TestInformationCriteria:
    def make_fit(self, selected, log_lik, n, T):
        A = np.zeros((3, n))
        A[0] = 0.1
        rho = np.array([1.0, 0.0, 0.0])
        params = HubModelParams(ModelVariant.WITH_NULL, n, (1, 2), rho, A)
        return SparseFit(
            params=params,
            selected_set=selected,
            penalized_objective=log_lik,
            log_lik=log_lik,
            lam=0.1,
            iterations=1,
            converged=True,
            restart_index=0,
        )

    def test_empty_selection_formula(self):
        data = GroupedData(np.zeros((100, 3), dtype=np.int8))
        fit = self.make_fit((), -50.0, 3, 100)
        aic, bic = information_criteria(fit, data)
        assert default_dof(fit, data) == 3
        assert aic == pytest.approx(100.0 + 2 * 3)

    def test_single_hub_formula(self):
        data = GroupedData(np.zeros((100, 3), dtype=np.int8))
        fit = self.make_fit((1,), -50.0, 3, 100)
        aic, bic = information_criteria(fit, data)
        assert default_dof(fit, data) == 6
        assert bic == pytest.approx(100.0 + 6 * np.log(100))

    def test_nested_fits_ordered_by_size(self):
        data = GroupedData(np.zeros((50, 4), dtype=np.int8))
        crits = []
        for sel in [(), (1,), (1, 2)]:
            fit = self.make_fit(sel, -10.0, 4, 50)
            crits.append(information_criteria(fit, data))
        assert crits[0][0] < crits[1][0] < crits[2][0]
        assert crits[0][1] < crits[1][1] < crits[2][1]


class TestLambdaPath:
    def test_singleton_grid(self):
        _, data, _, potential = small_null_scenario(33)
        path = lambda_path(data, potential, [0.03], FitConfig(num_restarts=1, seed=1))
        assert len(path.entries) == 1
        assert path.chosen_by_aic == 0 and path.chosen_by_bic == 0

    def test_requires_increasing_grid(self):
        _, data, _, potential = small_null_scenario(35)
        with pytest.raises(InvalidParams):
            lambda_path(data, potential, [0.1, 0.05], FitConfig(num_restarts=1, seed=1))

    def test_path_recovers_truth_somewhere(self):
        params, data, _, potential = small_null_scenario(37)
        grid = [0.005, 0.02, 0.05, 0.2]
        path = lambda_path(data, potential, grid, FitConfig(num_restarts=2, seed=2))
        sets = [set(e.fit.selected_set) for e in path.entries]
        assert set(params.hub_set) in sets
        assert sets[-1] == set() or len(sets[-1]) <= len(sets[0])

    def test_extinction_finder(self):
        _, data, _, potential = small_null_scenario(39)
        lam = find_extinction_lambda(data, potential, FitConfig(num_restarts=1, seed=3), lam0=0.01)
        fit = modified_em(data, potential, PenaltyConfig(lam=lam), FitConfig(num_restarts=1, seed=3))
        assert fit.selected_set == ()


class TestTprFpr:
    def test_formula(self):
        assert tpr_fpr({1, 2}, {1, 3}, 5) == (0.5, pytest.approx(1 / 3))

    def test_perfect(self):
        assert tpr_fpr({1, 2}, {1, 2}, 6) == (1.0, 0.0)

    def test_empty_selection(self):
        assert tpr_fpr({1, 2}, set(), 6) == (0.0, 0.0)

    def test_empty_truth_raises(self):
        with pytest.raises(EmptyTrueSet):
            tpr_fpr(set(), {1}, 5)

    def test_bounds(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            M = int(rng.integers(2, 10))
            true = set(rng.choice(np.arange(1, M + 1), size=rng.integers(1, M), replace=False).tolist())
            sel = set(rng.choice(np.arange(1, M + 1), size=rng.integers(0, M), replace=False).tolist())
            tpr, fpr = tpr_fpr(true, sel, M)
            assert 0.0 <= tpr <= 1.0 and 0.0 <= fpr <= 1.0
            assert (tpr == 1.0) == (true <= sel)
