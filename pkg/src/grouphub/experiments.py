"""Scenario builders and Monte Carlo harnesses for the benchmark tables.

The standard scenario partitions the followers into equal contiguous blocks,
one per hub-set entry; block members join that hub's groups with rates
U(0.2a, 0.4a) and everything else off-diagonal is U(0, 0.2a), where a is a
density scale.  Every harness is a pure function of (spec, seed): replicate
r uses RNG streams spawned from (seed, r), so results are reproducible and
independent of execution order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .em import FitConfig, fit_em, map_labels
from .errors import DimensionMismatch, InvalidSpec
from .model import (
    GroupedData,
    HubModelParams,
    ModelVariant,
    complete_data_mle,
    generate,
)
from .profile import mislabel_rate
from .select import lambda_path, tpr_fpr


@dataclass(frozen=True)
class ScenarioSpec:
    variant: ModelVariant
    n_L: int
    n: int
    T: int
    alpha: float = 1.0
    rho0: float = 0.2
    M: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_L < 1 or self.n_L >= self.n:
            raise InvalidSpec("need 1 <= n_L < n")
        if self.T < 1:
            raise InvalidSpec("T must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidSpec("alpha must lie in (0, 1]")
        if self.variant is ModelVariant.WITH_NULL and not 0.0 < self.rho0 < 1.0:
            raise InvalidSpec("rho0 must lie in (0, 1)")
        if self.M is not None and not self.n_L <= self.M < self.n:
            raise InvalidSpec("need n_L <= M < n")


@dataclass(frozen=True)
class ReplicateSummary:
    replicates: int
    mean_mislabel: float
    se_mislabel: float
    mean_rmse: float
    se_rmse: float
    mean_rmse_star: float
    se_rmse_star: float


@dataclass(frozen=True)
class SelectionSummary:
    replicates: int
    tpr_aic: float
    fpr_aic: float
    tpr_bic: float
    fpr_bic: float
    se_tpr_aic: float
    se_fpr_aic: float
    se_tpr_bic: float
    se_fpr_bic: float


@dataclass(frozen=True)
class BootstrapTable:
    lambdas: tuple[float, ...]
    nodes: tuple[int, ...]
    proportions: np.ndarray  # len(lambdas) x len(nodes)
    B: int


def build_scenario(spec: ScenarioSpec) -> tuple[HubModelParams, tuple[tuple[int, ...], ...]]:
    """Draw scenario parameters: hub set {1..n_L}, blockwise follower preferences."""
    rng = np.random.default_rng(spec.seed)
    n_L, n = spec.n_L, spec.n
    hub_set = tuple(range(1, n_L + 1))

    followers = list(range(n_L + 1, n + 1))
    base, extra = divmod(len(followers), n_L)
    v_sets = []
    start = 0
    for i in range(n_L):
        size = base + (1 if i < extra else 0)
        v_sets.append(tuple(followers[start : start + size]))
        start += size

    with_null = spec.variant is ModelVariant.WITH_NULL
    K = n_L + (1 if with_null else 0)
    A = rng.uniform(0.0, 0.2 * spec.alpha, size=(K, n))
    null_rows = 1 if with_null else 0
    for i in range(n_L):
        row = i + null_rows
        cols = [v - 1 for v in v_sets[i]]
        A[row, cols] = rng.uniform(0.2 * spec.alpha, 0.4 * spec.alpha, size=len(cols))
        A[row, i] = 1.0
    if with_null:
        A[0] = 0.05

    raw = rng.uniform(0.0, 1.0, size=n_L)
    if with_null:
        rho = np.concatenate([[spec.rho0], (1.0 - spec.rho0) * raw / raw.sum()])
    else:
        rho = raw / raw.sum()
    params = HubModelParams(variant=spec.variant, n=n, hub_set=hub_set, rho=rho, A=A)
    return params, tuple(v_sets)


def rmse(A_hat: np.ndarray, A_true: np.ndarray, hub_set, variant: ModelVariant) -> float:
    """Root mean squared error over the estimated entries of A.

    Averages over every row of the model (hub rows, plus the hubless row
    under with_null) and all columns except the fixed unit diagonals.
    """
    A_hat = np.asarray(A_hat, dtype=np.float64)
    A_true = np.asarray(A_true, dtype=np.float64)
    if A_hat.shape != A_true.shape:
        raise DimensionMismatch("membership matrices must have equal shapes")
    hub_set = tuple(int(v) for v in hub_set)
    null_rows = 1 if variant is ModelVariant.WITH_NULL else 0
    mask = np.ones_like(A_true, dtype=bool)
    for i, v in enumerate(hub_set):
        mask[i + null_rows, v - 1] = False
    diff = (A_hat - A_true)[mask]
    return float(np.sqrt(np.mean(diff**2)))


def _summary(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def _pmap(fn, items, threads):
    """Order-preserving map; results are identical for any worker count."""
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _estimation_worker(item):
    spec, params, rep_seed, fit_config = item
    return estimation_replicate(spec, params, rep_seed, fit_config)


def _selection_worker(item):
    spec, params, rep_seed, grid, fit_config = item
    return selection_replicate(spec, params, rep_seed, grid, fit_config)


def _bootstrap_worker(item):
    data_G, potential, grid, rep_seed, fit_config = item
    return bootstrap_replicate(GroupedData(data_G), potential, grid, rep_seed, fit_config)


def estimation_replicate(spec: ScenarioSpec, true_params: HubModelParams, rep_seed, fit_config: FitConfig):
    """One data draw from the fixed scenario plus the known-hub-set EM fit and scores."""
    children = rep_seed.spawn(2)
    data, z_star = generate(true_params, spec.T, children[0])
    config = replace(fit_config, seed=int(children[1].generate_state(1)[0]))
    fit = fit_em(data, true_params.hub_set, spec.variant, config)
    z_hat = map_labels(fit.posterior)
    mis = mislabel_rate(z_star, z_hat)
    err = rmse(fit.params.A, true_params.A, true_params.hub_set, spec.variant)
    known = complete_data_mle(data, z_star, spec.variant, true_params.hub_set)
    err_star = rmse(known.A, true_params.A, true_params.hub_set, spec.variant)
    return mis, err, err_star


def run_estimation_replicates(
    spec: ScenarioSpec,
    R: int,
    seed,
    fit_config: FitConfig = FitConfig(num_restarts=5),
    threads: int | None = None,
) -> ReplicateSummary:
    """Known-hub-set benchmark: mislabel rate, RMSE with estimated labels, and
    the known-labels baseline RMSE*, averaged over R replicates.

    The scenario parameters are drawn once from spec.seed; replicates redraw
    the data (and fit seeds) only, so cells sharing spec.seed are paired.
    """
    true_params, _ = build_scenario(spec)
    seeds = np.random.SeedSequence(seed).spawn(R)
    rows = _pmap(
        _estimation_worker, [(spec, true_params, seeds[r], fit_config) for r in range(R)], threads
    )
    mis = np.array([row[0] for row in rows])
    err = np.array([row[1] for row in rows])
    err_star = np.array([row[2] for row in rows])
    m_mis, se_mis = _summary(mis)
    m_err, se_err = _summary(err)
    m_star, se_star = _summary(err_star)
    return ReplicateSummary(
        replicates=R,
        mean_mislabel=m_mis,
        se_mislabel=se_mis,
        mean_rmse=m_err,
        se_rmse=se_err,
        mean_rmse_star=m_star,
        se_rmse_star=se_star,
    )


def selection_replicate(spec: ScenarioSpec, true_params: HubModelParams, rep_seed, lambda_grid, fit_config: FitConfig):
    children = rep_seed.spawn(2)
    data, _ = generate(true_params, spec.T, children[0])
    config = replace(fit_config, seed=int(children[1].generate_state(1)[0]))
    potential = tuple(range(1, spec.M + 1))
    path = lambda_path(data, potential, lambda_grid, config)
    true_set = set(true_params.hub_set)
    aic_fit = path.entries[path.chosen_by_aic].fit
    bic_fit = path.entries[path.chosen_by_bic].fit
    tpr_a, fpr_a = tpr_fpr(true_set, aic_fit.selected_set, spec.M)
    tpr_b, fpr_b = tpr_fpr(true_set, bic_fit.selected_set, spec.M)
    return tpr_a, fpr_a, tpr_b, fpr_b


def run_selection_replicates(
    spec: ScenarioSpec,
    lambda_grid,
    R: int,
    seed,
    fit_config: FitConfig = FitConfig(num_restarts=2, rel_tol=1e-7, max_iter=300),
    threads: int | None = None,
) -> SelectionSummary:
    """Hub-set selection benchmark: TPR/FPR at the AIC- and BIC-chosen lambdas.

    As in the estimation harness, the scenario is drawn once from spec.seed
    and replicates redraw the data only.
    """
    if spec.variant is not ModelVariant.WITH_NULL or spec.M is None:
        raise InvalidSpec("selection experiments need the with_null variant and M")
    true_params, _ = build_scenario(spec)
    seeds = np.random.SeedSequence(seed).spawn(R)
    grid = [float(v) for v in lambda_grid]
    rows = np.asarray(
        _pmap(
            _selection_worker,
            [(spec, true_params, seeds[r], grid, fit_config) for r in range(R)],
            threads,
        )
    )
    means = rows.mean(axis=0)
    ses = rows.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(4)
    return SelectionSummary(
        replicates=R,
        tpr_aic=float(means[0]),
        fpr_aic=float(means[1]),
        tpr_bic=float(means[2]),
        fpr_bic=float(means[3]),
        se_tpr_aic=float(ses[0]),
        se_fpr_aic=float(ses[1]),
        se_tpr_bic=float(ses[2]),
        se_fpr_bic=float(ses[3]),
    )


def run_sparsity_sweep(
    spec_base: ScenarioSpec,
    alphas,
    R: int,
    seed,
    fit_config: FitConfig = FitConfig(num_restarts=5),
    threads: int | None = None,
) -> list[tuple[float, ReplicateSummary, float]]:
    """Per density scale alpha: the estimation summary and the RMSE/RMSE* ratio."""
    out = []
    for alpha in alphas:
        if not 0.0 < alpha <= 1.0:
            raise InvalidSpec("alpha values must lie in (0, 1]")
        summary = run_estimation_replicates(
            replace(spec_base, alpha=alpha), R, seed, fit_config, threads=threads
        )
        ratio = summary.mean_rmse / summary.mean_rmse_star if summary.mean_rmse_star > 0 else float("nan")
        out.append((float(alpha), summary, float(ratio)))
    return out


def bootstrap_replicate(data: GroupedData, potential, grid, rep_seed, fit_config: FitConfig):
    """Selected sets per lambda on one with-replacement resample."""
    children = rep_seed.spawn(2)
    rng = np.random.default_rng(children[0])
    idx = rng.integers(0, data.T, size=data.T)
    resample = GroupedData(np.asarray(data.G)[idx])
    config = replace(fit_config, seed=int(children[1].generate_state(1)[0]))
    path = lambda_path(resample, potential, grid, config)
    return [entry.fit.selected_set for entry in path.entries]


def bootstrap_stability(
    data: GroupedData,
    potential_set,
    lambda_grid,
    B: int,
    seed,
    fit_config: FitConfig = FitConfig(num_restarts=2, rel_tol=1e-7, max_iter=300),
    threads: int | None = None,
) -> BootstrapTable:
    """Per-node selection proportions over B with-replacement resamples."""
    if B < 1:
        raise InvalidSpec("B must be >= 1")
    potential = tuple(int(v) for v in potential_set)
    grid = [float(v) for v in lambda_grid]
    seeds = np.random.SeedSequence(seed).spawn(B)
    counts = np.zeros((len(grid), len(potential)))
    col = {v: j for j, v in enumerate(potential)}
    items = [(np.asarray(data.G), potential, grid, seeds[b], fit_config) for b in range(B)]
    for selections in _pmap(_bootstrap_worker, items, threads):
        for i, selected in enumerate(selections):
            for v in selected:
                counts[i, col[v]] += 1
    return BootstrapTable(
        lambdas=tuple(grid),
        nodes=potential,
        proportions=counts / B,
        B=B,
    )
