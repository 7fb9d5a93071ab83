"""Hub-set estimation with an unknown hub set.

The fitted model is the with-null mixture over a known potential hub set of
size M.  A log-type penalty on the mixing weights of the M candidate
components (the hubless weight is never penalized) drives weights to exact
zero as the tuning parameter lambda grows; at the extinction point the model
collapses to the independent-Bernoulli null model.

The weight subproblem (maximize the penalized mixture log-likelihood over
the simplex at fixed memberships) is solved by a minorize-maximize scheme:
each step maximizes the usual responsibility surrogate plus the exact
penalty, which decomposes per coordinate given a multiplier and is solved
globally by root-finding plus bisection on the multiplier.  A sequential
quadratic refinement pass certifies first-order stationarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp

from .em import FitConfig
from .errors import (
    AllRestartsFailed,
    DimensionMismatch,
    EmptyTrueSet,
    InvalidParams,
    NonFiniteObjective,
    ZeroProbabilityGroup,
)
from .model import GroupedData, HubModelParams, ModelVariant, _log_rho, log_likelihood


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float
    epsilon: float = 1e-8
    zero_threshold: float = 1e-6

    def __post_init__(self):
        if self.lam < 0.0:
            raise InvalidParams("lambda must be nonnegative")
        if self.epsilon <= 0.0:
            raise InvalidParams("epsilon must be positive")
        if not 0.0 <= self.zero_threshold <= 1e-4:
            raise InvalidParams("zero_threshold must lie in [0, 1e-4]")


@dataclass(frozen=True)
class SparseFit:
    """Modified-EM solution over the potential hub set, with exact zeros in rho."""

    params: HubModelParams
    selected_set: tuple[int, ...]
    penalized_objective: float
    log_lik: float
    lam: float
    iterations: int
    converged: bool
    restart_index: int
    objective_trace: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class PathEntry:
    lam: float
    fit: SparseFit
    k: int
    aic: float
    bic: float


@dataclass(frozen=True)
class SelectionPath:
    entries: tuple[PathEntry, ...]
    chosen_by_aic: int
    chosen_by_bic: int


def penalty_term(rho: np.ndarray, T: int, penalty: PenaltyConfig) -> float:
    """T * lambda * sum_i>=1 [log(eps + rho_i) - log eps]; zero at rho_i = 0."""
    r = np.asarray(rho, dtype=np.float64)[1:]
    return float(T * penalty.lam * (np.log(penalty.epsilon + r) - np.log(penalty.epsilon)).sum())


def penalized_loglik(params: HubModelParams, data: GroupedData, penalty: PenaltyConfig) -> float:
    if params.variant is not ModelVariant.WITH_NULL:
        raise InvalidParams("penalized fitting is defined for the with-null variant")
    return log_likelihood(params, data) - penalty_term(params.rho, data.T, penalty)


def _scaled_weights(table: np.ndarray):
    """Rowwise rescaling of a log-density table to safe linear weights."""
    table = np.asarray(table, dtype=np.float64)
    m = np.max(table, axis=1)
    if np.any(~np.isfinite(m)):
        raise NonFiniteObjective("some group is impossible under every component")
    w = np.exp(table - m[:, None])
    return w, m


def rho_subproblem_objective(table: np.ndarray, rho: np.ndarray, penalty: PenaltyConfig) -> float:
    """Mixture log-likelihood at fixed memberships minus the weight penalty.

    The penalty here is T*lambda*sum_i>=1 log(eps + rho_i), the form the
    weight update maximizes (it differs from the full penalized objective by
    a constant).
    """
    w, m = _scaled_weights(table)
    mix = w @ np.asarray(rho, dtype=np.float64)
    if np.any(mix <= 0.0):
        return float("-inf")
    T = table.shape[0]
    pen = T * penalty.lam * np.log(penalty.epsilon + np.asarray(rho)[1:]).sum()
    return float((m + np.log(mix)).sum() - pen)


def rho_subproblem_gradient(table: np.ndarray, rho: np.ndarray, penalty: PenaltyConfig) -> np.ndarray:
    w, _ = _scaled_weights(table)
    rho = np.asarray(rho, dtype=np.float64)
    mix = w @ rho
    g = (w / mix[:, None]).sum(axis=0)
    T = table.shape[0]
    g[1:] -= T * penalty.lam / (penalty.epsilon + rho[1:])
    return g


def _projected_gradient_norm(g: np.ndarray, rho: np.ndarray) -> float:
    """Norm of the gradient projected on the simplex tangent cone at rho.

    The projection solves x_i = g_i - mu on free coordinates and
    x_i = max(g_i - mu, 0) on active (zero) ones with sum x = 0; the
    consistent mu is found by scanning the sorted active values.
    """
    active = rho <= 0.0
    free = ~active
    nf = int(free.sum())
    s_free = float(g[free].sum())
    ga = np.sort(g[active])[::-1]
    mu = s_free / nf
    run = s_free
    for j in range(len(ga) + 1):
        mu = run / (nf + j)
        upper = ga[j - 1] if j > 0 else np.inf
        lower = ga[j] if j < len(ga) else -np.inf
        if lower <= mu <= upper:
            break
        if j < len(ga):
            run += ga[j]
    x = g - mu
    x[active] = np.maximum(x[active], 0.0)
    return float(np.linalg.norm(x))


def _surrogate_argmax(c: np.ndarray, T: int, penalty: PenaltyConfig) -> np.ndarray:
    """Global maximizer on the simplex of sum_i c_i log rho_i - T*lam*sum_{i>=1} log(eps+rho_i).

    Given the constraint multiplier nu, each coordinate has a unique optimum
    (a positive quadratic root for penalized coordinates, c_i/nu for the
    hubless one); the allocation total is decreasing in nu, so bisection on
    nu solves the constrained problem exactly.
    """
    tlam = T * penalty.lam
    eps = penalty.epsilon
    c0 = float(c[0])
    ci = c[1:]
    pos = ci > 0.0

    def alloc(nu):
        out = np.zeros_like(c)
        if c0 > 0.0:
            out[0] = c0 / nu
        b = nu * eps + tlam - ci
        disc = np.sqrt(b * b + 4.0 * nu * ci * eps)
        # conjugate form avoids cancellation when b > 0
        root = np.where(b >= 0.0, 2.0 * ci * eps / (b + disc), (disc - b) / (2.0 * nu))
        out[1:] = np.where(pos, root, 0.0)
        return out

    hi = max(float(c.sum()), 1.0)
    while alloc(hi).sum() > 1.0:
        hi *= 2.0
    lo = hi
    while alloc(lo).sum() < 1.0:
        lo *= 0.5
        if lo < 1e-300:
            return None
    if lo < hi:
        nu_star = brentq(lambda nu: alloc(nu).sum() - 1.0, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=300)
    else:
        nu_star = lo
    rho = alloc(nu_star)
    total = rho.sum()
    if total <= 0.0:
        return None
    return rho / total


def _snap(rho: np.ndarray, threshold: float) -> np.ndarray:
    out = np.where(rho < threshold, 0.0, rho)
    total = out.sum()
    if total <= 0.0:
        return rho
    return out / total


def solve_rho_subproblem(
    table: np.ndarray,
    penalty: PenaltyConfig,
    rho_init: np.ndarray,
    grad_tol: float = 1e-6,
    max_inner: int = 500,
) -> np.ndarray:
    """Maximize the penalized weight objective over the simplex from rho_init.

    Returns a feasible point whose objective is never below the starting
    one; entries below the zero threshold are snapped to exact zero (kept
    only if the snap does not fall below the starting objective).
    """
    table = np.asarray(table, dtype=np.float64)
    rho = np.asarray(rho_init, dtype=np.float64).copy()
    if rho.shape != (table.shape[1],):
        raise DimensionMismatch("rho_init length must match table columns")
    w, m = _scaled_weights(table)
    T = table.shape[0]

    def objective(r):
        mix = w @ r
        if np.any(mix <= 0.0):
            return float("-inf")
        return float((m + np.log(mix)).sum() - T * penalty.lam * np.log(penalty.epsilon + r[1:]).sum())

    f_init = objective(rho)
    if not np.isfinite(f_init):
        rho = np.full(table.shape[1], 1.0 / table.shape[1])
        f_init = objective(rho)
    best_rho, best_f = rho.copy(), f_init
    f_prev = f_init

    stalled = False
    for _ in range(max_inner):
        mix = w @ rho
        resp = (w * rho[None, :]) / mix[:, None]
        c = resp.sum(axis=0)
        new = _surrogate_argmax(c, T, penalty)
        if new is None:
            stalled = True
            break
        f_new = objective(new)
        if f_new >= best_f:
            best_rho, best_f = new, f_new
        g = rho_subproblem_gradient(table, new, penalty)
        if _projected_gradient_norm(g, new) <= grad_tol:
            rho = new
            break
        if abs(f_new - f_prev) <= 1e-13 * (1.0 + abs(f_new)):
            rho = new
            stalled = True
            break
        rho = new
        f_prev = f_new
    else:
        stalled = True

    if stalled:
        refined = _sqp_refine(w, m, T, penalty, best_rho)
        if refined is not None:
            f_ref = objective(refined)
            if f_ref >= best_f:
                best_rho, best_f = refined, f_ref

    snapped = _snap(best_rho, penalty.zero_threshold)
    if objective(snapped) >= f_init:
        return snapped
    if best_f >= f_init:
        return best_rho
    return np.asarray(rho_init, dtype=np.float64)


def _sqp_refine(w, m, T, penalty, rho0):
    K = len(rho0)

    def neg_obj(r):
        mix = w @ r
        if np.any(mix <= 1e-300) or np.any(r < -1e-12) or np.any(r[1:] + penalty.epsilon <= 0):
            return 1e300
        return -float(
            (m + np.log(mix)).sum()
            - T * penalty.lam * np.log(penalty.epsilon + np.maximum(r[1:], 0.0)).sum()
        )

    def neg_grad(r):
        mix = np.maximum(w @ r, 1e-300)
        g = (w / mix[:, None]).sum(axis=0)
        g[1:] -= T * penalty.lam / (penalty.epsilon + np.maximum(r[1:], 0.0))
        return -g

    res = minimize(
        neg_obj,
        rho0,
        jac=neg_grad,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * K,
        constraints=[{"type": "eq", "fun": lambda r: r.sum() - 1.0, "jac": lambda r: np.ones(K)}],
        options={"maxiter": 500, "ftol": 1e-14},
    )
    if not np.all(np.isfinite(res.x)):
        return None
    out = np.maximum(res.x, 0.0)
    total = out.sum()
    if total <= 0.0:
        return None
    return out / total


def _live_log_densities(G: np.ndarray, A: np.ndarray, live: np.ndarray):
    """Log densities for live components only; dead columns are -inf."""
    T = G.shape[0]
    K = A.shape[0]
    dens = np.full((T, K), -np.inf)
    idx = np.nonzero(live)[0]
    A_live = A[idx]
    log_a = np.log(np.where(A_live > 0.0, A_live, 1.0))
    log_1ma = np.log(np.where(A_live < 1.0, 1.0 - A_live, 1.0))
    dens[:, idx] = G @ (log_a - log_1ma).T + log_1ma.sum(axis=1)
    for pos, k in enumerate(idx):
        zero_cols = np.nonzero(A_live[pos] == 0.0)[0]
        one_cols = np.nonzero(A_live[pos] == 1.0)[0]
        if zero_cols.size:
            dens[np.any(G[:, zero_cols] == 1.0, axis=1), k] = -np.inf
        if one_cols.size:
            dens[np.any(G[:, one_cols] == 0.0, axis=1), k] = -np.inf
    return dens


def informed_start(
    data: GroupedData,
    potential_set,
    seed=None,
    jitter: float = 0.0,
) -> HubModelParams:
    """Moment-style starting point for the penalized fit.

    Each candidate's membership row is seeded with the mean of the groups
    its node appears in (those are the only groups the component can ever
    explain), the hubless row with the overall column means.  A positive
    jitter adds uniform noise for restart diversity.
    """
    potential_set = tuple(int(v) for v in potential_set)
    G = np.asarray(data.G, dtype=np.float64)
    n = G.shape[1]
    M = len(potential_set)
    A = np.zeros((M + 1, n))
    col_means = G.mean(axis=0)
    A[0] = col_means
    for k, v in enumerate(potential_set, start=1):
        mask = G[:, v - 1] == 1.0
        A[k] = G[mask].mean(axis=0) if mask.any() else col_means
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        A += rng.uniform(-jitter, jitter, size=A.shape)
        rho = rng.dirichlet(np.ones(M + 1))
    else:
        rho = np.full(M + 1, 1.0 / (M + 1))
    A = np.clip(A, 0.01, 0.99)
    for k, v in enumerate(potential_set, start=1):
        A[k, v - 1] = 1.0
    return HubModelParams(
        variant=ModelVariant.WITH_NULL, n=n, hub_set=potential_set, rho=rho, A=A
    )


def modified_em(
    data: GroupedData,
    potential_set,
    penalty: PenaltyConfig,
    config: FitConfig = FitConfig(),
    warm_start: HubModelParams | None = None,
) -> SparseFit:
    """Penalized EM over the potential hub set (Modified EM).

    Memberships of live components get the usual responsibility-weighted
    update; the weights are updated by solving the penalized subproblem, and
    components whose weight reaches exact zero are frozen out of both the
    responsibilities and the membership updates.  Best, by penalized
    objective, of the moment-seeded start, jittered variants of it, and the
    optional warm start.
    """
    potential_set = tuple(int(v) for v in potential_set)
    M = len(potential_set)
    if M >= data.n:
        raise InvalidParams("potential hub set must be smaller than the node set")
    G = np.asarray(data.G, dtype=np.float64)
    hub_cols = np.array([v - 1 for v in potential_set])
    children = np.random.SeedSequence(config.seed).spawn(config.num_restarts)

    starts: list[tuple[int, HubModelParams]] = []
    if warm_start is not None:
        starts.append((-1, warm_start))
    starts.append((0, informed_start(data, potential_set)))
    for idx in range(1, config.num_restarts):
        starts.append((idx, informed_start(data, potential_set, children[idx], jitter=0.1)))

    best = None
    failures = 0
    for restart_index, start in starts:
        try:
            fit = _modified_em_single(
                G, data, potential_set, hub_cols, penalty, config, start, restart_index
            )
        except ZeroProbabilityGroup:
            failures += 1
            continue
        if best is None or fit.penalized_objective > best.penalized_objective:
            best = fit
    if best is None:
        raise AllRestartsFailed(f"all {failures} starts hit a zero-probability group")
    return best


def _modified_em_single(G, data, potential_set, hub_cols, penalty, config, start, restart_index):
    T, n = G.shape
    rho = np.asarray(start.rho, dtype=np.float64).copy()
    A = np.asarray(start.A, dtype=np.float64).copy()
    live = rho > 0.0
    # inner iterates stay interior (the log penalty parks dying weights at
    # epsilon scale instead of zero), so temporarily starved components can
    # recover; the zero threshold is applied once at convergence
    inner_penalty = PenaltyConfig(lam=penalty.lam, epsilon=penalty.epsilon, zero_threshold=0.0)
    obj = -np.inf
    trace = []
    converged = False
    iterations = 0
    for _ in range(config.max_iter):
        dens = _live_log_densities(G, A, live)
        terms = _log_rho(rho)[None, :] + dens
        lse = logsumexp(terms, axis=1)
        bad = np.nonzero(~np.isfinite(lse))[0]
        if bad.size:
            raise ZeroProbabilityGroup(int(bad[0]) + 1)
        h = np.exp(terms - lse[:, None])

        mass = h.sum(axis=0)
        upd = mass > 0.0
        A_new = np.zeros_like(A)
        A_new[upd] = (h.T[upd] @ G) / mass[upd, None]
        A_new[upd] = np.clip(A_new[upd], config.prob_floor, 1.0 - config.prob_floor)
        for k in np.nonzero(upd)[0]:
            if k > 0:
                A_new[k, hub_cols[k - 1]] = 1.0
        A = A_new
        live = upd

        dens = _live_log_densities(G, A, live)
        rho = solve_rho_subproblem(dens, inner_penalty, rho)
        rho = np.where(live, rho, 0.0)
        rho = rho / rho.sum()
        live = live & (rho > 0.0)
        A[~live] = 0.0

        terms = _log_rho(rho)[None, :] + dens
        log_lik = float(logsumexp(terms, axis=1).sum())
        new_obj = log_lik - penalty_term(rho, T, penalty)
        iterations += 1
        trace.append(new_obj)
        if np.isfinite(obj) and abs(new_obj - obj) / (1.0 + abs(new_obj)) <= config.rel_tol:
            obj = new_obj
            converged = True
            break
        obj = new_obj

    rho = _snap(rho, penalty.zero_threshold)
    live = live & (rho > 0.0)
    A[~live] = 0.0
    dens = _live_log_densities(G, A, live)
    terms = _log_rho(rho)[None, :] + dens
    log_lik = float(logsumexp(terms, axis=1).sum())
    obj = log_lik - penalty_term(rho, T, penalty)

    params = HubModelParams(
        variant=ModelVariant.WITH_NULL,
        n=n,
        hub_set=potential_set,
        rho=rho,
        A=A,
    )
    selected = tuple(potential_set[k - 1] for k in range(1, len(rho)) if rho[k] > 0.0)
    return SparseFit(
        params=params,
        selected_set=selected,
        penalized_objective=obj,
        log_lik=log_lik,
        lam=penalty.lam,
        iterations=iterations,
        converged=converged,
        restart_index=restart_index,
        objective_trace=tuple(trace),
    )


def default_dof(fit: SparseFit, data: GroupedData) -> int:
    """Free parameters of the selected model: per selected hub its n-1 free
    memberships and its mixing weight, plus the hubless rate vector."""
    k_sel = len(fit.selected_set)
    return k_sel * (data.n - 1) + data.n + k_sel


def information_criteria(fit: SparseFit, data: GroupedData, dof=None) -> tuple[float, float]:
    k = (dof or default_dof)(fit, data)
    aic = -2.0 * fit.log_lik + 2.0 * k
    bic = -2.0 * fit.log_lik + k * float(np.log(data.T))
    return aic, bic


def lambda_path(
    data: GroupedData,
    potential_set,
    lambda_grid,
    config: FitConfig = FitConfig(),
    epsilon: float = 1e-8,
    zero_threshold: float = 1e-6,
    dof=None,
) -> SelectionPath:
    """One modified-EM fit per lambda, warm-starting each from the previous
    solution, with information criteria recorded along the path."""
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise InvalidParams("lambda grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParams("lambda grid must be strictly increasing")
    if any(v < 0 for v in grid):
        raise InvalidParams("lambda grid must be nonnegative")
    children = np.random.SeedSequence(config.seed).spawn(len(grid))
    entries = []
    prev = None
    for i, lam in enumerate(grid):
        penalty = PenaltyConfig(lam=lam, epsilon=epsilon, zero_threshold=zero_threshold)
        cfg = FitConfig(
            max_iter=config.max_iter,
            rel_tol=config.rel_tol,
            num_restarts=config.num_restarts,
            seed=int(children[i].generate_state(1)[0]),
            prob_floor=config.prob_floor,
        )
        try:
            fit = modified_em(data, potential_set, penalty, cfg, warm_start=prev)
        except (AllRestartsFailed, NonFiniteObjective) as exc:
            raise type(exc)(f"lambda={lam}: {exc}") from exc
        aic, bic = information_criteria(fit, data, dof)
        entries.append(PathEntry(lam=lam, fit=fit, k=(dof or default_dof)(fit, data), aic=aic, bic=bic))
        prev = fit.params
    chosen_aic = 0
    chosen_bic = 0
    for i, e in enumerate(entries):
        if e.aic <= entries[chosen_aic].aic:
            chosen_aic = i
        if e.bic <= entries[chosen_bic].bic:
            chosen_bic = i
    return SelectionPath(entries=tuple(entries), chosen_by_aic=chosen_aic, chosen_by_bic=chosen_bic)


def tpr_fpr(true_set, selected_set, M: int) -> tuple[float, float]:
    """Recovered fraction of true hubs and wrongly selected fraction of the rest."""
    true_set = set(int(v) for v in true_set)
    selected = set(int(v) for v in selected_set)
    if not true_set:
        raise EmptyTrueSet("true hub set is empty")
    n_L = len(true_set)
    tpr = len(true_set & selected) / n_L
    denom = M - n_L
    fpr = len(selected - true_set) / denom if denom > 0 else 0.0
    return tpr, fpr


def find_extinction_lambda(
    data: GroupedData,
    potential_set,
    config: FitConfig = FitConfig(),
    lam0: float = 1e-3,
    max_doublings: int = 40,
    epsilon: float = 1e-8,
    zero_threshold: float = 1e-6,
) -> float:
    """Smallest power-of-two multiple of lam0 whose fit selects no hubs."""
    lam = lam0
    for _ in range(max_doublings):
        fit = modified_em(
            data,
            potential_set,
            PenaltyConfig(lam=lam, epsilon=epsilon, zero_threshold=zero_threshold),
            config,
        )
        if not fit.selected_set:
            return lam
        lam *= 2.0
    raise NonFiniteObjective("no extinction point found within the doubling budget")


def default_lambda_grid(
    data: GroupedData,
    potential_set,
    config: FitConfig = FitConfig(),
    points: int = 20,
    lam_min: float = 1e-3,
) -> np.ndarray:
    lam_max = find_extinction_lambda(data, potential_set, config, lam0=lam_min)
    return np.geomspace(lam_min, lam_max, points)
