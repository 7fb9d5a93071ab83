"""Standard EM estimation of (rho, A) for a known hub set.

Runs multiple random restarts, each a plain E/M iteration on the observed
log-likelihood, and keeps the best final value.  Per-restart RNG streams are
spawned from the config seed, so serial and concurrent execution of restarts
give identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import AllRestartsFailed, DimensionMismatch, InvalidParams, ZeroProbabilityGroup
from .model import (
    GroupedData,
    HubModelParams,
    LabelAssignment,
    ModelVariant,
    _log_rho,
    log_density_matrix,
)


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 1000
    rel_tol: float = 1e-8
    num_restarts: int = 20
    seed: int = 0
    prob_floor: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParams("max_iter must be >= 1")
        if not 0.0 < self.rel_tol < 1.0:
            raise InvalidParams("rel_tol must be in (0, 1)")
        if self.num_restarts < 1:
            raise InvalidParams("num_restarts must be >= 1")
        if not 0.0 < self.prob_floor <= 1e-3:
            raise InvalidParams("prob_floor must be in (0, 1e-3]")


@dataclass(frozen=True)
class PosteriorMatrix:
    """T x K responsibilities; column k belongs to component label labels[k]."""

    h: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))


@dataclass(frozen=True)
class FitResult:
    params: HubModelParams
    posterior: PosteriorMatrix
    log_lik: float
    iterations: int
    converged: bool
    restart_index: int
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)


def init_params(hub_set, variant: ModelVariant, n: int, seed) -> HubModelParams:
    """Random starting point: rho uniform on the simplex, memberships U(0.1, 0.9)."""
    hub_set = tuple(int(v) for v in hub_set)
    rng = np.random.default_rng(seed)
    K = len(hub_set) + (1 if variant is ModelVariant.WITH_NULL else 0)
    rho = rng.dirichlet(np.ones(K))
    A = rng.uniform(0.1, 0.9, size=(K, n))
    null_rows = 1 if variant is ModelVariant.WITH_NULL else 0
    for row in range(null_rows, K):
        A[row, hub_set[row - null_rows] - 1] = 1.0
    return HubModelParams(variant=variant, n=n, hub_set=hub_set, rho=rho, A=A)


def _posterior_and_loglik(params: HubModelParams, data: GroupedData):
    terms = _log_rho(params.rho)[None, :] + log_density_matrix(data, params)
    lse = logsumexp(terms, axis=1)
    bad = np.nonzero(~np.isfinite(lse))[0]
    if bad.size:
        raise ZeroProbabilityGroup(int(bad[0]) + 1)
    h = np.exp(terms - lse[:, None])
    h /= h.sum(axis=1, keepdims=True)
    return h, float(lse.sum())


def e_step(params: HubModelParams, data: GroupedData) -> PosteriorMatrix:
    """Responsibilities h_ti of each component for each group (Bayes' rule)."""
    h, _ = _posterior_and_loglik(params, data)
    return PosteriorMatrix(h=h, labels=params.component_labels)


def m_step(
    data: GroupedData,
    posterior,
    variant: ModelVariant,
    hub_set,
    prob_floor: float = 1e-10,
) -> HubModelParams:
    """Weighted-average update of A plus the closed-form rho update.

    Hub diagonals are reset to 1; every other estimated entry is clamped to
    [prob_floor, 1 - prob_floor].  Components with zero responsibility mass
    become dead rows (all-zero, weight 0).
    """
    h = posterior.h if isinstance(posterior, PosteriorMatrix) else np.asarray(posterior)
    if h.shape[0] != data.T:
        raise DimensionMismatch("posterior rows must match group count")
    hub_set = tuple(int(v) for v in hub_set)
    K = len(hub_set) + (1 if variant is ModelVariant.WITH_NULL else 0)
    if h.shape[1] != K:
        raise DimensionMismatch("posterior columns must match component count")
    G = np.asarray(data.G, dtype=np.float64)
    mass = h.sum(axis=0)
    A = np.zeros((K, data.n))
    live = mass > 0.0
    if np.any(live):
        A[live] = (h.T[live] @ G) / mass[live, None]
        A[live] = np.clip(A[live], prob_floor, 1.0 - prob_floor)
    null_rows = 1 if variant is ModelVariant.WITH_NULL else 0
    for row in range(null_rows, K):
        if live[row]:
            A[row, hub_set[row - null_rows] - 1] = 1.0
    rho = mass / data.T
    rho = rho / rho.sum()
    return HubModelParams(variant=variant, n=data.n, hub_set=hub_set, rho=rho, A=A)


def _run_restart(data, hub_set, variant, config, seed, start=None):
    params = start if start is not None else init_params(hub_set, variant, data.n, seed)
    h, ll = _posterior_and_loglik(params, data)
    trace = [ll]
    converged = False
    iterations = 0
    for _ in range(config.max_iter):
        params = m_step(data, h, variant, hub_set, config.prob_floor)
        h, new_ll = _posterior_and_loglik(params, data)
        iterations += 1
        trace.append(new_ll)
        if abs(new_ll - ll) / (1.0 + abs(new_ll)) <= config.rel_tol:
            ll = new_ll
            converged = True
            break
        ll = new_ll
    posterior = PosteriorMatrix(h=h, labels=params.component_labels)
    return params, posterior, ll, iterations, converged, trace


def fit_em(
    data: GroupedData,
    hub_set,
    variant: ModelVariant,
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Best-of-restarts EM fit; the winner is the highest final log-likelihood."""
    hub_set = tuple(int(v) for v in hub_set)
    children = np.random.SeedSequence(config.seed).spawn(config.num_restarts)
    best = None
    failures = []
    for idx in range(config.num_restarts):
        try:
            params, posterior, ll, iters, converged, trace = _run_restart(
                data, hub_set, variant, config, children[idx]
            )
        except ZeroProbabilityGroup as exc:
            failures.append((idx, exc))
            continue
        if best is None or ll > best.log_lik:
            best = FitResult(
                params=params,
                posterior=posterior,
                log_lik=ll,
                iterations=iters,
                converged=converged,
                restart_index=idx,
                loglik_trace=tuple(trace),
            )
    if best is None:
        raise AllRestartsFailed(
            f"all {config.num_restarts} restarts hit a zero-probability group "
            f"(first: {failures[0][1]})"
        )
    return best


def map_labels(posterior: PosteriorMatrix) -> LabelAssignment:
    """Highest-responsibility label per group; ties go to the smaller label."""
    idx = np.argmax(posterior.h, axis=1)
    return LabelAssignment(posterior.labels[idx])
