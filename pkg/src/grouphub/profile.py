"""Profile likelihood over hub-label assignments and its population version.

For a fixed labeling z the membership matrix has a closed-form maximizer
(per-label column means), giving the profile log-likelihood L_G(z).  The
population version L_P(z) replaces observations by their conditional means.
An exhaustive search over feasible labelings serves as a small-instance
oracle, and an assumption checker reports the finite-sample regularity
constants used by the consistency analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatch, InvalidParams, SearchSpaceTooLarge, ZeroProbabilityGroup
from .model import (
    GroupedData,
    HubModelParams,
    LabelAssignment,
    ModelVariant,
    _labels_array,
)


@dataclass(frozen=True)
class ProfileQuantities:
    """Per-label MLE of A, label counts, and the profile log-likelihood."""

    A_hat: np.ndarray
    counts: np.ndarray
    log_lik: float


@dataclass(frozen=True)
class PopulationQuantities:
    A_bar: np.ndarray
    log_lik_p: float
    P: np.ndarray


def _component_layout(variant: ModelVariant, hub_set):
    hub_set = tuple(int(v) for v in hub_set)
    offset = 0 if variant is ModelVariant.WITH_NULL else 1
    K = len(hub_set) + (1 if variant is ModelVariant.WITH_NULL else 0)
    return hub_set, offset, K


def loglik_given_labels(data: GroupedData, labels, A: np.ndarray, variant: ModelVariant) -> float:
    """Complete-data log-likelihood of A at a fixed labeling (no mixing term)."""
    z = _labels_array(labels)
    if len(z) != data.T:
        raise DimensionMismatch("labels length must equal group count")
    offset = 0 if variant is ModelVariant.WITH_NULL else 1
    G = np.asarray(data.G, dtype=np.float64)
    rows = np.asarray(A, dtype=np.float64)[z - offset]
    return float((xlogy(G, rows) + xlogy(1.0 - G, 1.0 - rows)).sum())


def profile_mle(data: GroupedData, labels, variant: ModelVariant, hub_set) -> ProfileQuantities:
    """Maximize the complete-data likelihood over A for a fixed labeling.

    Labels never used get all-zero rows; their groups contribute nothing
    (0 * log 0 = 0 terms only).
    """
    z = _labels_array(labels)
    if len(z) != data.T:
        raise DimensionMismatch("labels length must equal group count")
    hub_set, offset, K = _component_layout(variant, hub_set)
    G = np.asarray(data.G, dtype=np.float64)
    A_hat = np.zeros((K, data.n))
    counts = np.zeros(K)
    ll = 0.0
    for row in range(K):
        mask = z == row + offset
        t_i = int(mask.sum())
        counts[row] = t_i
        if t_i == 0:
            continue
        s = G[mask].sum(axis=0)
        A_hat[row] = s / t_i
        ll += float(xlogy(s, A_hat[row]).sum() + xlogy(t_i - s, 1.0 - A_hat[row]).sum())
    return ProfileQuantities(A_hat=A_hat, counts=counts, log_lik=ll)


def population_quantities(true_params: HubModelParams, z_star, labels) -> PopulationQuantities:
    """Population analogue of the profile likelihood at a candidate labeling.

    True labels pick out the conditional mean P of each group; the candidate
    labeling averages those means per label.
    """
    zs = _labels_array(z_star)
    z = _labels_array(labels)
    if len(zs) != len(z):
        raise DimensionMismatch("label vectors must have equal length")
    offset = 0 if true_params.variant is ModelVariant.WITH_NULL else 1
    P = true_params.A[zs - offset]
    K = true_params.n_components
    A_bar = np.zeros((K, true_params.n))
    ll = 0.0
    for row in range(K):
        mask = z == row + offset
        t_i = int(mask.sum())
        if t_i == 0:
            continue
        A_bar[row] = P[mask].mean(axis=0)
        block = P[mask]
        ll += float(
            (xlogy(block, A_bar[row][None, :]) + xlogy(1.0 - block, 1.0 - A_bar[row][None, :])).sum()
        )
    return PopulationQuantities(A_bar=A_bar, log_lik_p=ll, P=P)


def feasible_labels(data: GroupedData, variant: ModelVariant, hub_set) -> list[list[int]]:
    """Candidate labels per group: hub-set members present in it (plus 0 if hubless allowed)."""
    hub_set, _, _ = _component_layout(variant, hub_set)
    cands = []
    for t in range(data.T):
        cand = [0] if variant is ModelVariant.WITH_NULL else []
        cand += [i + 1 for i, v in enumerate(hub_set) if data.G[t, v - 1] == 1]
        if not cand:
            raise ZeroProbabilityGroup(t + 1)
        cands.append(cand)
    return cands


def exhaustive_profile_search(
    data: GroupedData,
    hub_set,
    variant: ModelVariant,
    max_labelings: int = 10**7,
) -> tuple[LabelAssignment, float]:
    """Global maximizer of the profile log-likelihood over feasible labelings.

    Ties are broken toward the lexicographically smallest label vector.
    """
    cands = feasible_labels(data, variant, hub_set)
    total = math.prod(len(c) for c in cands)
    if total > max_labelings:
        raise SearchSpaceTooLarge(f"{total} feasible labelings exceed limit {max_labelings}")
    hub_set_t, offset, K = _component_layout(variant, hub_set)
    G = np.asarray(data.G, dtype=np.float64)
    best_z = None
    best_ll = -np.inf
    for z in product(*cands):
        zarr = np.asarray(z)
        ll = 0.0
        for label in set(z):
            mask = zarr == label
            t_i = int(mask.sum())
            s = G[mask].sum(axis=0)
            p = s / t_i
            ll += float(xlogy(s, p).sum() + xlogy(t_i - s, 1.0 - p).sum())
        if ll > best_ll:
            best_ll = ll
            best_z = zarr
    return LabelAssignment(best_z), float(best_ll)


def mislabel_rate(z_star, z_hat) -> float:
    """Fraction of groups whose label differs from the truth (no label swapping)."""
    zs = _labels_array(z_star)
    zh = _labels_array(z_hat)
    if len(zs) != len(zh):
        raise DimensionMismatch("label vectors must have equal length")
    return float(np.mean(zs != zh))


@dataclass(frozen=True)
class AssumptionConstants:
    c_min: float
    c_max: float
    d: float
    s_min: float
    s_max: float
    v: float
    c0: float


@dataclass(frozen=True)
class AssumptionProfile:
    """Finite-sample regularity report: H1 label balance, H2 density scaling,
    H3 preference separation, H4 small hub-hub rates.  Under with_null the
    hubless component joins the index ranges (the starred variants)."""

    constants: AssumptionConstants
    variant: ModelVariant
    t_star: np.ndarray
    s_matrix: np.ndarray
    v_sets: tuple[tuple[int, ...], ...]
    tau: float
    h1: bool
    h2: bool
    h3: bool
    h4: bool

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "constants": {
                "c_min": self.constants.c_min,
                "c_max": self.constants.c_max,
                "d": self.constants.d,
                "s_min": self.constants.s_min,
                "s_max": self.constants.s_max,
                "v": self.constants.v,
                "c0": self.constants.c0,
            },
            "t_star": [int(v) for v in self.t_star],
            "tau": float(self.tau),
            "v_sets": [list(v) for v in self.v_sets],
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "h4": self.h4,
        }


def check_assumptions(
    true_params: HubModelParams,
    z_star,
    v_sets,
    constants: AssumptionConstants,
) -> AssumptionProfile:
    """Evaluate the regularity conditions at the supplied constants.

    v_sets lists, per hub-set entry, the follower node ids (1-based) that
    prefer that hub.
    """
    zs = _labels_array(z_star)
    params = true_params
    with_null = params.variant is ModelVariant.WITH_NULL
    n_L = params.n_hubs
    n = params.n
    T = len(zs)
    K = params.n_components
    followers = set(range(1, n + 1)) - set(params.hub_set)

    v_sets = tuple(tuple(sorted(int(x) for x in vs)) for vs in v_sets)
    if len(v_sets) != n_L:
        raise InvalidParams("need one preference set per hub-set entry")
    for vs in v_sets:
        if not set(vs) <= followers:
            raise InvalidParams("preference sets must contain followers only")

    t_star = np.array([(zs == label).sum() for label in params.component_labels])
    h1 = bool(np.all(t_star >= T * constants.c_min / n_L) and np.all(t_star <= T * constants.c_max / n_L))

    s = params.A / constants.d
    off_diag = np.ones_like(s, dtype=bool)
    for row in range(K):
        col = params.hub_column_of_row(row)
        if col is not None:
            off_diag[row, col] = False
            s[row, col] = np.nan
    h2 = bool(
        np.all(s[off_diag] >= constants.s_min) and np.all(s[off_diag] <= constants.s_max)
    )

    hub_rows = list(range(1, K) if with_null else range(K))
    rival_rows = list(range(K)) if with_null else hub_rows
    tau = np.inf
    for hi, row_i in enumerate(hub_rows):
        cols = [j - 1 for j in v_sets[hi]]
        if not cols:
            continue
        for row_k in rival_rows:
            if row_k == row_i:
                continue
            gap = float(np.min(s[row_i, cols] - s[row_k, cols]))
            tau = min(tau, gap)
    sizes_ok = all(len(vs) >= constants.v * n / n_L for vs in v_sets)
    h3 = bool(sizes_ok and tau > 0.0)

    hub_cols = [v - 1 for v in params.hub_set]
    h4 = True
    h4_rows = range(K) if with_null else hub_rows
    for row in h4_rows:
        own = params.hub_column_of_row(row)
        for col in hub_cols:
            if col == own:
                continue
            if params.A[row, col] > constants.c0 / n_L:
                h4 = False
    return AssumptionProfile(
        constants=constants,
        variant=params.variant,
        t_star=t_star,
        s_matrix=s,
        v_sets=v_sets,
        tau=float(tau),
        h1=h1,
        h2=h2,
        h3=h3,
        h4=h4,
    )
