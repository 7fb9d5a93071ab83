"""Core data model for grouped co-occurrence data and hub-type Bernoulli mixtures.

A dataset is a T x n binary matrix: each row is one observed group, each
column one node.  Two model variants are supported:

* asymmetric: every group is convened by a latent hub drawn from the hub
  set; the hub always appears in its own group (its diagonal membership
  probability is fixed at 1).
* with_null: an extra component (index 0) generates hubless groups by
  independent Bernoulli trials with per-node rates pi.

Component labels follow the variant: 1..n_L for asymmetric, 0..n_L for
with_null (0 = hubless).  Node ids are 1-based in all public structures and
file formats; arrays are 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    EmptyGroupInfeasible,
    IndexOutOfRange,
    InvalidParams,
    NonBinaryEntry,
    NTooLarge,
)

PROB_SUM_TOL = 1e-12
PROB_SUM_RENORM_TOL = 1e-9


class ModelVariant(Enum):
    ASYMMETRIC = "asymmetric"
    WITH_NULL = "with_null"


@dataclass(frozen=True)
class GroupedData:
    """T x n binary membership matrix; row t lists the nodes seen in group t."""

    G: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G)
        if G.ndim != 2:
            raise DimensionMismatch("group matrix must be 2-dimensional")
        if G.shape[0] < 1 or G.shape[1] < 2:
            raise DimensionMismatch("need at least 1 group and 2 nodes")
        object.__setattr__(self, "G", G)

    @property
    def T(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class LabelAssignment:
    """Per-group component labels; 0 is allowed only under with_null."""

    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.z)


def _labels_array(labels) -> np.ndarray:
    if isinstance(labels, LabelAssignment):
        return labels.z
    return np.asarray(labels, dtype=np.int64)


@dataclass(frozen=True)
class HubModelParams:
    """Mixture parameters: mixing weights rho and membership matrix A.

    Rows of A align with rho: under with_null row 0 is the hubless rate
    vector pi, rows 1..n_L are hub rows; under asymmetric rows 0..n_L-1
    correspond to hub-set entries 1..n_L.  Hub rows carry a structural 1 at
    their own node's column.  A component with rho == 0 may instead carry an
    all-zero row (a dead component, e.g. an unused label in complete-data
    estimation).
    """

    variant: ModelVariant
    n: int
    hub_set: tuple[int, ...]
    rho: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "hub_set", tuple(int(v) for v in self.hub_set))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=np.float64))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=np.float64))
        self.validate()

    @property
    def n_hubs(self) -> int:
        return len(self.hub_set)

    @property
    def n_components(self) -> int:
        return len(self.hub_set) + (1 if self.variant is ModelVariant.WITH_NULL else 0)

    @property
    def component_labels(self) -> np.ndarray:
        start = 0 if self.variant is ModelVariant.WITH_NULL else 1
        return np.arange(start, self.n_hubs + 1)

    def row_of(self, label: int) -> int:
        """A/rho row index of a component label."""
        offset = 0 if self.variant is ModelVariant.WITH_NULL else 1
        row = label - offset
        if row < 0 or row >= self.n_components:
            raise IndexOutOfRange(f"component label {label} out of range")
        return row

    def hub_column_of_row(self, row: int) -> int | None:
        """0-based column of the structural diagonal for an A row; None for pi."""
        if self.variant is ModelVariant.WITH_NULL:
            if row == 0:
                return None
            return self.hub_set[row - 1] - 1
        return self.hub_set[row] - 1

    def validate(self):
        n_L = len(self.hub_set)
        if n_L < 1:
            raise InvalidParams("hub set must be non-empty")
        if n_L >= self.n:
            raise InvalidParams("hub set must be smaller than node set")
        if len(set(self.hub_set)) != n_L:
            raise InvalidParams("hub set indices must be distinct")
        if any(v < 1 or v > self.n for v in self.hub_set):
            raise InvalidParams("hub set indices must be in 1..n")
        K = self.n_components
        if self.rho.shape != (K,):
            raise InvalidParams(f"rho must have length {K}")
        if self.A.shape != (K, self.n):
            raise InvalidParams(f"A must be {K}x{self.n}")
        if np.any(self.rho < 0.0) or np.any(self.rho > 1.0):
            raise InvalidParams("rho entries must lie in [0, 1]")
        if abs(float(self.rho.sum()) - 1.0) > PROB_SUM_TOL:
            raise InvalidParams("rho must sum to 1")
        if np.any(self.A < 0.0) or np.any(self.A > 1.0):
            raise InvalidParams("A entries must lie in [0, 1]")
        for row in range(K):
            col = self.hub_column_of_row(row)
            if col is None:
                continue
            if self.A[row, col] == 1.0:
                continue
            # dead component (unused label): zero weight and an all-zero row
            if self.rho[row] == 0.0 and not np.any(self.A[row]):
                continue
            raise InvalidParams(
                f"hub row for node {self.hub_set[row - (1 if self.variant is ModelVariant.WITH_NULL else 0)]} "
                "must have a unit diagonal"
            )


@dataclass(frozen=True)
class PmfTable:
    """Probabilities of all 2^n group outcomes; node j maps to bit j-1."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))
        if self.probs.shape != (2**self.n,):
            raise DimensionMismatch("pmf table must have 2^n entries")


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    t: int
    j: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]

    def raise_first(self):
        for issue in self.issues:
            if issue.kind == "non_binary":
                raise NonBinaryEntry(issue.t, issue.j)
            raise EmptyGroupInfeasible(issue.t)


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Which identifiability conditions hold, with the witnesses that break them.

    cond_i: no off-diagonal membership probability equals 1.
    cond_ii: every pair of hub rows differs somewhere on the follower columns.
    cond_iii (with_null): every hub row differs from pi in >= 2 follower entries.
    cond_iv_prime: some supplied candidate node is a pure follower
    (its rate under every hub differs from its hubless rate); evaluated only
    when candidates are given for a with_null model.
    """

    cond_i: bool
    cond_i_violations: tuple[tuple[int, int], ...]
    cond_ii: bool
    cond_ii_violations: tuple[tuple[int, int], ...]
    cond_iii: bool | None = None
    cond_iii_violations: tuple[int, ...] = ()
    cond_iv_prime: bool | None = None
    cond_iv_prime_witness: int | None = None

    def all_hold(self) -> bool:
        flags = [self.cond_i, self.cond_ii]
        if self.cond_iii is not None:
            flags.append(self.cond_iii)
        if self.cond_iv_prime is not None:
            flags.append(self.cond_iv_prime)
        return all(flags)


def validate_grouped_data(data: GroupedData, variant: ModelVariant) -> ValidationReport:
    """Check that entries are binary and, under asymmetric, that no group is empty."""
    G = data.G
    issues = []
    bad = (G != 0) & (G != 1)
    for t, j in zip(*np.nonzero(bad)):
        issues.append(ValidationIssue("non_binary", int(t) + 1, int(j) + 1))
    if not issues and variant is ModelVariant.ASYMMETRIC:
        for t in np.nonzero(G.sum(axis=1) == 0)[0]:
            issues.append(ValidationIssue("empty_group", int(t) + 1))
    return ValidationReport(ok=not issues, issues=tuple(issues))


def _row_log_terms(A_row: np.ndarray):
    """Per-node log A and log(1-A) with 0/1 entries mapped to 0 (handled via masks)."""
    log_a = np.log(np.where(A_row > 0.0, A_row, 1.0))
    log_1ma = np.log(np.where(A_row < 1.0, 1.0 - A_row, 1.0))
    return log_a, log_1ma


def component_log_density(params: HubModelParams, group, i: int) -> float:
    """Log-probability of one group under component i, in the extended reals.

    Conventions: 0*log 0 = 0 and log 0 = -inf, so the result is -inf exactly
    when the group is structurally impossible for the component (a present
    node with rate 0, or the hub absent from its own group).
    """
    g = np.asarray(group, dtype=np.float64)
    if g.shape != (params.n,):
        raise DimensionMismatch("group vector length must equal n")
    row = params.row_of(int(i))
    a = params.A[row]
    if np.any((g == 1.0) & (a == 0.0)) or np.any((g == 0.0) & (a == 1.0)):
        return float("-inf")
    log_a, log_1ma = _row_log_terms(a)
    return float(g @ log_a + (1.0 - g) @ log_1ma)


def log_density_matrix(data: GroupedData, params: HubModelParams) -> np.ndarray:
    """T x K matrix of component log-densities, -inf where infeasible."""
    if data.n != params.n:
        raise DimensionMismatch("data and params disagree on node count")
    G = np.asarray(data.G, dtype=np.float64)
    A = params.A
    log_a = np.log(np.where(A > 0.0, A, 1.0))
    log_1ma = np.log(np.where(A < 1.0, 1.0 - A, 1.0))
    dens = G @ (log_a - log_1ma).T + log_1ma.sum(axis=1)
    # structural zeros: exact-0/1 entries rarely occur off the hub diagonal,
    # so patch them per row instead of paying two more T x n x K products
    for row in range(A.shape[0]):
        zero_cols = np.nonzero(A[row] == 0.0)[0]
        one_cols = np.nonzero(A[row] == 1.0)[0]
        if zero_cols.size:
            dens[np.any(G[:, zero_cols] == 1.0, axis=1), row] = -np.inf
        if one_cols.size:
            dens[np.any(G[:, one_cols] == 0.0, axis=1), row] = -np.inf
    return dens


def _log_rho(rho: np.ndarray) -> np.ndarray:
    return np.where(rho > 0.0, np.log(np.where(rho > 0.0, rho, 1.0)), -np.inf)


def per_group_log_likelihood(params: HubModelParams, data: GroupedData) -> np.ndarray:
    """Length-T vector of log mixture densities (log-sum-exp over components)."""
    dens = log_density_matrix(data, params)
    terms = _log_rho(params.rho)[None, :] + dens
    return logsumexp(terms, axis=1)


def log_likelihood(params: HubModelParams, data: GroupedData) -> float:
    """Total log-likelihood; -inf if any group is impossible under every component."""
    return float(per_group_log_likelihood(params, data).sum())


def generate(params: HubModelParams, T: int, seed) -> tuple[GroupedData, LabelAssignment]:
    """Sample T groups: a label from rho, then independent node memberships."""
    if T < 1:
        raise InvalidParams("T must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.choice(params.component_labels, size=T, p=params.rho)
    rows = labels - (0 if params.variant is ModelVariant.WITH_NULL else 1)
    U = rng.random((T, params.n))
    G = (U < params.A[rows]).astype(np.int8)
    return GroupedData(G), LabelAssignment(labels)


def complete_data_mle(
    data: GroupedData,
    labels,
    variant: ModelVariant,
    hub_set,
) -> HubModelParams:
    """MLE of (rho, A) when labels are observed: per-component column means.

    A label never used yields a zero row and zero weight; hub diagonals are
    reset to 1 on used rows.
    """
    z = _labels_array(labels)
    if len(z) != data.T:
        raise DimensionMismatch("labels length must equal group count")
    hub_set = tuple(int(v) for v in hub_set)
    K = len(hub_set) + (1 if variant is ModelVariant.WITH_NULL else 0)
    offset = 0 if variant is ModelVariant.WITH_NULL else 1
    G = np.asarray(data.G, dtype=np.float64)
    A = np.zeros((K, data.n))
    counts = np.zeros(K)
    null_rows = 1 if variant is ModelVariant.WITH_NULL else 0
    for row in range(K):
        mask = z == row + offset
        t_i = int(mask.sum())
        counts[row] = t_i
        if t_i == 0:
            continue
        A[row] = G[mask].mean(axis=0)
        if row >= null_rows:
            A[row, hub_set[row - null_rows] - 1] = 1.0
    rho = counts / data.T
    return HubModelParams(variant=variant, n=data.n, hub_set=hub_set, rho=rho, A=A)


def enumerate_pmf(params: HubModelParams, max_n: int = 20) -> PmfTable:
    """Exact pmf over all 2^n outcomes (independent of the log-domain path)."""
    if params.n > max_n:
        raise NTooLarge(f"n={params.n} exceeds enumeration limit {max_n}")
    size = 2**params.n
    bits = np.zeros((size, params.n), dtype=bool)
    idx = np.arange(size)
    for j in range(params.n):
        bits[:, j] = (idx >> j) & 1
    probs = np.zeros(size)
    for row in range(params.n_components):
        a = params.A[row]
        comp = np.ones(size)
        for j in range(params.n):
            comp *= np.where(bits[:, j], a[j], 1.0 - a[j])
        probs += params.rho[row] * comp
    return PmfTable(n=params.n, probs=probs)


def tv_distance(p: PmfTable, q: PmfTable) -> float:
    if p.n != q.n:
        raise DimensionMismatch("pmf tables must share n")
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def _follower_columns(params: HubModelParams) -> np.ndarray:
    mask = np.ones(params.n, dtype=bool)
    for v in params.hub_set:
        mask[v - 1] = False
    return np.nonzero(mask)[0]


def check_identifiability(
    params: HubModelParams,
    pure_follower_candidates=None,
) -> IdentifiabilityReport:
    """Evaluate the identifiability conditions on a parameter set.

    Violation lists use 1-based labels: component labels for rows (0 = the
    hubless component) and node ids for columns.
    """
    with_null = params.variant is ModelVariant.WITH_NULL
    offset = 0 if with_null else 1
    followers = _follower_columns(params)

    vio_i = []
    for row in range(params.n_components):
        own = params.hub_column_of_row(row)
        for j in range(params.n):
            if j == own:
                continue
            if params.A[row, j] >= 1.0:
                vio_i.append((row + offset, j + 1))

    vio_ii = []
    hub_rows = range(1, params.n_hubs + 1) if with_null else range(params.n_hubs)
    hub_rows = list(hub_rows)
    for a_idx in range(len(hub_rows)):
        for b_idx in range(a_idx + 1, len(hub_rows)):
            ra, rb = hub_rows[a_idx], hub_rows[b_idx]
            if np.array_equal(params.A[ra, followers], params.A[rb, followers]):
                vio_ii.append((ra + offset, rb + offset))

    cond_iii = None
    vio_iii: tuple[int, ...] = ()
    if with_null:
        bad = []
        pi = params.A[0, followers]
        for row in hub_rows:
            ndiff = int(np.sum(params.A[row, followers] != pi))
            if ndiff < 2:
                bad.append(row)
        cond_iii = not bad
        vio_iii = tuple(bad)

    cond_iv = None
    witness = None
    if pure_follower_candidates is not None and with_null:
        cond_iv = False
        for k in sorted(int(v) for v in pure_follower_candidates):
            if k in params.hub_set:
                continue
            col = k - 1
            if all(params.A[row, col] != params.A[0, col] for row in hub_rows):
                cond_iv = True
                witness = k
                break

    return IdentifiabilityReport(
        cond_i=not vio_i,
        cond_i_violations=tuple(vio_i),
        cond_ii=not vio_ii,
        cond_ii_violations=tuple(vio_ii),
        cond_iii=cond_iii,
        cond_iii_violations=vio_iii,
        cond_iv_prime=cond_iv,
        cond_iv_prime_witness=witness,
    )


def fit_null_model(data: GroupedData) -> tuple[np.ndarray, float]:
    """Independent-Bernoulli fit: per-node frequencies and its log-likelihood."""
    G = np.asarray(data.G, dtype=np.float64)
    pi = G.mean(axis=0)
    c = G.sum(axis=0)
    T = data.T
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(c > 0, c * np.log(np.where(pi > 0, pi, 1.0)), 0.0)
        term0 = np.where(T - c > 0, (T - c) * np.log(np.where(pi < 1, 1.0 - pi, 1.0)), 0.0)
    return pi, float((term1 + term0).sum())
