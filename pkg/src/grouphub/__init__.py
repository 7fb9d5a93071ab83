"""Latent hub-network inference from grouped co-occurrence data."""

from .em import FitConfig, FitResult, PosteriorMatrix, e_step, fit_em, init_params, m_step, map_labels
from .errors import (
    AllRestartsFailed,
    DimensionMismatch,
    EmptyGroupInfeasible,
    EmptyTrueSet,
    GroupHubError,
    IndexOutOfRange,
    InvalidParams,
    InvalidSpec,
    NonBinaryEntry,
    NonFiniteObjective,
    NTooLarge,
    SearchSpaceTooLarge,
    ZeroProbabilityGroup,
)
from .experiments import (
    BootstrapTable,
    ReplicateSummary,
    ScenarioSpec,
    SelectionSummary,
    bootstrap_stability,
    build_scenario,
    rmse,
    run_estimation_replicates,
    run_selection_replicates,
    run_sparsity_sweep,
)
from .model import (
    GroupedData,
    HubModelParams,
    IdentifiabilityReport,
    LabelAssignment,
    ModelVariant,
    PmfTable,
    check_identifiability,
    complete_data_mle,
    component_log_density,
    enumerate_pmf,
    fit_null_model,
    generate,
    log_likelihood,
    tv_distance,
    validate_grouped_data,
)
from .profile import (
    AssumptionConstants,
    AssumptionProfile,
    PopulationQuantities,
    ProfileQuantities,
    check_assumptions,
    exhaustive_profile_search,
    mislabel_rate,
    population_quantities,
    profile_mle,
)
from .select import (
    PenaltyConfig,
    SelectionPath,
    SparseFit,
    default_lambda_grid,
    find_extinction_lambda,
    information_criteria,
    lambda_path,
    modified_em,
    penalized_loglik,
    solve_rho_subproblem,
    tpr_fpr,
)

__version__ = "0.1.0"
