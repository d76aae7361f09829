"""Bounds and set identification for marginal effects in discrete panels."""

from .choice_model import LOGIT, PROBIT, LikelihoodKernel, LinkFunction, effect_integrand, likelihood, likelihood_tensor
from .errors import (
    BudgetExceeded,
    DegenerateDesign,
    EmptyRegionDiagnostic,
    InvalidDegrees,
    LpInfeasible,
    NoIdentifiedUnits,
    PanelBoundsError,
    SignConflict,
    SignNotIdentified,
    SolverError,
    SolverStalled,
    UnbalancedPanel,
    UnknownHistory,
    UnsupportedExactCells,
    UnsupportedOutcomeAlphabet,
    ValidationError,
)
from .inference import (
    BootstrapInterval,
    BootstrapPlan,
    Functional,
    GofRegion,
    NpBoundsInterval,
    ProjectionRegion,
    gof_statistic,
    modified_projection,
    np_bounds_ci,
    perturbed_bootstrap,
    sample_dgp_candidate,
)
from .linear_fe import (
    ChamberlainEstimate,
    SupportPartition,
    WithinDecomposition,
    chamberlain_estimator,
    partition_support,
    within_estimator,
    within_plim,
)
from .npbounds import BoundsEstimate, OutcomeBounds, dynamic_bounds, identify_mu_k, static_bounds
from .panel_core import (
    CellMeans,
    CellProbabilities,
    EffectQuery,
    PanelDataset,
    SupportIndex,
    cell_frequencies,
    cell_means,
    enumerate_support,
    population_cell_means,
    read_panel_csv,
    write_panel_csv,
)
from .setid import (
    EffectBounds,
    FemleResult,
    GridConfig,
    IdentifiedSet,
    MixingDistribution,
    effect_bounds,
    effect_bounds_lp,
    estimate_identified_set,
    femle,
    md_objective,
    project_probabilities,
    scalar_beta_grid,
)
from .simlab import (
    MarkovDgp,
    StaticDgp,
    exact_cells,
    generate,
    honore_tamer_alpha,
    markov_bound_decay,
    normal_threshold_mass,
    table1_surface,
    true_effects,
)
from .solvers import LinearProgram, LpSolution, QpSolution, SimplexQP, chisq_quantile, solve_lp, solve_simplex_qp

__all__ = [name for name in dir() if not name.startswith("_")]
