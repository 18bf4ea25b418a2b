"""Dyadic cooperative tracking: simulator, evolutionary engine, and metrics."""

from .agents import (
    Agent,
    Controller,
    ControllerKind,
    ControllerLibrary,
    Dyad,
    FeatureVector,
    Lineage,
    Origin,
    Role,
    SwitchPolicy,
    controller_output,
    default_library,
    evaluate_transition,
    make_agent,
    make_sparse_policy,
    normalize_policy,
)
from .analysis import (
    MetricRow,
    anti_synchrony,
    decile_groups,
    dyad_symmetries,
    filter_pareto_population,
    histogram,
    load_sharing,
    run_analysis,
    symmetry,
    top_performer_set,
)
from .config import RunConfig, desk_config
from .evolution import (
    HallOfFame,
    Population,
    ScoredDyad,
    crossover,
    crowding_distance,
    cull,
    init_population,
    mutate,
    non_dominated_sort,
    run_evolution,
)
from .objectives import (
    INVALID_LOSS,
    ObjectiveVector,
    effort,
    jerk_loss,
    score,
    stabilization_loss,
    tracking_loss,
)
from .simulator import (
    EggParams,
    InitSpec,
    SimState,
    TrialRecord,
    build_features,
    rk4_step,
    simulate_trial,
    solo_stabilizing_normal_force,
    solo_tracking_loss,
    step_trial,
)
from .trajectory import (
    ReferenceTrajectory,
    SineComponent,
    TrajectoryConfig,
    evaluate_reference,
    generate_trajectory,
    ideal_force,
    make_library,
    requires_switching,
)

__version__ = "0.1.0"
