"""Rate/energy trade-off simulator for an IRS-aided SWIPT downlink.

A base station with M antennas sends information beams to K decoding
receivers and energy beams to L harvesting receivers, assisted by an
N-element reflecting surface. The library computes the Pareto frontier
between sum rate and total harvested power by an epsilon-constraint sweep,
solving each point with a penalized majorize-minimize loop over lifted
semidefinite subproblems, plus alternating-optimization and random-phase
baselines and a seeded Monte-Carlo experiment harness.

Module map: channel (scenario + fading draws), lifting (phase lifting and
metric evaluation), surrogate (touching convex bounds), conic (subproblem
assembly and the solver adapter), optimizer (MM loop, extraction, sweep,
baselines), harness (experiments, persistence, CLI).
"""

__version__ = "0.1.0"

from .channel import (
    ChannelSet,
    SystemConfig,
    db_to_linear,
    dbm_to_watts,
    equivalent_channel,
    generate_channels,
    linear_to_db,
    load_system_config,
    watts_to_dbm,
)
from .lifting import (
    LiftedChannels,
    LiftedSolution,
    Metrics,
    build_lifted,
    composite_channels,
    evaluate_metrics,
    evaluate_metrics_lifted,
    theta_from_u,
    u_from_theta,
)
from .optimizer import (
    BeamformingSolution,
    InitInfeasible,
    MMConfig,
    OptimizerError,
    ParetoPoint,
    RankEscalationExceeded,
    RankExtractionError,
    SubproblemError,
    baseline_ao_sdr,
    baseline_random_phase,
    compute_Emax,
    extract_rank_one,
    initialize,
    mm_solve,
    optimize_beams,
    pareto_sweep,
)
from .harness import (
    ExperimentSpec,
    ResultRecord,
    emit_outputs,
    main,
    phase_grid_oracle,
    run_experiment,
)

__all__ = [
    "__version__",
    "ChannelSet",
    "SystemConfig",
    "db_to_linear",
    "dbm_to_watts",
    "equivalent_channel",
    "generate_channels",
    "linear_to_db",
    "load_system_config",
    "watts_to_dbm",
    "LiftedChannels",
    "LiftedSolution",
    "Metrics",
    "build_lifted",
    "composite_channels",
    "evaluate_metrics",
    "evaluate_metrics_lifted",
    "theta_from_u",
    "u_from_theta",
    "BeamformingSolution",
    "InitInfeasible",
    "MMConfig",
    "OptimizerError",
    "ParetoPoint",
    "RankEscalationExceeded",
    "RankExtractionError",
    "SubproblemError",
    "baseline_ao_sdr",
    "baseline_random_phase",
    "compute_Emax",
    "extract_rank_one",
    "initialize",
    "mm_solve",
    "optimize_beams",
    "pareto_sweep",
    "ExperimentSpec",
    "ResultRecord",
    "emit_outputs",
    "main",
    "phase_grid_oracle",
    "run_experiment",
]
