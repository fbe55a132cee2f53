"""Navigation on topological maps whose edge traversability follows learned patterns."""

from .env import (
    EnvConfiguration,
    TaskSequence,
    TemplateSet,
    correlation_profile,
    from_preset,
    gen_tasks,
    gen_templates,
    sample_configuration,
)
from .inference import BpResult, BpSettings, FactorGraph, map_configuration, run_bp
from .model import (
    BeliefState,
    CountStore,
    FactorGraphModel,
    FullJointModel,
    IndependentModel,
    ObservationSet,
)
from .planner import (
    PlanDecision,
    PlannerParams,
    plan_ctp_uct,
    plan_optimal,
    plan_ours,
    plan_spd,
    plan_spo,
)
from .sim import (
    ExperimentLog,
    NavSettings,
    RunResult,
    execute_run,
    run_navigation_experiment,
    run_prediction_experiment,
)
from .topology import Path, TopologicalMap, builtin_map, load_map, shortest_path

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "BpResult",
    "BpSettings",
    "CountStore",
    "EnvConfiguration",
    "ExperimentLog",
    "FactorGraph",
    "FactorGraphModel",
    "FullJointModel",
    "IndependentModel",
    "NavSettings",
    "ObservationSet",
    "Path",
    "PlanDecision",
    "PlannerParams",
    "RunResult",
    "TaskSequence",
    "TemplateSet",
    "TopologicalMap",
    "builtin_map",
    "correlation_profile",
    "execute_run",
    "from_preset",
    "gen_tasks",
    "gen_templates",
    "load_map",
    "map_configuration",
    "plan_ctp_uct",
    "plan_optimal",
    "plan_ours",
    "plan_spd",
    "plan_spo",
    "run_bp",
    "run_navigation_experiment",
    "run_prediction_experiment",
    "sample_configuration",
    "shortest_path",
]
