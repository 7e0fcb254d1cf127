"""randlens: attribute performance variance to randomness factors.

Typical use goes through :func:`run_investigation` with a factor space and an
experiment adapter; the command-line entry point is ``randlens``.
"""

from __future__ import annotations

from .errors import (
    AdapterError,
    ConfigError,
    ImportanceUndefined,
    IncompletePlan,
    MissingGolden,
    NonDeterministicAdapter,
    RandLensError,
    UnknownExperiment,
)
from .executor import ExperimentAdapter, RunRecord, RunStore, SeedBundle, execute_plan, verify_determinism
from .factor_space import UNBOUNDED, Assignment, Factor, FactorSpace, build_factor_space
from .planner import RunPlan, plan_fixed, plan_golden, plan_interactions, plan_random, select_run_counts
from .report import InvestigationReport, render_comparison_table, render_importance_chart, summarize, write_report_tree
from .stats import DecompositionResult, compare_strategies, decompose, importance
from .workflows import RunSettings, run_ablation, run_investigation, run_strategy_comparison

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "Assignment",
    "ConfigError",
    "DecompositionResult",
    "ExperimentAdapter",
    "Factor",
    "FactorSpace",
    "ImportanceUndefined",
    "IncompletePlan",
    "InvestigationReport",
    "MissingGolden",
    "NonDeterministicAdapter",
    "RandLensError",
    "RunPlan",
    "RunRecord",
    "RunSettings",
    "RunStore",
    "SeedBundle",
    "UNBOUNDED",
    "UnknownExperiment",
    "build_factor_space",
    "compare_strategies",
    "decompose",
    "execute_plan",
    "importance",
    "plan_fixed",
    "plan_golden",
    "plan_interactions",
    "plan_random",
    "render_comparison_table",
    "render_importance_chart",
    "run_ablation",
    "run_investigation",
    "run_strategy_comparison",
    "select_run_counts",
    "summarize",
    "verify_determinism",
    "__version__",
]
