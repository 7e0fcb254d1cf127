"""End-to-end investigations: plan, execute, summarize.

A single master seed fans out to every plan seed through the stable hash, so
one integer reproduces a whole investigation:

    golden plan         stable_hash("plan", master, "golden")
    strategy s, factor  stable_hash("plan", master, s, factor)

Factor order and the other factors' names never enter a plan seed, so
investigating a subset of factors reproduces the same grids.
"""

from __future__ import annotations

import datetime as _dt
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import ConfigError
from .executor import ExecutionResult, ExperimentAdapter, RunStore, execute_plan, run_id_for, verify_determinism
from .factor_space import FactorSpace
from .hashing import stable_hash
from .planner import RunPlan, plan_fixed, plan_golden, plan_interactions, plan_random
from .report import AblationColumn, InvestigationReport, ablation_column, environment_fingerprint, summarize

log = logging.getLogger(__name__)

DEFAULT_N = 10
DEFAULT_M = 20
FIXED_BUDGETS = ("n", "nm")


def plan_seed(master_seed: int, *parts: object) -> int:
    return stable_hash("plan", int(master_seed), *parts)


def repetition_seed(master_seed: int, repetition: int) -> int:
    """Master seed of meta-repetition ``repetition``; repetition 0 is the master itself."""
    return int(master_seed) if repetition == 0 else stable_hash("repetition", int(master_seed), repetition)


@dataclass(frozen=True)
class RunSettings:
    n: int = DEFAULT_N
    m: int = DEFAULT_M
    l: int | None = None  # None -> N x M
    master_seed: int = 0
    parallelism: int = 1
    allow_missing: bool = False
    allow_exhaustive: bool = False
    verify_k: int = 0  # cells re-run per plan to check determinism; 0 disables
    fixed_budget: str = "n"

    def __post_init__(self) -> None:
        if self.n < 2 or self.m < 2:
            raise ConfigError(f"N and M must both be at least 2 (got N={self.n}, M={self.m})")
        if self.l is not None and self.l < 2:
            raise ConfigError(f"L must be at least 2 (got {self.l})")
        if self.fixed_budget not in FIXED_BUDGETS:
            raise ConfigError(f"fixed budget must be one of {FIXED_BUDGETS}")
        if self.verify_k < 0:
            raise ConfigError("verify_k must be non-negative")

    @property
    def golden_runs(self) -> int:
        return self.n * self.m if self.l is None else self.l


def _factors(space: FactorSpace, factors: Sequence[str] | None) -> list[str]:
    names = list(space.names if factors is None else factors)
    for name in names:
        space.factor(name)
    if len(set(names)) != len(names):
        raise ConfigError("a factor is listed twice")
    return names


def investigation_plans(
    space: FactorSpace, factors: Sequence[str] | None, settings: RunSettings
) -> list[RunPlan]:
    """Golden plan first, then one interactions grid per factor."""
    seed = settings.master_seed
    plans = [plan_golden(space, settings.golden_runs, plan_seed(seed, "golden"), allow_exhaustive=settings.allow_exhaustive)]
    for name in _factors(space, factors):
        plans.append(
            plan_interactions(
                space, name, settings.n, settings.m, plan_seed(seed, "interactions", name),
                allow_exhaustive=settings.allow_exhaustive,
            )
        )
    return plans


def comparison_plans(
    space: FactorSpace, factors: Sequence[str] | None, settings: RunSettings
) -> list[RunPlan]:
    """Golden, then per factor Random (N x M runs), Fixed (N or N x M) and Interactions."""
    seed = settings.master_seed
    plans = investigation_plans(space, factors, settings)
    golden, grids = plans[0], plans[1:]
    out = [golden]
    fixed_n = settings.n if settings.fixed_budget == "n" else settings.n * settings.m
    for grid in grids:
        name = grid.investigated
        out.append(plan_random(space, name, settings.n * settings.m, plan_seed(seed, "random", name)))
        out.append(plan_fixed(space, name, fixed_n, plan_seed(seed, "fixed", name)))
        out.append(grid)
    return out


def execute_plans(
    plans: Sequence[RunPlan],
    adapter: ExperimentAdapter,
    store: RunStore,
    settings: RunSettings,
) -> list[ExecutionResult]:
    results = []
    for plan in plans:
        result = execute_plan(plan, adapter, settings.parallelism, store)
        if settings.verify_k:
            verify_determinism(plan, adapter, settings.verify_k, records=result.records, seed=plan.seed)
        results.append(result)
    ids = [run_id_for(adapter.experiment_id, plan, cell) for plan in plans for cell in plan.cells]
    store.rewrite(ids)
    return results


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _run(
    adapter: ExperimentAdapter,
    plans: list[RunPlan],
    settings: RunSettings,
    store: RunStore | None,
    strategy: str,
) -> InvestigationReport:
    store = store if store is not None else RunStore()
    started = _now()
    execute_plans(plans, adapter, store, settings)
    metadata = {
        "strategy": strategy,
        "adapter_config": dict(adapter.config),
        "parallelism": settings.parallelism,
        "allow_missing": settings.allow_missing,
        "started": started,
        "finished": _now(),
        "environment": environment_fingerprint(adapter.experiment_id),
        "seed_derivation": "plan seed = stable_hash('plan', master_seed, strategy, factor)",
    }
    if strategy == "comparison":
        metadata["fixed_budget"] = settings.fixed_budget
        metadata["fixed_mitigated_configuration"] = "sampled independently per factor"
    return summarize(
        store,
        plans,
        experiment_id=adapter.experiment_id,
        metric_name=adapter.metric_name,
        allow_missing=settings.allow_missing,
        master_seed=settings.master_seed,
        metadata=metadata,
    )


def run_investigation(
    adapter: ExperimentAdapter,
    space: FactorSpace,
    factors: Sequence[str] | None = None,
    settings: RunSettings | None = None,
    store: RunStore | None = None,
) -> InvestigationReport:
    settings = settings or RunSettings()
    return _run(adapter, investigation_plans(space, factors, settings), settings, store, "interactions")


def run_strategy_comparison(
    adapter: ExperimentAdapter,
    space: FactorSpace,
    factors: Sequence[str] | None = None,
    settings: RunSettings | None = None,
    store: RunStore | None = None,
) -> InvestigationReport:
    settings = settings or RunSettings()
    return _run(adapter, comparison_plans(space, factors, settings), settings, store, "comparison")


@dataclass(frozen=True)
class AblationResult:
    columns: list[AblationColumn]
    reports: dict[tuple[int, str], list[InvestigationReport]]


def run_ablation(
    adapter_for: Callable[[str], ExperimentAdapter],
    space: FactorSpace,
    m_values: Sequence[int],
    eval_sizes: Sequence[str],
    factors: Sequence[str] | None = None,
    settings: RunSettings | None = None,
    repetitions: int = 1,
    directory: str | os.PathLike | None = None,
) -> AblationResult:
    """Investigation over every (M, eval size) pair, medians over repetitions.

    ``adapter_for(eval_size)`` builds the adapter for one evaluation size.
    Repetition r uses master seed ``repetition_seed(settings.master_seed, r)``
    at every setting. L follows the N x M rule per setting unless fixed in
    ``settings``. With ``directory`` each setting and repetition keeps its
    own store, so runs resume and never mix across evaluation sizes.
    """
    settings = settings or RunSettings()
    if not m_values or not eval_sizes:
        raise ConfigError("ablation needs at least one M value and one eval size")
    if repetitions < 1:
        raise ConfigError("repetitions must be at least 1")
    adapters = {size: adapter_for(size) for size in eval_sizes}
    columns, reports = [], {}
    for size in eval_sizes:
        for m in m_values:
            per_rep = []
            for rep in range(repetitions):
                rep_settings = RunSettings(
                    n=settings.n, m=m, l=settings.l, master_seed=repetition_seed(settings.master_seed, rep),
                    parallelism=settings.parallelism, allow_missing=settings.allow_missing,
                    allow_exhaustive=settings.allow_exhaustive, verify_k=settings.verify_k,
                )
                store = None
                if directory is not None:
                    sub = Path(directory) / f"M={m}_eval={size.replace('%', 'pct')}" / f"rep{rep}"
                    store = RunStore(sub / "records.jsonl")
                per_rep.append(run_investigation(adapters[size], space, factors, rep_settings, store))
            reports[(m, size)] = per_rep
            columns.append(ablation_column(m, size, per_rep))
    return AblationResult(columns, reports)
