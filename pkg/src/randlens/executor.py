"""Execute run plans against an experiment adapter.

Every run gets a seed bundle derived only from the experiment id and its
assignment, so a run's metric never depends on scheduling, parallelism or
which plan it belongs to. Records go to an append-only JSONL store that is
also the unit of resume.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import AdapterError, ConfigError, NonDeterministicAdapter, StoreError
from .factor_space import Assignment
from .hashing import stable_hash, stable_hex
from .planner import Cell, RunPlan

log = logging.getLogger(__name__)

RECORD_FORMAT_VERSION = 1
PARALLELISM_ENV = "RANDLENS_PARALLELISM"


@dataclass(frozen=True)
class SeedBundle:
    factor_seeds: Mapping[str, int]
    master: int

    def __getitem__(self, name: str) -> int:
        return self.factor_seeds[name]

    def rng(self, name: str) -> np.random.Generator:
        """Generator keyed by one factor's configuration seed."""
        return np.random.default_rng(self.factor_seeds[name])

    def to_json(self) -> dict[str, Any]:
        return {"factors": dict(self.factor_seeds), "master": self.master}


def factor_seed(experiment_id: str, factor: str, index: int) -> int:
    return stable_hash("factor", experiment_id, factor, int(index))


def derive_seed_bundle(experiment_id: str, assignment: Assignment) -> SeedBundle:
    """One 64-bit seed per factor configuration plus a master seed over all of them."""
    seeds = {name: factor_seed(experiment_id, name, idx) for name, idx in assignment.items}
    master = stable_hash("master", experiment_id, [seeds[name] for name, _ in assignment.items])
    return SeedBundle(seeds, master)


class ExperimentAdapter(ABC):
    """A stochastic training/evaluation procedure made deterministic by its seeds.

    ``evaluate`` must be a pure function of the assignment and seed bundle:
    all randomness has to flow from the bundle. Adapters that cannot be
    invoked from several threads at once set ``thread_safe = False``.
    """

    experiment_id: str = "experiment"
    metric_name: str = "metric"
    metric_range: tuple[float, float] = (-math.inf, math.inf)
    thread_safe: bool = True

    @property
    def config(self) -> Mapping[str, Any]:
        return {}

    @abstractmethod
    def evaluate(self, assignment: Assignment, seeds: SeedBundle) -> float: ...


def evaluate_assignment(adapter: ExperimentAdapter, assignment: Assignment) -> float:
    """Run one evaluation and enforce the metric contract."""
    seeds = derive_seed_bundle(adapter.experiment_id, assignment)
    try:
        value = adapter.evaluate(assignment, seeds)
    except AdapterError:
        raise
    except Exception as exc:
        raise AdapterError(f"adapter raised {type(exc).__name__}: {exc}") from exc
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise AdapterError(f"adapter returned non-numeric metric {value!r}") from exc
    if not math.isfinite(value):
        raise AdapterError(f"adapter returned non-finite metric {value!r}")
    lo, hi = adapter.metric_range
    if not lo <= value <= hi:
        raise AdapterError(f"metric {value} outside declared range [{lo}, {hi}]")
    return value


def run_id_for(experiment_id: str, plan: RunPlan, cell: Cell) -> str:
    return stable_hex(
        "run",
        experiment_id,
        plan.seed,
        plan.strategy,
        plan.investigated,
        cell.row,
        cell.col,
        list(cell.assignment.items),
    )


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    experiment_id: str
    strategy: str
    factor: str | None
    plan_seed: int
    row: int
    col: int
    assignment: Assignment
    master_seed: int
    metric: float | None
    status: str = "ok"  # "ok" or "failed"
    error: str | None = None
    duration_s: float = 0.0
    timestamp: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict[str, Any]:
        # Key order is part of the file format.
        return {
            "format_version": RECORD_FORMAT_VERSION,
            "run_id": self.run_id,
            "experiment_id": self.experiment_id,
            "strategy": self.strategy,
            "factor": self.factor,
            "plan_seed": self.plan_seed,
            "row": self.row,
            "col": self.col,
            "assignment": [[k, v] for k, v in self.assignment.items],
            "master_seed": self.master_seed,
            "metric": self.metric,
            "status": self.status,
            "error": self.error,
            "duration_s": self.duration_s,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "RunRecord":
        if doc.get("format_version") != RECORD_FORMAT_VERSION:
            raise StoreError(f"unsupported record format {doc.get('format_version')!r}")
        return cls(
            run_id=doc["run_id"],
            experiment_id=doc["experiment_id"],
            strategy=doc["strategy"],
            factor=doc["factor"],
            plan_seed=int(doc["plan_seed"]),
            row=int(doc["row"]),
            col=int(doc["col"]),
            assignment=Assignment(tuple((k, int(v)) for k, v in doc["assignment"])),
            master_seed=int(doc["master_seed"]),
            metric=None if doc["metric"] is None else float(doc["metric"]),
            status=doc["status"],
            error=doc.get("error"),
            duration_s=float(doc.get("duration_s", 0.0)),
            timestamp=float(doc.get("timestamp", 0.0)),
        )

    def stable_view(self) -> dict[str, Any]:
        """The record without timing fields, for reproducibility comparisons."""
        doc = self.to_json()
        doc.pop("duration_s")
        doc.pop("timestamp")
        return doc


class RunStore:
    """Append-only JSONL file of run records.

    A later line for the same run id supersedes an earlier one, so failed runs
    can be retried. A truncated final line (from a killed process) is ignored.
    ``path=None`` keeps records in memory only.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: dict[str, RunRecord] = {}
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise StoreError(f"cannot create store directory: {exc}") from exc
            if self.path.exists():
                self._load()

    def _load(self) -> None:
        assert self.path is not None
        text = self.path.read_text(encoding="utf-8")
        lines = text.split("\n")
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                rec = RunRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError) as exc:
                if lineno == len(lines) and not text.endswith("\n"):
                    log.warning("ignoring truncated last line of %s", self.path)
                    continue
                raise StoreError(f"{self.path}:{lineno}: corrupt record ({exc})") from exc
            self._records[rec.run_id] = rec
        if text and not text.endswith("\n"):
            # Drop the partial line so the next append starts cleanly.
            keep = text[: text.rfind("\n") + 1]
            self.path.write_text(keep, encoding="utf-8")

    def append(self, record: RunRecord) -> None:
        line = json.dumps(record.to_json(), ensure_ascii=False) + "\n"
        with self._lock:
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(line)
                except OSError as exc:
                    raise StoreError(f"cannot append to {self.path}: {exc}") from exc
            self._records[record.run_id] = record

    def rewrite(self, run_ids: Sequence[str]) -> None:
        """Rewrite the file with the latest record per id, ``run_ids`` first and in order.

        Completion order depends on scheduling, so a canonical order makes
        stores from any execution order byte-comparable up to timing fields. Unlisted records follow in their current order.
        """
        with self._lock:
            missing = [rid for rid in run_ids if rid not in self._records]
            if missing:
                raise StoreError(f"{len(missing)} run ids not in store, e.g. {missing[0]}")
            order = {rid: None for rid in run_ids}
            order.update({rid: None for rid in self._records})
            self._records = {rid: self._records[rid] for rid in order}
            if self.path is None:
                return
            tmp = self.path.with_name(self.path.name + ".tmp")
            try:
                with tmp.open("w", encoding="utf-8") as fh:
                    for rec in self._records.values():
                        fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
                os.replace(tmp, self.path)
            except OSError as exc:
                raise StoreError(f"cannot rewrite {self.path}: {exc}") from exc

    def get(self, run_id: str) -> RunRecord | None:
        return self._records.get(run_id)

    def __contains__(self, run_id: str) -> bool:
        rec = self._records.get(run_id)
        return rec is not None and rec.ok

    def records(self) -> list[RunRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)


@dataclass
class ExecutionResult:
    """Outcome of executing one plan; ``records`` are ordered by (row, col)."""

    plan: RunPlan
    records: list[RunRecord]
    failed: list[RunRecord] = field(default_factory=list)
    new_runs: int = 0

    @property
    def complete(self) -> bool:
        return not self.failed

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def resolve_parallelism(requested: int | None = None) -> int:
    """CLI value, overridden by the RANDLENS_PARALLELISM environment variable."""
    env = os.environ.get(PARALLELISM_ENV)
    if env:
        try:
            requested = int(env)
        except ValueError as exc:
            raise ConfigError(f"{PARALLELISM_ENV} must be an integer, got {env!r}") from exc
    value = 1 if requested is None else int(requested)
    if value < 1:
        raise ConfigError("parallelism must be at least 1")
    return value


def _run_cell(adapter: ExperimentAdapter, plan: RunPlan, cell: Cell, run_id: str) -> RunRecord:
    seeds = derive_seed_bundle(adapter.experiment_id, cell.assignment)
    start = time.perf_counter()
    metric: float | None = None
    status, error = "ok", None
    try:
        metric = evaluate_assignment(adapter, cell.assignment)
    except AdapterError as exc:
        status, error = "failed", str(exc)
    return RunRecord(
        run_id=run_id,
        experiment_id=adapter.experiment_id,
        strategy=plan.strategy,
        factor=plan.investigated,
        plan_seed=plan.seed,
        row=cell.row,
        col=cell.col,
        assignment=cell.assignment,
        master_seed=seeds.master,
        metric=metric,
        status=status,
        error=error,
        duration_s=time.perf_counter() - start,
        timestamp=time.time(),
    )


def execute_plan(
    plan: RunPlan,
    adapter: ExperimentAdapter,
    parallelism: int = 1,
    store: RunStore | None = None,
) -> ExecutionResult:
    """Run every cell not already stored successfully; return records in grid order."""
    if parallelism < 1:
        raise ConfigError("parallelism must be at least 1")
    if not adapter.thread_safe and parallelism > 1:
        log.info("adapter %s is single-threaded; ignoring parallelism=%d", adapter.experiment_id, parallelism)
        parallelism = 1
    store = store if store is not None else RunStore()
    ids = [run_id_for(adapter.experiment_id, plan, cell) for cell in plan.cells]
    pending = [(cell, rid) for cell, rid in zip(plan.cells, ids) if rid not in store]
    new_runs = 0

    if parallelism == 1:
        for cell, rid in pending:
            store.append(_run_cell(adapter, plan, cell, rid))
            new_runs += 1
    elif pending:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            queue = iter(pending)
            running = set()
            for cell, rid in islice(queue, parallelism * 2):
                running.add(pool.submit(_run_cell, adapter, plan, cell, rid))
            while running:
                done, running = wait(running, return_when=FIRST_COMPLETED)
                for fut in done:
                    store.append(fut.result())
                    new_runs += 1
                for cell, rid in islice(queue, len(done)):
                    running.add(pool.submit(_run_cell, adapter, plan, cell, rid))

    ok, failed = [], []
    for rid in ids:
        rec = store.get(rid)
        if rec is None:
            raise StoreError(f"run {rid} missing from store after execution")
        (ok if rec.ok else failed).append(rec)
    if failed:
        log.warning("%d of %d runs failed for %s plan", len(failed), len(ids), plan.strategy)
    return ExecutionResult(plan, ok, failed, new_runs)


@dataclass
class DeterminismReport:
    checked: list[tuple[int, int]]
    mismatches: list[tuple[int, int, float, float]]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def verify_determinism(
    plan: RunPlan,
    adapter: ExperimentAdapter,
    sample_k: int = 5,
    *,
    records: Iterable[RunRecord] | None = None,
    seed: int = 0,
) -> DeterminismReport:
    """Re-run ``sample_k`` random cells and demand bit-identical metrics.

    Each cell is compared against its stored record if ``records`` is given,
    otherwise against a second fresh evaluation.
    """
    known = {}
    if records is not None:
        known = {(r.row, r.col): r.metric for r in records if r.ok}
    rng = np.random.default_rng(seed)
    k = min(sample_k, len(plan.cells))
    chosen = [plan.cells[i] for i in sorted(rng.choice(len(plan.cells), size=k, replace=False))]
    mismatches = []
    for cell in chosen:
        first = known.get((cell.row, cell.col))
        if first is None:
            first = evaluate_assignment(adapter, cell.assignment)
        second = evaluate_assignment(adapter, cell.assignment)
        if first != second:
            mismatches.append((cell.row, cell.col, first, second))
    report = DeterminismReport([(c.row, c.col) for c in chosen], mismatches)
    if mismatches:
        raise NonDeterministicAdapter(
            f"{len(mismatches)} of {k} re-executed cells changed their metric", mismatches
        )
    return report
