"""Variance attribution over executed run grids.

All standard deviations use the sample estimator (n - 1 denominator). The
contributed std is the arithmetic mean of the per-row stds; the mitigated std
is the std of the per-row means.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ImportanceUndefined,
    IncompletePlan,
    RaggedGrid,
    TooFewColumns,
    TooFewRows,
    TooFewValues,
)

#: Baseline strategies call a factor important at this fraction of gm_std.
BASELINE_THRESHOLD = 0.5
#: Minimum share of successful cells before a grid with failures is analysed.
MIN_COMPLETENESS = 0.95


def _std_rows(arr: np.ndarray) -> np.ndarray:
    # Constant rows are exactly 0; the two-pass formula leaves rounding residue
    # (e.g. 200 copies of 0.81), which would make a degenerate golden set look
    # non-degenerate.
    stds = np.std(arr, axis=-1, ddof=1)
    return np.where(np.ptp(arr, axis=-1) == 0, 0.0, stds)


def sample_std(values: Iterable[float]) -> float:
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 2:
        raise TooFewValues(f"std needs at least 2 values, got {arr.size}")
    return float(_std_rows(arr))


def partial_stats(row: Sequence[float]) -> tuple[float, float]:
    """(mean, std) of one mitigation row."""
    if len(row) < 2:
        raise TooFewValues(f"a row needs at least 2 values, got {len(row)}")
    arr = np.asarray(row, dtype=float)
    return float(arr.mean()), float(_std_rows(arr))


@dataclass(frozen=True)
class GridResult:
    """Metric matrix of an interactions plan: rows are mitigated assignments."""

    values: tuple[tuple[float, ...], ...]
    metric_name: str = "metric"
    provenance: Mapping[str, Any] = field(default_factory=dict)
    dropped_rows: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.values), (len(self.values[0]) if self.values else 0)

    def flat(self) -> list[float]:
        return [v for row in self.values for v in row]

    @classmethod
    def from_records(
        cls,
        records: Iterable[Any],
        n_rows: int,
        n_cols: int,
        *,
        allow_missing: bool = False,
        min_completeness: float = MIN_COMPLETENESS,
        metric_name: str = "metric",
        provenance: Mapping[str, Any] | None = None,
    ) -> "GridResult":
        """Arrange successful run records into the grid, dropping incomplete rows.

        Without ``allow_missing`` any missing cell is an error. With it, grids
        whose successful share is at least ``min_completeness`` keep only their
        complete rows.
        """
        cells: dict[tuple[int, int], float] = {}
        for rec in records:
            if rec.ok:
                cells[(rec.row, rec.col)] = rec.metric
        total = n_rows * n_cols
        missing = total - len(cells)
        if missing and not allow_missing:
            raise IncompletePlan(f"{missing} of {total} runs missing or failed")
        if missing and len(cells) < min_completeness * total:
            raise IncompletePlan(
                f"only {len(cells)} of {total} runs succeeded (need {min_completeness:.0%})"
            )
        rows = []
        for r in range(n_rows):
            line = [cells.get((r, c)) for c in range(n_cols)]
            if all(v is not None for v in line):
                rows.append(tuple(line))
        return cls(tuple(rows), metric_name, dict(provenance or {}), n_rows - len(rows))


def decompose_matrix(grid: Sequence[Sequence[float]]) -> tuple[float, float, list[tuple[float, float]]]:
    """(c_std, m_std, [(p_mean, p_std) per row]) of a rectangular grid."""
    if len(grid) < 2:
        raise TooFewRows(f"need at least 2 mitigation rows, got {len(grid)}")
    width = len(grid[0])
    if any(len(row) != width for row in grid):
        raise RaggedGrid("all rows must have the same number of runs")
    if width < 2:
        raise TooFewColumns(f"need at least 2 investigation runs, got {width}")
    arr = np.asarray(grid, dtype=float)
    means = arr.mean(axis=1)
    stds = _std_rows(arr)
    c_std = float(stds.mean())
    m_std = float(_std_rows(means))
    return c_std, m_std, [(float(a), float(b)) for a, b in zip(means, stds)]


def decompose(grid: GridResult) -> tuple[float, float, list[tuple[float, float]]]:
    return decompose_matrix(grid.values)


@dataclass(frozen=True)
class ImportanceScore:
    score: float
    important: bool

    def __float__(self) -> float:
        return self.score


def importance(c_std: float, m_std: float, gm_std: float) -> ImportanceScore:
    """Share of the golden std the factor contributes beyond all other factors."""
    if not gm_std > 0:
        raise ImportanceUndefined(f"golden model std is {gm_std}; importance undefined")
    score = (c_std - m_std) / gm_std
    return ImportanceScore(score, score > 0)


def golden_std(records_or_values: Iterable[Any]) -> tuple[float, float]:
    """(gm_std, gm_mean) over golden runs; accepts records or raw metrics."""
    values = []
    for item in records_or_values:
        if hasattr(item, "metric"):
            if item.ok:
                values.append(item.metric)
        else:
            values.append(float(item))
    std = sample_std(values)
    return std, float(np.mean(values))


def baseline_verdict(observed_std: float, gm_std: float, threshold: float = BASELINE_THRESHOLD) -> bool:
    """Random/Fixed rule: important when the std reaches ``threshold`` x gm_std."""
    return observed_std >= threshold * gm_std


@dataclass(frozen=True)
class DecompositionResult:
    factor: str
    c_std: float
    m_std: float
    gm_std: float
    importance: float | None  # None when gm_std == 0
    mean: float
    std: float  # std over every run of the factor's grid
    n: int
    m: int
    l: int
    gm_mean: float = math.nan
    dropped_rows: int = 0

    @property
    def important(self) -> bool:
        return self.importance is not None and self.importance > 0

    def recompute_importance(self) -> float:
        return importance(self.c_std, self.m_std, self.gm_std).score

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "DecompositionResult":
        return cls(**doc)


def decomposition_result(
    factor: str,
    grid: GridResult,
    gm_std: float,
    l: int,
    gm_mean: float = math.nan,
) -> DecompositionResult:
    c_std, m_std, _ = decompose(grid)
    try:
        score: float | None = importance(c_std, m_std, gm_std).score
    except ImportanceUndefined:
        score = None
    flat = grid.flat()
    n_rows, n_cols = grid.shape
    return DecompositionResult(
        factor=factor,
        c_std=c_std,
        m_std=m_std,
        gm_std=gm_std,
        importance=score,
        mean=float(np.mean(flat)),
        std=sample_std(flat),
        n=n_cols,
        m=n_rows + grid.dropped_rows,
        l=l,
        gm_mean=gm_mean,
        dropped_rows=grid.dropped_rows,
    )


# --- strategy comparison ----------------------------------------------------

OVERESTIMATED = "overestimated"
UNDERESTIMATED = "underestimated"


@dataclass(frozen=True)
class StrategyRow:
    """One factor's results under every strategy, as input to a comparison."""

    factor: str
    gm_std: float
    random_std: float | None = None
    fixed_std: float | None = None
    interactions_std: float | None = None
    interactions_importance: float | None = None
    interactions_important: bool | None = None  # overrides the importance sign

    @property
    def interactions_verdict(self) -> bool | None:
        if self.interactions_important is not None:
            return self.interactions_important
        if self.interactions_importance is None:
            return None
        return self.interactions_importance > 0


@dataclass(frozen=True)
class StrategyCell:
    factor: str
    strategy: str
    value: float
    important: bool
    flag: str | None = None


def compare_strategies(
    rows: Sequence[StrategyRow], threshold: float = BASELINE_THRESHOLD
) -> list[StrategyCell]:
    """Verdict per factor x strategy, flagging baselines that disagree with Interactions.

    A baseline calling a factor important when Interactions does not is an
    overestimate; the reverse is an underestimate.
    """
    out = []
    for row in rows:
        reference = row.interactions_verdict
        for strategy, value in (("random", row.random_std), ("fixed", row.fixed_std)):
            if value is None:
                continue
            verdict = baseline_verdict(value, row.gm_std, threshold)
            flag = None
            if reference is not None and verdict != reference:
                flag = OVERESTIMATED if verdict else UNDERESTIMATED
            out.append(StrategyCell(row.factor, strategy, value, verdict, flag))
        if reference is not None:
            value = row.interactions_std if row.interactions_std is not None else math.nan
            out.append(StrategyCell(row.factor, "interactions", value, reference))
    return out
