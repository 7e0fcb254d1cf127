"""Run plans for the investigation strategies and the golden model.

The interactions plan is an M x N grid: each row pins the non-investigated
factors to one mitigated assignment, each column is one configuration of the
investigated factor. The same N column configurations are reused in every
row, and no two rows share a mitigated assignment.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from .errors import (
    BudgetExhaustedBeforeFirstEstimate,
    ConfigError,
    GoldenSpaceTooSmall,
    MitigatedSpaceTooSmall,
    NotEnoughConfigurations,
    SamplingExhausted,
)
from .factor_space import (
    Assignment,
    FactorSpace,
    Factor,
    mitigated_space_size,
    sample_assignment,
)

if TYPE_CHECKING:
    from .executor import ExperimentAdapter

log = logging.getLogger(__name__)

PLAN_FORMAT_VERSION = 1
STRATEGIES = ("interactions", "fixed", "random", "golden")

#: rejection sampling gives up after this many draws per requested item
RETRY_FACTOR = 100
#: enumerate the space instead of rejecting when it holds at most this many
#: candidates per requested item
EXHAUSTIVE_FACTOR = 10


@dataclass(frozen=True)
class Cell:
    row: int
    col: int
    assignment: Assignment


@dataclass(frozen=True)
class RunPlan:
    strategy: str
    investigated: str | None
    seed: int
    n_rows: int
    n_cols: int
    cells: tuple[Cell, ...]
    space: FactorSpace
    exhaustive: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def analyzable(self) -> bool:
        """Whether the plan has enough runs for a standard deviation."""
        if self.strategy == "interactions":
            return self.n_rows >= 2 and self.n_cols >= 2
        return len(self.cells) >= 2

    @property
    def identity(self) -> tuple[str, str | None, int]:
        return (self.strategy, self.investigated, self.seed)

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": PLAN_FORMAT_VERSION,
            "strategy": self.strategy,
            "factor": self.investigated,
            "seed": self.seed,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "exhaustive": self.exhaustive,
            "space": [[f.name, f.cardinality] for f in self.space.factors],
            "cells": [[c.row, c.col, list(c.assignment.indices)] for c in self.cells],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "RunPlan":
        if doc.get("format_version") != PLAN_FORMAT_VERSION:
            raise ConfigError(f"unsupported plan format {doc.get('format_version')!r}")
        space = FactorSpace(tuple(Factor(n, int(c)) for n, c in doc["space"]))
        names = space.names
        cells = []
        for row, col, indices in doc["cells"]:
            entries = dict(zip(names, indices))
            cells.append(Cell(int(row), int(col), Assignment.from_mapping(space, entries)))
        return cls(
            strategy=doc["strategy"],
            investigated=doc["factor"],
            seed=int(doc["seed"]),
            n_rows=int(doc["n_rows"]),
            n_cols=int(doc["n_cols"]),
            cells=tuple(cells),
            space=space,
            exhaustive=bool(doc.get("exhaustive", False)),
        )


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & ((1 << 64) - 1))


def _distinct_indices(rng: np.random.Generator, population: int, count: int) -> list[int]:
    return [int(v) for v in rng.choice(population, size=count, replace=False)]


def _distinct_tuples(
    rng: np.random.Generator,
    cards: Sequence[int],
    count: int,
    size: int,
    saturated: bool,
) -> list[tuple[int, ...]]:
    """``count`` distinct index tuples from the cross product ``cards``."""
    if not saturated and size <= EXHAUSTIVE_FACTOR * count:
        picks = _distinct_indices(rng, size, count)
        out = []
        for flat in picks:
            digits = []
            for card in reversed(cards):
                flat, digit = divmod(flat, card)
                digits.append(digit)
            out.append(tuple(reversed(digits)))
        return out
    seen: set[tuple[int, ...]] = set()
    out = []
    for _ in range(RETRY_FACTOR * count):
        draw = tuple(int(rng.integers(0, c)) for c in cards)
        if draw not in seen:
            seen.add(draw)
            out.append(draw)
            if len(out) == count:
                return out
    raise SamplingExhausted(
        f"found only {len(out)} distinct configurations in {RETRY_FACTOR * count} draws"
    )


def _check_counts(space: FactorSpace, factor: str, n: int) -> None:
    card = space.cardinality(factor)
    if n > card:
        raise NotEnoughConfigurations(
            f"{factor!r} has {card} configurations, {n} investigation runs requested"
        )
    if n < 1:
        raise ConfigError("need at least one investigation run")


def plan_interactions(
    space: FactorSpace,
    factor: str,
    n: int,
    m: int,
    seed: int,
    *,
    allow_exhaustive: bool = False,
) -> RunPlan:
    """Grid of ``m`` mitigated assignments x ``n`` investigated configurations."""
    _check_counts(space, factor, n)
    if m < 1:
        raise ConfigError("need at least one mitigation run")
    size = mitigated_space_size(space, factor)
    exhaustive = False
    if not size.saturated and m > size.count:
        if not allow_exhaustive:
            raise MitigatedSpaceTooSmall(
                f"only {size.count} mitigated configurations for {factor!r}, {m} requested"
            )
        log.warning("using all %d mitigated configurations for %r instead of %d", size.count, factor, m)
        m = size.count
    if not size.saturated and m == size.count:
        exhaustive = True
    rng = _rng(seed)
    cols = _distinct_indices(rng, space.cardinality(factor), n)
    others = [f for f in space.factors if f.name != factor]
    rows = _distinct_tuples(rng, [f.cardinality for f in others], m, size.count, size.saturated)
    cells = []
    for r, mitigated in enumerate(rows):
        base = dict(zip((f.name for f in others), mitigated))
        for c, index in enumerate(cols):
            base[factor] = index
            cells.append(Cell(r, c, Assignment(tuple((f.name, base[f.name]) for f in space.factors))))
    return RunPlan("interactions", factor, seed, m, n, tuple(cells), space, exhaustive)


def plan_fixed(space: FactorSpace, factor: str, n: int, seed: int) -> RunPlan:
    """One randomly pinned mitigated assignment, ``n`` investigated configurations."""
    _check_counts(space, factor, n)
    rng = _rng(seed)
    cols = _distinct_indices(rng, space.cardinality(factor), n)
    pinned = sample_assignment(space, None, rng)
    cells = tuple(Cell(0, c, pinned.replace(**{factor: idx})) for c, idx in enumerate(cols))
    plan = RunPlan("fixed", factor, seed, 1, n, cells, space)
    if not plan.analyzable:
        log.warning("fixed plan for %r has %d run(s); its std is undefined", factor, n)
    return plan


def plan_random(space: FactorSpace, factor: str | None, count: int, seed: int) -> RunPlan:
    """``count`` fully independent assignments; ``factor`` only labels the plan."""
    if factor is not None:
        space.factor(factor)
    if count < 1:
        raise ConfigError("random plan needs at least one run")
    rng = _rng(seed)
    cells = tuple(Cell(i, 0, sample_assignment(space, None, rng)) for i in range(count))
    plan = RunPlan("random", factor, seed, count, 1, cells, space)
    if not plan.analyzable:
        log.warning("random plan has %d run(s); its std is undefined", count)
    return plan


def plan_golden(space: FactorSpace, l: int, seed: int, *, allow_exhaustive: bool = False) -> RunPlan:
    """``l`` distinct assignments drawn from the full cross product."""
    if l < 1:
        raise ConfigError("golden plan needs at least one run")
    size = space.golden_size()
    exhaustive = False
    if not size.saturated and l > size.count:
        if not allow_exhaustive:
            raise GoldenSpaceTooSmall(f"golden space holds {size.count} configurations, {l} requested")
        log.warning("using the full golden space (%d) instead of %d runs", size.count, l)
        l = size.count
    if not size.saturated and l == size.count:
        exhaustive = True
    rng = _rng(seed)
    draws = _distinct_tuples(rng, [f.cardinality for f in space.factors], l, size.count, size.saturated)
    cells = tuple(Cell(i, 0, Assignment(tuple(zip(space.names, d)))) for i, d in enumerate(draws))
    return RunPlan("golden", None, seed, l, 1, cells, space, exhaustive)


# --- choosing N and M -------------------------------------------------------


@dataclass(frozen=True)
class SelectionStep:
    n: int
    m: int
    c_std: float
    m_std: float
    importance: float
    delta: float | None  # largest absolute change of the three metrics vs. the previous step


@dataclass
class RunCountSelection:
    n_investigation: int
    n_mitigation: int
    n_golden: int
    epsilon: float
    trace: list[SelectionStep] = field(default_factory=list)
    converged: bool = False
    exhausted: bool = False
    runs_used: int = 0


class _Sampler:
    """Grows a set of distinct draws one batch at a time."""

    def __init__(self, rng: np.random.Generator, cards: Sequence[int]):
        self.rng = rng
        self.cards = list(cards)
        self.size = math.prod(self.cards)
        self.seen: set[tuple[int, ...]] = set()
        self.items: list[tuple[int, ...]] = []

    def extend_to(self, count: int) -> bool:
        if count > self.size:
            return False
        tries = 0
        while len(self.items) < count:
            draw = tuple(int(self.rng.integers(0, c)) for c in self.cards)
            tries += 1
            if draw not in self.seen:
                self.seen.add(draw)
                self.items.append(draw)
            elif tries > RETRY_FACTOR * count:
                # Dense space: enumerate what is left instead of rejecting.
                rest = [t for t in itertools.product(*map(range, self.cards)) if t not in self.seen]
                order = self.rng.permutation(len(rest))
                for i in order[: count - len(self.items)]:
                    self.seen.add(rest[i])
                    self.items.append(rest[i])
        return True


def select_run_counts(
    adapter: "ExperimentAdapter",
    space: FactorSpace,
    factor: str,
    epsilon: float,
    start_n: int = 10,
    max_budget: int = 10_000,
    *,
    start_m: int = 2,
    m_step: int = 5,
    n_step: int = 2,
    seed: int = 0,
) -> RunCountSelection:
    """Grow the grid until every decomposition estimate moves by less than ``epsilon``.

    Each step adds ``m_step`` mitigation runs; only when the mitigated space is
    used up does it add ``n_step`` investigation runs instead. Growth reuses
    every run already made. ``max_budget`` bounds the grid runs; the golden
    runs (kept at N*M) come on top.
    """
    from .executor import evaluate_assignment
    from .stats import decompose_matrix, importance, sample_std

    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    if start_n < 2 or start_m < 2:
        raise ConfigError("start_n and start_m must be at least 2")
    if max_budget < start_n * start_m:
        raise BudgetExhaustedBeforeFirstEstimate(
            f"budget {max_budget} is below the first estimate's {start_n * start_m} runs"
        )
    _check_counts(space, factor, start_n)
    rng = _rng(seed)
    others = [f for f in space.factors if f.name != factor]
    cols = _Sampler(rng, [space.cardinality(factor)])
    rows = _Sampler(rng, [f.cardinality for f in others])
    golden = _Sampler(rng, [f.cardinality for f in space.factors])
    if not rows.extend_to(start_m):
        raise MitigatedSpaceTooSmall(f"fewer than {start_m} mitigated configurations")
    cols.extend_to(start_n)

    cache: dict[tuple[int, ...], float] = {}

    def value(indices: tuple[int, ...]) -> float:
        if indices not in cache:
            cache[indices] = evaluate_assignment(adapter, Assignment(tuple(zip(space.names, indices))))
        return cache[indices]

    pos = space.names.index(factor)
    n, m = start_n, start_m
    result = RunCountSelection(n, m, n * m, epsilon)
    prev: SelectionStep | None = None
    while True:
        rows.extend_to(m)
        cols.extend_to(n)
        golden.extend_to(n * m)
        grid = []
        for mitigated in rows.items[:m]:
            line = []
            for (col,) in cols.items[:n]:
                full = list(mitigated)
                full.insert(pos, col)
                line.append(value(tuple(full)))
            grid.append(line)
        c_std, m_std, _ = decompose_matrix(grid)
        gm_std = sample_std([value(g) for g in golden.items[: n * m]])
        score = importance(c_std, m_std, gm_std).score
        delta = None
        if prev is not None:
            delta = max(abs(c_std - prev.c_std), abs(m_std - prev.m_std), abs(score - prev.importance))
        step = SelectionStep(n, m, c_std, m_std, score, delta)
        result.trace.append(step)
        result.n_investigation, result.n_mitigation, result.n_golden = n, m, n * m
        result.runs_used = len(cache)
        if delta is not None and delta < epsilon:
            result.converged = True
            return result
        prev = step
        if m + m_step <= rows.size and n * (m + m_step) <= max_budget:
            m += m_step
        elif n + n_step <= cols.size and (n + n_step) * m <= max_budget:
            n += n_step
        else:
            result.exhausted = True
            log.warning("run-count search stopped at N=%d, M=%d without converging", n, m)
            return result
