"""Randomness factors, their configuration sets, and assignments.

A configuration is an opaque integer index ``0 <= k < cardinality``; what the
index means (a seed, a permutation, a subset) is decided by the experiment
adapter. Cross products of configuration sets are never materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateFactorName,
    FewerThanTwoFactors,
    IndexOutOfBounds,
    UnknownFactor,
    ZeroCardinality,
)

#: Cardinality used for factors whose configuration count cannot be
#: enumerated (e.g. permutations of the training set).
UNBOUNDED = 2**32

#: Products of cardinalities saturate here; ``SpaceSize.saturated`` is set.
MAX_COUNT = 2**63 - 1


@dataclass(frozen=True)
class Factor:
    name: str
    cardinality: int

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("factor name must be a non-empty string")
        if int(self.cardinality) < 1:
            raise ZeroCardinality(f"factor {self.name!r} needs at least one configuration")

    @property
    def unbounded(self) -> bool:
        return self.cardinality >= UNBOUNDED


@dataclass(frozen=True)
class SpaceSize:
    """Size of a cross product of configuration sets, saturating at MAX_COUNT."""

    count: int
    saturated: bool = False

    def __int__(self) -> int:
        return self.count

    def __eq__(self, other: object) -> bool:
        if isinstance(other, SpaceSize):
            return (self.count, self.saturated) == (other.count, other.saturated)
        if isinstance(other, int):
            return not self.saturated and self.count == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.count, self.saturated))


def _product(cards: Iterable[int]) -> SpaceSize:
    total = math.prod(cards)
    if total > MAX_COUNT:
        return SpaceSize(MAX_COUNT, True)
    return SpaceSize(total)


@dataclass(frozen=True)
class Assignment:
    """One configuration index per factor, in the owning space's factor order."""

    items: tuple[tuple[str, int], ...]

    @classmethod
    def from_mapping(cls, space: "FactorSpace", entries: Mapping[str, int]) -> "Assignment":
        space.check_partial(entries)
        missing = [f.name for f in space.factors if f.name not in entries]
        if missing:
            raise UnknownFactor(f"assignment lacks factors: {', '.join(missing)}")
        return cls(tuple((f.name, int(entries[f.name])) for f in space.factors))

    def __getitem__(self, name: str) -> int:
        for key, value in self.items:
            if key == name:
                return value
        raise UnknownFactor(f"no factor named {name!r} in assignment")

    def __iter__(self) -> Iterator[str]:
        return (k for k, _ in self.items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.items)

    def as_dict(self) -> dict[str, int]:
        return dict(self.items)

    def without(self, name: str) -> tuple[tuple[str, int], ...]:
        """The assignment with one factor projected out (used as a row key)."""
        return tuple(item for item in self.items if item[0] != name)

    def replace(self, **changes: int) -> "Assignment":
        unknown = set(changes) - set(self)
        if unknown:
            raise UnknownFactor(f"unknown factors: {sorted(unknown)}")
        return Assignment(tuple((k, int(changes.get(k, v))) for k, v in self.items))


@dataclass(frozen=True)
class FactorSpace:
    factors: tuple[Factor, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.factors]
        seen: set[str] = set()
        for name in names:
            if name in seen:
                raise DuplicateFactorName(f"factor {name!r} declared twice")
            seen.add(name)
        if len(self.factors) < 2:
            raise FewerThanTwoFactors("an investigation needs at least two factors")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def k(self) -> int:
        return len(self.factors)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def factor(self, name: str) -> Factor:
        for f in self.factors:
            if f.name == name:
                return f
        raise UnknownFactor(f"no factor named {name!r}")

    def cardinality(self, name: str) -> int:
        return self.factor(name).cardinality

    def golden_size(self) -> SpaceSize:
        return _product(f.cardinality for f in self.factors)

    def check_partial(self, entries: Mapping[str, int]) -> None:
        for name, index in entries.items():
            card = self.factor(name).cardinality
            if not 0 <= int(index) < card:
                raise IndexOutOfBounds(
                    f"index {index} out of bounds for {name!r} (cardinality {card})"
                )

    def to_dict(self) -> dict[str, int]:
        return {f.name: f.cardinality for f in self.factors}


def build_factor_space(specs: Sequence[tuple[str, int]]) -> FactorSpace:
    """Build a space from ``(name, cardinality)`` pairs, keeping their order."""
    if not specs:
        raise FewerThanTwoFactors("no factors given")
    return FactorSpace(tuple(Factor(name, int(card)) for name, card in specs))


def mitigated_space_size(space: FactorSpace, investigated: str) -> SpaceSize:
    """Number of joint configurations of every factor except ``investigated``."""
    space.factor(investigated)
    return _product(f.cardinality for f in space.factors if f.name != investigated)


def sample_assignment(
    space: FactorSpace,
    fixed: Mapping[str, int] | None,
    rng: np.random.Generator,
) -> Assignment:
    """Draw uniform indices for every factor not pinned in ``fixed``.

    Draws happen in factor order and consume the generator only for unfixed
    factors, so the result is a pure function of the inputs and the generator
    state.
    """
    fixed = dict(fixed or {})
    space.check_partial(fixed)
    items = []
    for f in space.factors:
        if f.name in fixed:
            items.append((f.name, int(fixed[f.name])))
        else:
            items.append((f.name, int(rng.integers(0, f.cardinality))))
    return Assignment(tuple(items))


def parse_cardinality(value: str | int) -> int:
    if isinstance(value, int):
        return value
    text = value.strip().lower()
    if text in {"unbounded", "inf", "infinite"}:
        return UNBOUNDED
    return int(text)
