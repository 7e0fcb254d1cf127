"""Synthetic oracle with known per-factor effects, and its exact decomposition.

The metric of an assignment is

    base + sum_j effect_j[c_j] + gamma * sum_{j<k} pair_jk(c_j, c_k) + noise_std * eps

where every offset is a deterministic standard-normal draw keyed by the
configuration seeds, so the oracle is a pure function of the assignment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, UnknownFactor
from ..executor import ExperimentAdapter, SeedBundle, derive_seed_bundle
from ..factor_space import Assignment, FactorSpace
from ..hashing import stable_hash, standard_normal

#: analytic_decomposition enumerates at most this many cells
MAX_ENUMERATION = 10**6


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """``effects`` maps a factor to either a std (offsets drawn per configuration)
    or an explicit tuple of per-configuration offsets. Unlisted factors have
    no main effect."""

    base: float = 0.0
    effects: Mapping[str, float | Sequence[float]] = field(default_factory=dict)
    gamma: float = 0.0
    noise_std: float = 0.0
    experiment_id: str = "synthetic"

    def __post_init__(self) -> None:
        if self.gamma < 0 or self.noise_std < 0:
            raise ConfigError("gamma and noise_std must be non-negative")
        for name, effect in self.effects.items():
            if isinstance(effect, (int, float)) and effect < 0:
                raise ConfigError(f"effect std for {name!r} must be non-negative")

    def check_space(self, space: FactorSpace) -> None:
        for name, effect in self.effects.items():
            if name not in space:
                raise UnknownFactor(f"effect given for unknown factor {name!r}")
            if not isinstance(effect, (int, float)) and len(effect) != space.cardinality(name):
                raise ConfigError(
                    f"{name!r} has {space.cardinality(name)} configurations but "
                    f"{len(effect)} explicit offsets"
                )


def _effect(spec: SyntheticOracleSpec, name: str, index: int, seed: int) -> float:
    effect = spec.effects.get(name, 0.0)
    if isinstance(effect, (int, float)):
        if effect == 0:
            return 0.0
        return float(effect) * standard_normal(stable_hash("effect", seed))
    return float(effect[index])


def oracle_value(spec: SyntheticOracleSpec, assignment: Assignment, seeds: SeedBundle) -> float:
    items = assignment.items
    total = spec.base
    for name, index in items:
        total += _effect(spec, name, index, seeds[name])
    if spec.gamma:
        pairs = 0.0
        for (a, _), (b, _) in itertools.combinations(items, 2):
            pairs += standard_normal(stable_hash("pair", seeds[a], seeds[b]))
        total += spec.gamma * pairs
    if spec.noise_std:
        total += spec.noise_std * standard_normal(stable_hash("noise", seeds.master))
    return total


def synthetic_oracle_eval(assignment: Assignment, spec: SyntheticOracleSpec) -> float:
    return oracle_value(spec, assignment, derive_seed_bundle(spec.experiment_id, assignment))


class SyntheticOracle(ExperimentAdapter):
    metric_name = "oracle"

    def __init__(self, spec: SyntheticOracleSpec, space: FactorSpace | None = None):
        if space is not None:
            spec.check_space(space)
        self.spec = spec
        self.experiment_id = spec.experiment_id

    @property
    def config(self):
        return {
            "base": self.spec.base,
            "effects": {k: v if isinstance(v, (int, float)) else list(v) for k, v in self.spec.effects.items()},
            "gamma": self.spec.gamma,
            "noise_std": self.spec.noise_std,
        }

    def evaluate(self, assignment: Assignment, seeds: SeedBundle) -> float:
        return oracle_value(self.spec, assignment, seeds)


# --- exact expectations -----------------------------------------------------


@dataclass(frozen=True)
class AnalyticDecomposition:
    factor: str
    c_std: float
    m_std: float
    gm_std: float
    importance: float


def oracle_tensor(spec: SyntheticOracleSpec, space: FactorSpace) -> np.ndarray:
    """Metric of every assignment in the golden space, axes in factor order."""
    size = space.golden_size()
    if size.saturated or size.count > MAX_ENUMERATION:
        raise ConfigError(f"space of {size.count} cells is too large to enumerate")
    spec.check_space(space)
    shape = tuple(f.cardinality for f in space.factors)
    out = np.empty(shape)
    for idx in itertools.product(*map(range, shape)):
        out[idx] = synthetic_oracle_eval(Assignment(tuple(zip(space.names, idx))), spec)
    return out


def expected_decomposition(
    tensor: np.ndarray, axis: int, n: int | None = None
) -> tuple[float, float, float]:
    """Expected (c_std, m_std, gm_std) of the sampled estimators on ``tensor``.

    Rows (mitigated assignments) and the ``n`` shared columns (configurations
    along ``axis``) are drawn without replacement. Expectations are exact at
    the variance level: sample variances drawn without replacement are
    unbiased for the (size - 1)-denominator population variance, and the
    mitigated variance accounts for averaging over only ``n`` shared columns.
    Stds are square roots of those expected variances (c_std averages the
    per-row roots).
    """
    grid = np.moveaxis(tensor, axis, -1).reshape(-1, tensor.shape[axis])
    p, c = grid.shape
    n = c if n is None else n
    if not 2 <= n <= c or p < 2:
        raise ConfigError("need at least 2 rows and 2 <= n <= cardinality columns")
    c_std = float(np.sqrt(grid.var(axis=1, ddof=1)).mean())
    # deviation of each cell from its column mean over all rows
    dev = grid - grid.mean(axis=0, keepdims=True)
    a = n / c
    b = n * (n - 1) / (c * (c - 1))
    per_row = (a - b) * (dev**2).sum(axis=1) + b * dev.sum(axis=1) ** 2
    m_var = per_row.sum() / ((p - 1) * n * n)
    gm_var = grid.var(ddof=1)
    return c_std, float(np.sqrt(m_var)), float(np.sqrt(gm_var))


def analytic_decomposition(
    spec: SyntheticOracleSpec,
    space: FactorSpace,
    factor: str,
    n: int | None = None,
    *,
    tensor: np.ndarray | None = None,
) -> AnalyticDecomposition:
    """Expected decomposition of ``factor`` by full enumeration of the oracle."""
    axis = space.names.index(space.factor(factor).name)
    if tensor is None:
        tensor = oracle_tensor(spec, space)
    c_std, m_std, gm_std = expected_decomposition(tensor, axis, n)
    return AnalyticDecomposition(factor, c_std, m_std, gm_std, (c_std - m_std) / gm_std)
