"""Built-in experiment adapters and the registry the CLI resolves names against."""

from __future__ import annotations

from .data import SyntheticDatasetSpec, generate_dataset
from .metrics import compute_f1_macro
from .synthetic import (
    AnalyticDecomposition,
    SyntheticOracle,
    SyntheticOracleSpec,
    analytic_decomposition,
    expected_decomposition,
    oracle_tensor,
    synthetic_oracle_eval,
)
from .registry import BUILTIN_EXPERIMENTS, DEFAULT_FACTORS, make_adapter, parse_eval_size, with_eval_size
from .toy import FINETUNE_FACTORS, ICL_FACTORS, ToyExperimentConfig, ToyFinetune, ToyICL

__all__ = [
    "AnalyticDecomposition",
    "BUILTIN_EXPERIMENTS",
    "DEFAULT_FACTORS",
    "FINETUNE_FACTORS",
    "ICL_FACTORS",
    "SyntheticDatasetSpec",
    "SyntheticOracle",
    "SyntheticOracleSpec",
    "ToyExperimentConfig",
    "ToyFinetune",
    "ToyICL",
    "analytic_decomposition",
    "compute_f1_macro",
    "expected_decomposition",
    "generate_dataset",
    "make_adapter",
    "oracle_tensor",
    "parse_eval_size",
    "synthetic_oracle_eval",
    "with_eval_size",
]
