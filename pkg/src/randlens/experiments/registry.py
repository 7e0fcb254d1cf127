"""Build adapters by name from string parameters (config files, CLI flags)."""

from __future__ import annotations

import dataclasses
from dataclasses import replace
from typing import Any, Mapping

from ..errors import ConfigError, UnknownExperiment
from ..executor import ExperimentAdapter
from ..factor_space import FactorSpace
from .data import SyntheticDatasetSpec
from .synthetic import SyntheticOracle, SyntheticOracleSpec
from .toy import FINETUNE_FACTORS, ICL_FACTORS, ToyExperimentConfig, ToyFinetune, ToyICL, _ToyAdapter

BUILTIN_EXPERIMENTS = ("synthetic", "toy_finetune", "toy_icl")
DEFAULT_FACTORS: dict[str, tuple[str, ...]] = {"toy_finetune": FINETUNE_FACTORS, "toy_icl": ICL_FACTORS}
#: synthetic oracle defaults when no effects are configured
DEFAULT_EFFECT_STD = 1.0
DEFAULT_NOISE_STD = 0.1

_DATASET_KEYS = {"n_classes", "n_samples", "dim", "separation", "class_scale", "dataset_seed"}


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if key == "class_scale" and "," in text:
            return tuple(float(v) for v in text.split(","))
        if key == "eval_size":
            return None if text.lower() in ("", "none", "all") else int(text)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {key!r}") from exc


def toy_config(
    params: Mapping[str, Any] | None = None, base: ToyExperimentConfig | None = None
) -> ToyExperimentConfig:
    """``base`` with flat-key overrides; dataset keys are mixed in by name."""
    params = dict(params or {})
    base = base or ToyExperimentConfig()
    ds_fields = {f.name: getattr(base.dataset, f.name) for f in dataclasses.fields(SyntheticDatasetSpec)}
    cfg_fields = {f.name: getattr(base, f.name) for f in dataclasses.fields(ToyExperimentConfig) if f.name != "dataset"}
    ds_kw, cfg_kw = {}, {}
    for key, raw in params.items():
        if key in _DATASET_KEYS:
            name = "seed" if key == "dataset_seed" else key
            ds_kw[name] = _coerce(key, raw, ds_fields[name])
        elif key in cfg_fields:
            cfg_kw[key] = _coerce(key, raw, cfg_fields[key])
        else:
            raise ConfigError(f"unknown toy experiment parameter {key!r}")
    return replace(base, dataset=replace(base.dataset, **ds_kw), **cfg_kw)


def _parse_effects(raw: Any) -> dict[str, Any]:
    if isinstance(raw, Mapping):
        return dict(raw)
    effects: dict[str, Any] = {}
    for item in str(raw).split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"effects entry {item!r} is not name=std")
        try:
            effects[name.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad effect std {value!r} for {name!r}") from exc
    return effects


def synthetic_spec(params: Mapping[str, Any] | None, space: FactorSpace | None) -> SyntheticOracleSpec:
    params = dict(params or {})
    allowed = {"base", "effects", "gamma", "noise_std"}
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown synthetic parameter(s) {sorted(unknown)}")
    if "effects" in params:
        effects = _parse_effects(params["effects"])
    elif space is not None:
        effects = {name: DEFAULT_EFFECT_STD for name in space.names}
    else:
        effects = {}
    try:
        return SyntheticOracleSpec(
            base=float(params.get("base", 0.0)),
            effects=effects,
            gamma=float(params.get("gamma", 0.0)),
            noise_std=float(params.get("noise_std", DEFAULT_NOISE_STD)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad synthetic parameter: {exc}") from exc


def make_adapter(
    name: str, params: Mapping[str, Any] | None = None, space: FactorSpace | None = None
) -> ExperimentAdapter:
    if name == "synthetic":
        return SyntheticOracle(synthetic_spec(params, space), space)
    if name == "toy_finetune":
        adapter: ExperimentAdapter = ToyFinetune(toy_config(params, ToyFinetune.default_config))
    elif name == "toy_icl":
        adapter = ToyICL(toy_config(params, ToyICL.default_config))
    else:
        raise UnknownExperiment(f"unknown experiment {name!r}; built-ins are {', '.join(BUILTIN_EXPERIMENTS)}")
    if space is not None:
        extra = [f for f in space.names if f not in DEFAULT_FACTORS[name]]
        if extra:
            raise ConfigError(f"{name} does not consume factor(s) {extra}; it knows {list(DEFAULT_FACTORS[name])}")
    return adapter


def parse_eval_size(spec: str | int | float) -> tuple[str, float | int | None]:
    """``"10%"`` -> fraction 0.1, ``"500"`` -> 500 samples, ``"100%"`` -> whole test split."""
    text = str(spec).strip()
    try:
        if text.endswith("%"):
            frac = float(text[:-1]) / 100
            if not 0 < frac <= 1:
                raise ConfigError(f"eval fraction {text} must lie in (0%, 100%]")
            return text, (None if frac == 1 else frac)
        count = int(text)
    except ValueError as exc:
        raise ConfigError(f"eval size {spec!r} is neither a percentage nor a count") from exc
    if count < 1:
        raise ConfigError("eval size must be positive")
    return text, count


def with_eval_size(adapter: ExperimentAdapter, spec: str | int) -> ExperimentAdapter:
    """Copy of a toy adapter evaluating on a capped test subset."""
    _, size = parse_eval_size(spec)
    if not isinstance(adapter, _ToyAdapter):
        if size is None:
            return adapter
        raise ConfigError(f"experiment {adapter.experiment_id!r} has no evaluation set to resize")
    cfg = adapter.cfg
    if size is None:
        new = replace(cfg, eval_size=None)
    elif isinstance(size, float):
        new = cfg.with_eval_fraction(size)
    else:
        if size > cfg.n_test:
            raise ConfigError(f"eval size {size} exceeds the {cfg.n_test}-sample test split")
        new = replace(cfg, eval_size=size)
    return type(adapter)(new, adapter.experiment_id)
