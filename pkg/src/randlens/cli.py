"""``randlens`` command line.

Exit codes: 0 success, 1 configuration or usage error, 2 incomplete plan
(failed or missing runs), 3 adapter contract violation.

Settings come from an optional INI-style config file with sections
``[space]`` (factor = cardinality), ``[experiment]`` (name or command, plus
adapter parameters), ``[run]`` and ``[ablation]``; every command-line flag
overrides the matching config key.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import (
    AdapterError,
    ConfigError,
    IncompletePlan,
    MissingGolden,
    NonDeterministicAdapter,
    RandLensError,
)
from .executor import ExperimentAdapter, RunStore, resolve_parallelism
from .experiments.registry import DEFAULT_FACTORS, make_adapter, parse_eval_size, with_eval_size
from .external import DEFAULT_TIMEOUT_S, ExternalCommandAdapter
from .factor_space import UNBOUNDED, FactorSpace, build_factor_space, parse_cardinality
from .planner import select_run_counts
from .report import (
    InvestigationReport,
    render_ablation_table,
    render_comparison_table,
    render_selection_trace,
    write_report_tree,
)
from .workflows import DEFAULT_M, DEFAULT_N, RunSettings, run_ablation, run_investigation, run_strategy_comparison

log = logging.getLogger("randlens")

EXIT_OK, EXIT_CONFIG, EXIT_INCOMPLETE, EXIT_CONTRACT = 0, 1, 2, 3
DEFAULT_OUT = "out"


@dataclass
class CliConfig:
    experiment: str | None = None
    command: str | None = None
    timeout: float = DEFAULT_TIMEOUT_S
    params: dict[str, str] = field(default_factory=dict)
    factors: list[tuple[str, int]] = field(default_factory=list)
    n: int = DEFAULT_N
    m: int = DEFAULT_M
    l: int | None = None
    seed: int = 0
    parallelism: int | None = None
    out: str = DEFAULT_OUT
    allow_missing: bool = False
    verify: int = 0
    fixed_budget: str = "n"
    epsilon: float = 0.01
    max_budget: int = 10_000
    m_values: list[int] = field(default_factory=lambda: [100, 10])
    eval_sizes: list[str] = field(default_factory=lambda: ["100%", "10%"])
    repetitions: int = 1

    @property
    def golden_runs(self) -> int:
        return self.n * self.m if self.l is None else self.l

    @property
    def experiment_id(self) -> str:
        return self.experiment or "external"


def parse_factors(text: str) -> list[tuple[str, int]]:
    """``a,b`` (unbounded cardinalities) or ``a=20,b=unbounded``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, card = item.partition("=")
        out.append((name.strip(), parse_cardinality(card.strip()) if sep else UNBOUNDED))
    if not out:
        raise ConfigError("no factors given")
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


_RUN_KEYS = {
    "n": int, "m": int, "l": int, "seed": int, "parallelism": int, "out": str, "allow_missing": _bool,
    "verify": int, "fixed_budget": str, "epsilon": float, "max_budget": int,
}


def load_config_file(path: str, cfg: CliConfig) -> None:
    # inline comments need a space before the prefix, so "a=1;b" values survive
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # factor names are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = set(parser.sections()) - {"space", "experiment", "run", "ablation"}
    if unknown:
        raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
    if parser.has_section("space"):
        cfg.factors = [(k, parse_cardinality(v.strip())) for k, v in parser.items("space")]
    if parser.has_section("experiment"):
        for key, value in parser.items("experiment"):
            if key == "name":
                cfg.experiment = value.strip()
            elif key == "command":
                cfg.command = value.strip()
            elif key == "timeout":
                cfg.timeout = float(value)
            else:
                cfg.params[key] = value
    if parser.has_section("run"):
        for key, value in parser.items("run"):
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown [run] key {key!r}")
            try:
                setattr(cfg, key, _RUN_KEYS[key](value))
            except ValueError as exc:
                raise ConfigError(f"bad [run] value {key} = {value!r}") from exc
    if parser.has_section("ablation"):
        for key, value in parser.items("ablation"):
            if key == "m_values":
                cfg.m_values = _int_list(value)
            elif key == "eval_sizes":
                cfg.eval_sizes = [v.strip() for v in value.split(",") if v.strip()]
            elif key == "repetitions":
                cfg.repetitions = int(value)
            else:
                raise ConfigError(f"unknown [ablation] key {key!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file with [space] [experiment] [run] [ablation] sections")
    p.add_argument("--experiment", help="built-in experiment: synthetic, toy_finetune, toy_icl")
    p.add_argument("--command", dest="external_command", help="external adapter command (JSON on stdin/stdout)")
    p.add_argument("--timeout", type=float, help="external adapter timeout in seconds")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="adapter parameter (repeatable)")
    p.add_argument("--factors", help="a,b or a=20,b=unbounded")
    p.add_argument("--n", type=int, help=f"investigation runs per mitigation row (default {DEFAULT_N})")
    p.add_argument("--m", type=int, help=f"mitigation rows (default {DEFAULT_M})")
    p.add_argument("--l", type=int, help="golden runs (default N x M)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--parallelism", type=int, help="worker threads; RANDLENS_PARALLELISM overrides")
    p.add_argument("--out", help=f"output root (default {DEFAULT_OUT})")
    p.add_argument("--allow-missing", action="store_true", default=None, help="analyse grids with failed runs")
    p.add_argument("--verify", type=int, help="re-run this many cells per plan to check determinism")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randlens", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("investigate", help="interactions grid per factor plus golden runs")
    _common(p)
    p = sub.add_parser("compare-strategies", help="baseline strategies beside the interactions grid")
    _common(p)
    p.add_argument("--fixed-budget", choices=("n", "nm"), help="runs per factor for Fixed: N (default) or N x M")
    p = sub.add_parser("select-params", help="grow N and M until the estimates settle")
    _common(p)
    p.add_argument("--epsilon", type=float, help="stop once every metric moves less than this")
    p.add_argument("--max-budget", type=int, help="cap on grid runs per factor")
    p = sub.add_parser("ablate", help="investigation over M values x eval-set sizes")
    _common(p)
    p.add_argument("--m-values", help="comma-separated M values (default 100,10)")
    p.add_argument("--eval-sizes", help="comma-separated sizes, as percentages or counts (default 100%%,10%%)")
    p.add_argument("--repetitions", type=int, help="meta-repetitions per setting; tables report medians")
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig()
    if args.config:
        load_config_file(args.config, cfg)
    if args.experiment:
        cfg.experiment = args.experiment
    if args.external_command:
        cfg.command = args.external_command
    if args.timeout is not None:
        cfg.timeout = args.timeout
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.params[key.strip()] = value
    if args.factors:
        cfg.factors = parse_factors(args.factors)
    for key in ("n", "m", "l", "seed", "parallelism", "out", "verify"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if args.allow_missing:
        cfg.allow_missing = True
    for key in ("fixed_budget", "epsilon", "max_budget", "repetitions"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "m_values", None):
        cfg.m_values = _int_list(args.m_values)
    if getattr(args, "eval_sizes", None):
        cfg.eval_sizes = [v.strip() for v in args.eval_sizes.split(",") if v.strip()]
    if cfg.experiment and cfg.command:
        raise ConfigError("give either a built-in experiment or an external command, not both")
    if not cfg.experiment and not cfg.command:
        raise ConfigError("no experiment selected (use --experiment or --command)")
    return cfg


def build_space(cfg: CliConfig) -> FactorSpace:
    factors = cfg.factors
    if not factors and cfg.experiment in DEFAULT_FACTORS:
        factors = [(name, UNBOUNDED) for name in DEFAULT_FACTORS[cfg.experiment]]
    if not factors:
        raise ConfigError("no factors given (use --factors or a [space] section)")
    return build_factor_space(factors)


def build_adapter(cfg: CliConfig, space: FactorSpace) -> ExperimentAdapter:
    if cfg.command:
        return ExternalCommandAdapter(cfg.command, timeout=cfg.timeout, config=cfg.params)
    assert cfg.experiment is not None
    return make_adapter(cfg.experiment, cfg.params, space)


def settings_of(cfg: CliConfig) -> RunSettings:
    return RunSettings(
        n=cfg.n, m=cfg.m, l=cfg.l, master_seed=cfg.seed, parallelism=resolve_parallelism(cfg.parallelism),
        allow_missing=cfg.allow_missing, verify_k=cfg.verify, fixed_budget=cfg.fixed_budget,
    )


def _report_out(report: InvestigationReport, directory: Path) -> None:
    paths = write_report_tree(report, directory)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {paths['summary']}")


def _print_summary(report: InvestigationReport) -> None:
    print(f"golden std {report.gm_std:.4f} over L={report.l} runs (N={report.n}, M={report.m})")
    for res in report.results:
        score = "undefined" if res.importance is None else f"{res.importance:.2f}"
        marker = " (*)" if res.important else ""
        print(f"  {res.factor:20s} c_std {res.c_std:.4f}  m_std {res.m_std:.4f}  importance {score}{marker}")


def cmd_investigate(cfg: CliConfig) -> int:
    space = build_space(cfg)
    adapter = build_adapter(cfg, space)
    directory = Path(cfg.out) / adapter.experiment_id
    store = RunStore(directory / "records.jsonl")
    report = run_investigation(adapter, space, None, settings_of(cfg), store)
    _print_summary(report)
    _report_out(report, directory)
    return EXIT_OK


def cmd_compare_strategies(cfg: CliConfig) -> int:
    space = build_space(cfg)
    adapter = build_adapter(cfg, space)
    directory = Path(cfg.out) / adapter.experiment_id
    store = RunStore(directory / "records.jsonl")
    report = run_strategy_comparison(adapter, space, None, settings_of(cfg), store)
    print(render_comparison_table(report, "text"), end="")
    _report_out(report, directory)
    return EXIT_OK


def cmd_select_params(cfg: CliConfig) -> int:
    if not cfg.epsilon > 0:
        raise ConfigError("epsilon must be positive")
    space = build_space(cfg)
    adapter = build_adapter(cfg, space)
    directory = Path(cfg.out) / adapter.experiment_id
    directory.mkdir(parents=True, exist_ok=True)
    selections = {}
    for name in space.names:
        sel = select_run_counts(
            adapter, space, name, cfg.epsilon, start_n=cfg.n, max_budget=cfg.max_budget, seed=cfg.seed
        )
        selections[name] = sel
        state = "converged" if sel.converged else "budget exhausted"
        print(f"{name}: N={sel.n_investigation} M={sel.n_mitigation} L={sel.n_golden} ({state})")
    (directory / "selection.csv").write_text(render_selection_trace(selections), encoding="utf-8")
    doc = {
        "format_version": 1,
        "epsilon": cfg.epsilon,
        "factors": {
            name: {
                "N": s.n_investigation, "M": s.n_mitigation, "L": s.n_golden,
                "converged": s.converged, "runs_used": s.runs_used,
            }
            for name, s in selections.items()
        },
    }
    (directory / "selection.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {directory / 'selection.csv'}")
    return EXIT_OK


def cmd_ablate(cfg: CliConfig) -> int:
    space = build_space(cfg)
    base = build_adapter(cfg, space)
    for size in cfg.eval_sizes:
        parse_eval_size(size)
    directory = Path(cfg.out) / base.experiment_id / "ablation"
    result = run_ablation(
        lambda size: with_eval_size(base, size),
        space,
        cfg.m_values,
        cfg.eval_sizes,
        settings=settings_of(cfg),
        repetitions=cfg.repetitions,
        directory=directory,
    )
    table = render_ablation_table(result.columns)
    (directory / "ablation.csv").write_text(table, encoding="utf-8")
    for (m, size), reports in result.reports.items():
        if len(reports) == 1:
            write_report_tree(reports[0], directory / f"M={m}_eval={size.replace('%', 'pct')}" / "rep0")
    print(table, end="")
    print(f"wrote {directory / 'ablation.csv'}")
    return EXIT_OK


COMMANDS = {
    "investigate": cmd_investigate,
    "compare-strategies": cmd_compare_strategies,
    "select-params": cmd_select_params,
    "ablate": cmd_ablate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2; ours is 1
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.cmd](cfg)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IncompletePlan, MissingGolden) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (NonDeterministicAdapter, AdapterError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except RandLensError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
