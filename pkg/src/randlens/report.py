"""Join run records to plans, and persist or render the resulting statistics.

Output tree written by :func:`write_report_tree`::

    <out>/<experiment>/records.jsonl   one run record per line
                       summary.csv     one row per investigated factor
                       comparison.csv  only when baseline strategies ran
                       importance.svg  bar chart of importance scores
                       report.json     metadata plus results with run ids

Every file carries a ``format_version`` field. Machine outputs keep full float
precision (``repr``); human-facing text rounds importance to 2 decimals.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import IncompletePlan, MissingGolden, StoreError
from .executor import RunRecord, RunStore, run_id_for
from .planner import RunPlan
from .stats import (
    BASELINE_THRESHOLD,
    MIN_COMPLETENESS,
    OVERESTIMATED,
    UNDERESTIMATED,
    DecompositionResult,
    GridResult,
    StrategyCell,
    StrategyRow,
    compare_strategies,
    decomposition_result,
    golden_std,
    sample_std,
)

REPORT_FORMAT_VERSION = 1
SUMMARY_COLUMNS = ("format_version", "factor", "mean", "std", "c_std", "m_std", "gm_std", "importance", "N", "M", "L")
COMPARISON_COLUMNS = (
    "format_version", "factor", "strategy", "std", "gm_std", "ratio", "important", "marker", "flag",
)
BASELINE_STRATEGIES = ("random", "fixed")
STRATEGY_LABELS = {"random": "Random", "fixed": "Fixed", "interactions": "Interactions"}
FLAG_SHORT = {OVERESTIMATED: "over", UNDERESTIMATED: "under", None: ""}


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("randlens")
    except Exception:  # not installed (source checkout)
        return "unknown"


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def environment_fingerprint(adapter_id: str) -> dict[str, str]:
    """Recorded for provenance; never compared or enforced."""
    return {
        "os": platform.platform(),
        "cpu": _cpu_model(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "randlens": _version(),
        "adapter": adapter_id,
    }


@dataclass(frozen=True)
class BaselineResult:
    """Std of a Random or Fixed plan for one factor."""

    factor: str
    strategy: str
    std: float
    mean: float
    runs: int

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class PlanSummary:
    strategy: str
    factor: str | None
    seed: int
    n_rows: int
    n_cols: int
    run_ids: tuple[str, ...]
    failed: int = 0

    def to_json(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["run_ids"] = list(self.run_ids)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "PlanSummary":
        return cls(
            doc["strategy"], doc["factor"], int(doc["seed"]), int(doc["n_rows"]), int(doc["n_cols"]),
            tuple(doc["run_ids"]), int(doc.get("failed", 0)),
        )


@dataclass
class InvestigationReport:
    experiment_id: str
    metric_name: str
    space: dict[str, int]
    n: int
    m: int
    l: int
    gm_std: float
    gm_mean: float
    results: list[DecompositionResult]
    baselines: list[BaselineResult] = field(default_factory=list)
    plans: list[PlanSummary] = field(default_factory=list)
    master_seed: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    def result(self, factor: str) -> DecompositionResult:
        for res in self.results:
            if res.factor == factor:
                return res
        raise KeyError(factor)

    @property
    def run_ids(self) -> list[str]:
        return [rid for plan in self.plans for rid in plan.run_ids]

    @property
    def total_runs(self) -> int:
        return len(self.run_ids)

    def strategy_rows(self) -> list[StrategyRow]:
        baseline = {(b.factor, b.strategy): b.std for b in self.baselines}
        rows = []
        for res in self.results:
            rows.append(
                StrategyRow(
                    factor=res.factor,
                    gm_std=self.gm_std,
                    random_std=baseline.get((res.factor, "random")),
                    fixed_std=baseline.get((res.factor, "fixed")),
                    interactions_std=res.c_std,
                    interactions_importance=res.importance,
                )
            )
        return rows

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "experiment_id": self.experiment_id,
            "metric_name": self.metric_name,
            "space": dict(self.space),
            "N": self.n,
            "M": self.m,
            "L": self.l,
            "master_seed": self.master_seed,
            "gm_std": self.gm_std,
            "gm_mean": self.gm_mean,
            "results": [r.to_json() for r in self.results],
            "baselines": [b.to_json() for b in self.baselines],
            "plans": [p.to_json() for p in self.plans],
            "metadata": self.metadata,
            "warnings": list(self.warnings),
            "artifacts": dict(self.artifacts),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "InvestigationReport":
        if doc.get("format_version") != REPORT_FORMAT_VERSION:
            raise StoreError(f"unsupported report format {doc.get('format_version')!r}")
        return cls(
            experiment_id=doc["experiment_id"],
            metric_name=doc["metric_name"],
            space={k: int(v) for k, v in doc["space"].items()},
            n=int(doc["N"]),
            m=int(doc["M"]),
            l=int(doc["L"]),
            gm_std=float(doc["gm_std"]),
            gm_mean=float(doc["gm_mean"]),
            results=[DecompositionResult.from_json(r) for r in doc["results"]],
            baselines=[BaselineResult(**b) for b in doc["baselines"]],
            plans=[PlanSummary.from_json(p) for p in doc["plans"]],
            master_seed=doc.get("master_seed"),
            metadata=dict(doc.get("metadata", {})),
            warnings=list(doc.get("warnings", [])),
            artifacts=dict(doc.get("artifacts", {})),
        )


# --- summarize ----------------------------------------------------------------


def _plan_records(
    store: RunStore, experiment_id: str, plan: RunPlan
) -> tuple[list[str], list[RunRecord], int]:
    ids = [run_id_for(experiment_id, plan, cell) for cell in plan.cells]
    found = [store.get(rid) for rid in ids]
    ok = [rec for rec in found if rec is not None and rec.ok]
    return ids, ok, len(ids) - len(ok)


def _check_complete(label: str, total: int, bad: int, allow_missing: bool, min_completeness: float) -> None:
    if bad and not allow_missing:
        raise IncompletePlan(f"{label}: {bad} of {total} runs missing or failed")
    if bad and total - bad < min_completeness * total:
        raise IncompletePlan(
            f"{label}: only {total - bad} of {total} runs succeeded (need {min_completeness:.0%})"
        )


def _infer_experiment(store: RunStore) -> str:
    ids = {rec.experiment_id for rec in store.records()}
    if len(ids) != 1:
        raise StoreError(f"cannot infer experiment id from a store holding {sorted(ids) or 'nothing'}")
    return ids.pop()


def summarize(
    store: RunStore,
    plans: Sequence[RunPlan],
    *,
    experiment_id: str | None = None,
    metric_name: str = "metric",
    allow_missing: bool = False,
    min_completeness: float = MIN_COMPLETENESS,
    master_seed: int | None = None,
    metadata: Mapping[str, Any] | None = None,
) -> InvestigationReport:
    """Build the report for ``plans`` from the records in ``store``.

    Exactly one golden plan is required. Interactions plans become
    decompositions; Random and Fixed plans become baseline stds. With
    ``allow_missing`` an interactions grid loses its incomplete rows and the
    other plans their failed runs, as long as each plan keeps
    ``min_completeness`` of its runs.
    """
    golden = [p for p in plans if p.strategy == "golden"]
    if not golden:
        raise MissingGolden("no golden plan given; importance needs gm_std")
    if len(golden) > 1:
        raise MissingGolden("expected exactly one golden plan")
    if experiment_id is None:
        experiment_id = _infer_experiment(store)

    gplan = golden[0]
    gids, grecs, gbad = _plan_records(store, experiment_id, gplan)
    if not grecs:
        raise MissingGolden("golden plan has no successful runs in the store")
    _check_complete("golden plan", len(gids), gbad, allow_missing, min_completeness)
    gm, gm_mean = golden_std(grecs)

    summaries = [PlanSummary("golden", None, gplan.seed, gplan.n_rows, gplan.n_cols, tuple(gids), gbad)]
    results: list[DecompositionResult] = []
    baselines: list[BaselineResult] = []
    warnings: list[str] = []
    n_values, m_values = set(), set()
    for plan in plans:
        if plan is gplan:
            continue
        ids, recs, bad = _plan_records(store, experiment_id, plan)
        label = f"{plan.strategy} plan for {plan.investigated!r}"
        summaries.append(
            PlanSummary(plan.strategy, plan.investigated, plan.seed, plan.n_rows, plan.n_cols, tuple(ids), bad)
        )
        if plan.strategy == "interactions":
            grid = GridResult.from_records(
                recs, plan.n_rows, plan.n_cols,
                allow_missing=allow_missing, min_completeness=min_completeness, metric_name=metric_name,
            )
            res = decomposition_result(plan.investigated, grid, gm, gplan.n_rows, gm_mean)
            if res.importance is None:
                warnings.append(f"{plan.investigated}: golden std is 0, importance undefined")
            if res.dropped_rows:
                warnings.append(f"{plan.investigated}: dropped {res.dropped_rows} incomplete row(s)")
            results.append(res)
            n_values.add(plan.n_cols)
            m_values.add(plan.n_rows)
        else:
            _check_complete(label, len(ids), bad, allow_missing, min_completeness)
            values = [r.metric for r in recs]
            std = sample_std(values) if len(values) >= 2 else math.nan
            baselines.append(BaselineResult(plan.investigated, plan.strategy, std, float(np.mean(values)), len(values)))
    return InvestigationReport(
        experiment_id=experiment_id,
        metric_name=metric_name,
        space=gplan.space.to_dict(),
        n=max(n_values) if n_values else 0,
        m=max(m_values) if m_values else 0,
        l=gplan.n_rows,
        gm_std=gm,
        gm_mean=gm_mean,
        results=results,
        baselines=baselines,
        plans=summaries,
        master_seed=master_seed,
        metadata=dict(metadata or {}),
        warnings=warnings,
    )


# --- summary CSV ----------------------------------------------------------------


def _num(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def render_summary_csv(report: InvestigationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for res in report.results:
        writer.writerow(
            [
                REPORT_FORMAT_VERSION, res.factor, _num(res.mean), _num(res.std), _num(res.c_std),
                _num(res.m_std), _num(res.gm_std), _num(res.importance), res.n, res.m, res.l,
            ]
        )
    return buf.getvalue()


def parse_summary_csv(text: str) -> list[DecompositionResult]:
    """Inverse of :func:`render_summary_csv` for the columns it writes."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        if int(row["format_version"]) != REPORT_FORMAT_VERSION:
            raise StoreError(f"unsupported summary format {row['format_version']!r}")
        out.append(
            DecompositionResult(
                factor=row["factor"],
                c_std=float(row["c_std"]),
                m_std=float(row["m_std"]),
                gm_std=float(row["gm_std"]),
                importance=float(row["importance"]) if row["importance"] else None,
                mean=float(row["mean"]),
                std=float(row["std"]),
                n=int(row["N"]),
                m=int(row["M"]),
                l=int(row["L"]),
            )
        )
    return out


# --- strategy comparison ------------------------------------------------------------


def _rows_of(source: InvestigationReport | Sequence[StrategyRow]) -> list[StrategyRow]:
    if isinstance(source, InvestigationReport):
        return source.strategy_rows()
    return list(source)


def comparison_cells(
    source: InvestigationReport | Sequence[StrategyRow], threshold: float = BASELINE_THRESHOLD
) -> list[StrategyCell]:
    return compare_strategies(_rows_of(source), threshold)


def render_comparison_table(
    source: InvestigationReport | Sequence[StrategyRow],
    fmt: str = "csv",
    threshold: float = BASELINE_THRESHOLD,
) -> str:
    """Factor x strategy table of stds with importance markers and disagreement flags.

    Random and Fixed are marked ``(*)`` when their std reaches ``threshold`` of
    gm_std; Interactions when its importance is positive (its std column is
    c_std). ``csv`` gives one line per cell at full precision; ``text`` a
    fixed-width grid with flags in brackets.
    """
    rows = _rows_of(source)
    cells = compare_strategies(rows, threshold)
    gm = {row.factor: row.gm_std for row in rows}
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for cell in cells:
            g = gm[cell.factor]
            ratio = cell.value / g if g > 0 and not math.isnan(cell.value) else math.nan
            writer.writerow(
                [
                    REPORT_FORMAT_VERSION, cell.factor, cell.strategy, _num(cell.value), _num(g), _num(ratio),
                    int(cell.important), "(*)" if cell.important else "", cell.flag or "",
                ]
            )
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    strategies = [s for s in ("random", "fixed", "interactions") if any(c.strategy == s for c in cells)]
    by_key = {(c.factor, c.strategy): c for c in cells}
    header = ["factor", "golden"] + [STRATEGY_LABELS[s] for s in strategies]
    body = []
    for row in rows:
        line = [row.factor, f"{row.gm_std:.3f}"]
        for s in strategies:
            cell = by_key.get((row.factor, s))
            if cell is None:
                line.append("-")
                continue
            text = ("(*) " if cell.important else "") + ("nan" if math.isnan(cell.value) else f"{cell.value:.3f}")
            if cell.flag:
                text += f" [{FLAG_SHORT[cell.flag]}]"
            line.append(text)
        body.append(line)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(col.ljust(w) for col, w in zip(r, widths)).rstrip() for r in [header] + body]
    return "\n".join(lines) + "\n"


def parse_comparison_csv(text: str) -> list[StrategyCell]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            StrategyCell(
                factor=row["factor"],
                strategy=row["strategy"],
                value=float(row["std"]) if row["std"] else math.nan,
                important=row["important"] == "1",
                flag=row["flag"] or None,
            )
        )
    return out


# --- importance chart ------------------------------------------------------------

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


def _importance_groups(
    source: InvestigationReport | Mapping[str, Mapping[str, float | None]] | Mapping[str, float | None],
) -> dict[str, dict[str, float | None]]:
    if isinstance(source, InvestigationReport):
        return {source.experiment_id: {r.factor: r.importance for r in source.results}}
    values = list(source.values())
    if values and all(isinstance(v, Mapping) for v in values):
        return {str(k): dict(v) for k, v in source.items()}  # type: ignore[arg-type]
    return {"": dict(source)}  # type: ignore[arg-type]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_importance_chart(
    source: InvestigationReport | Mapping[str, Mapping[str, float | None]] | Mapping[str, float | None],
    title: str = "Importance of randomness factors",
) -> str:
    """Grouped bar chart as a standalone SVG document.

    ``source`` is a report, a mapping factor -> importance, or a mapping
    group -> (factor -> importance) for several experiments side by side.
    Bars are one per factor within each group and colored by factor; the
    zero line is drawn heavier since a positive score means important.
    Undefined scores are drawn as a small cross. Output is a pure function of
    the input: fixed number formatting, no timestamps, stable ordering.
    """
    groups = _importance_groups(source)
    factors: list[str] = []
    for values in groups.values():
        for name in values:
            if name not in factors:
                factors.append(name)
    finite = [v for vals in groups.values() for v in vals.values() if v is not None and math.isfinite(v)]
    hi = max([0.0] + finite)
    lo = min([0.0] + finite)
    span = max(hi - lo, 1e-9)
    hi += 0.1 * span
    lo -= 0.1 * span if lo < 0 else 0.0
    span = hi - lo

    bar_w, gap, group_gap = 22, 4, 28
    left, right, top, bottom = 60, 20, 40, 70
    group_w = len(factors) * (bar_w + gap) - gap
    plot_w = max(len(groups) * (group_w + group_gap) - group_gap, 120)
    plot_h = 240
    legend_h = 18 * len(factors)
    width = left + plot_w + right
    height = top + plot_h + bottom + legend_h

    def y(v: float) -> float:
        return top + (hi - v) / span * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
    ]
    ticks = np.linspace(lo, hi, 6)
    for t in ticks:
        out.append(
            f'<line x1="{left}" y1="{y(t):.2f}" x2="{left + plot_w}" y2="{y(t):.2f}" stroke="#e0e0e0"/>'
        )
        out.append(f'<text x="{left - 6}" y="{y(t) + 4:.2f}" text-anchor="end">{t:.2f}</text>')
    x = left
    for g_index, (group, values) in enumerate(groups.items()):
        for f_index, name in enumerate(factors):
            if name not in values:
                continue
            bx = x + f_index * (bar_w + gap)
            color = _PALETTE[f_index % len(_PALETTE)]
            value = values[name]
            if value is None or not math.isfinite(value):
                cx, cy = bx + bar_w / 2, y(0.0)
                out.append(
                    f'<path d="M{cx - 4:.2f},{cy - 4:.2f} L{cx + 4:.2f},{cy + 4:.2f} '
                    f'M{cx - 4:.2f},{cy + 4:.2f} L{cx + 4:.2f},{cy - 4:.2f}" stroke="{color}" stroke-width="2"/>'
                )
                continue
            y0, y1 = sorted((y(0.0), y(value)))
            out.append(
                f'<rect x="{bx:.2f}" y="{y0:.2f}" width="{bar_w}" height="{max(y1 - y0, 0.5):.2f}" '
                f'fill="{color}"><title>{_esc(group + " " + name if group else name)}: {value:.2f}</title></rect>'
            )
            label_y = y0 - 3 if value >= 0 else y1 + 11
            out.append(f'<text x="{bx + bar_w / 2:.2f}" y="{label_y:.2f}" text-anchor="middle">{value:.2f}</text>')
        if group:
            out.append(
                f'<text x="{x + group_w / 2:.2f}" y="{top + plot_h + 18}" text-anchor="middle">{_esc(group)}</text>'
            )
        x += group_w + group_gap
    # heavier zero line: importance > 0 means important
    out.append(
        f'<line x1="{left}" y1="{y(0.0):.2f}" x2="{left + plot_w}" y2="{y(0.0):.2f}" stroke="#000" stroke-width="2"/>'
    )
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#000"/>')
    ly = top + plot_h + 40
    for f_index, name in enumerate(factors):
        color = _PALETTE[f_index % len(_PALETTE)]
        out.append(f'<rect x="{left}" y="{ly + 18 * f_index - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{left + 16}" y="{ly + 18 * f_index}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- ablation and run-count tables ------------------------------------------------------


@dataclass(frozen=True)
class AblationColumn:
    """One (M, eval size) setting; stats are medians when ``repetitions`` > 1."""

    m: int
    eval_label: str
    repetitions: int
    gm_std: float
    gm_mean: float
    factors: dict[str, dict[str, float]]  # factor -> mean/std/c_std/m_std/importance


ABLATION_STATS = ("mean", "std", "c_std", "m_std", "importance")


def ablation_column(m: int, eval_label: str, reports: Sequence[InvestigationReport]) -> AblationColumn:
    def med(values: Iterable[float | None]) -> float:
        vals = [v for v in values if v is not None]
        return float(np.median(vals)) if vals else math.nan

    factors: dict[str, dict[str, float]] = {}
    for res in reports[0].results:
        per = [rep.result(res.factor) for rep in reports]
        factors[res.factor] = {key: med(getattr(r, key) for r in per) for key in ABLATION_STATS}
    return AblationColumn(
        m, eval_label, len(reports),
        med(r.gm_std for r in reports), med(r.gm_mean for r in reports), factors,
    )


def render_ablation_table(columns: Sequence[AblationColumn]) -> str:
    """Rows are statistics, columns are settings (golden first, then per factor)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["format_version", "factor", "statistic"] + [f"M={c.m};eval={c.eval_label}" for c in columns])
    writer.writerow([REPORT_FORMAT_VERSION, "golden", "mean"] + [_num(c.gm_mean) for c in columns])
    writer.writerow([REPORT_FORMAT_VERSION, "golden", "std"] + [_num(c.gm_std) for c in columns])
    factors = list(columns[0].factors) if columns else []
    for name in factors:
        for stat in ABLATION_STATS:
            writer.writerow([REPORT_FORMAT_VERSION, name, stat] + [_num(c.factors[name][stat]) for c in columns])
    return buf.getvalue()


def render_selection_trace(selections: Mapping[str, Any]) -> str:
    """CSV trace of run-count searches, keyed by factor."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["format_version", "factor", "step", "N", "M", "c_std", "m_std", "importance", "delta"])
    for factor, sel in selections.items():
        for i, step in enumerate(sel.trace):
            writer.writerow(
                [
                    REPORT_FORMAT_VERSION, factor, i, step.n, step.m, _num(step.c_std), _num(step.m_std),
                    _num(step.importance), _num(step.delta),
                ]
            )
    return buf.getvalue()


# --- output tree ----------------------------------------------------------------


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_report_tree(report: InvestigationReport, directory: str | os.PathLike) -> dict[str, str]:
    """Write the output tree into ``directory``; returns paths by artifact name.

    ``records.jsonl`` is the run store itself and is maintained by the
    executor; its path is listed when present.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}
    records = root / "records.jsonl"
    if records.exists():
        paths["records"] = str(records)
    _write(root / "summary.csv", render_summary_csv(report))
    paths["summary"] = str(root / "summary.csv")
    if report.baselines:
        _write(root / "comparison.csv", render_comparison_table(report, "csv"))
        paths["comparison"] = str(root / "comparison.csv")
    _write(root / "importance.svg", render_importance_chart(report))
    paths["chart"] = str(root / "importance.svg")
    paths["report"] = str(root / "report.json")
    report.artifacts = {k: Path(v).name for k, v in paths.items()}
    _write(root / "report.json", json.dumps(report.to_json(), indent=2, sort_keys=False) + "\n")
    return paths


def load_report(path: str | os.PathLike) -> InvestigationReport:
    return InvestigationReport.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
