"""Acceptance criteria, one test per criterion.

Each test prints a ``PASS criterion k`` / ``FAIL criterion k`` line with the
measured quantities; the lines are repeated in the terminal summary. Tolerances
and runtime budgets are the criteria's own and are never relaxed here.
"""

import csv
import itertools
import json
import math
import random
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import randlens.cli as cli
from randlens.cli import main
from randlens.executor import ExperimentAdapter, RunRecord, execute_plan
from randlens.experiments import (
    FINETUNE_FACTORS,
    ICL_FACTORS,
    SyntheticOracle,
    SyntheticOracleSpec,
    ToyFinetune,
    ToyICL,
    analytic_decomposition,
    compute_f1_macro,
    oracle_tensor,
    with_eval_size,
)
from randlens.factor_space import UNBOUNDED, build_factor_space
from randlens.planner import plan_interactions
from randlens.stats import GridResult, baseline_verdict, decompose, importance
from randlens.workflows import RunSettings, repetition_seed, run_ablation, run_investigation, run_strategy_comparison

from conftest import FIXTURES, report_criterion

REPS = 20


def verdict(k, ok, detail, elapsed, budget):
    within = elapsed < budget
    passed = bool(ok) and within
    line = f"{'PASS' if passed else 'FAIL'} criterion {k}: {detail} [{elapsed:.1f}s of {budget:g}s]"
    report_criterion(line)
    print(line)
    assert ok, line
    assert within, line


def median(values):
    return float(np.median(list(values)))


# 1 ---------------------------------------------------------------------------


def test_criterion_1_importance_identity():
    t = time.perf_counter()
    with (FIXTURES / "reference_importance.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    misses = []
    for r in rows:
        got = importance(float(r["c_std"]), float(r["m_std"]), float(r["gm_std"])).score
        if abs(got - float(r["importance"])) > 0.005:
            misses.append(f"{r['model']} {r['setting']} {r['factor']} {got - float(r['importance']):+.4f}")
    elapsed = time.perf_counter() - t
    detail = f"{len(rows) - len(misses)}/{len(rows)} reference quadruples within 0.005"
    if misses:
        detail += "; off: " + ", ".join(misses)
    verdict(1, len(rows) >= 40 and not misses, detail, elapsed, 1)


# 2 ---------------------------------------------------------------------------


class TableAdapter(ExperimentAdapter):
    """Deterministic adapter reading an arbitrary random table."""

    experiment_id = "table"

    def __init__(self, table):
        self.table = table

    def evaluate(self, assignment, seeds):
        return float(self.table[assignment.indices])


def naive_std(xs):
    mean = sum(xs) / len(xs)
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / (len(xs) - 1))


def naive_decomposition(table, axis):
    """Rows over the full mitigated cross product, columns over every configuration."""
    shape = table.shape
    others = [i for i in range(len(shape)) if i != axis]
    rows = []
    for mitigated in itertools.product(*(range(shape[i]) for i in others)):
        row = []
        for j in range(shape[axis]):
            idx = [0] * len(shape)
            for i, v in zip(others, mitigated):
                idx[i] = v
            idx[axis] = j
            row.append(float(table[tuple(idx)]))
        rows.append(row)
    c_std = sum(naive_std(r) for r in rows) / len(rows)
    m_std = naive_std([sum(r) / len(r) for r in rows])
    return c_std, m_std


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_criterion_2_bruteforce_oracle():
    t = time.perf_counter()
    rng = random.Random(20240)
    worst = 0.0
    for case in range(100):
        k = rng.choice((2, 3))
        cards = [rng.randint(2, 5) for _ in range(k)]
        space = build_factor_space([(f"f{i}", c) for i, c in enumerate(cards)])
        gen = np.random.default_rng(case)
        style = case % 3
        if style == 0:
            table = gen.normal(size=cards)
        elif style == 1:  # additive effects plus interactions
            table = sum(np.reshape(gen.normal(scale=gen.uniform(0, 3), size=c), [c if j == i else 1 for j in range(k)])
                        for i, c in enumerate(cards)) + 0.3 * gen.normal(size=cards)
        else:  # heavy-tailed and offset
            table = 50 + gen.standard_cauchy(size=cards)
        adapter = TableAdapter(table)
        for axis, name in enumerate(space.names):
            m = int(np.prod(cards)) // cards[axis]
            plan = plan_interactions(space, name, cards[axis], m, seed=case)
            c_std, m_std, _ = decompose(GridResult.from_records(execute_plan(plan, adapter).records, m, cards[axis]))
            nc, nm = naive_decomposition(table, axis)
            worst = max(worst, rel_err(c_std, nc), rel_err(m_std, nm))
    elapsed = time.perf_counter() - t
    verdict(2, worst <= 1e-12, f"worst relative error {worst:.2e} over 100 exhaustive adapters", elapsed, 10)


# 3 ---------------------------------------------------------------------------


def test_criterion_3_ground_truth_recovery():
    t = time.perf_counter()
    space = build_factor_space([("f1", 25), ("f2", 25), ("f3", 25)])
    spec = SyntheticOracleSpec(effects={"f1": 2.0, "f2": 1.0, "f3": 0.0}, gamma=0.0, noise_std=0.3)
    adapter = SyntheticOracle(spec, space)
    tensor = oracle_tensor(spec, space)
    truth = {f: analytic_decomposition(spec, space, f, 10, tensor=tensor).importance for f in space.names}
    ordered, errors = 0, {f: [] for f in space.names}
    for r in range(REPS):
        rep = run_investigation(adapter, space, None, RunSettings(n=10, m=50, master_seed=repetition_seed(3, r)))
        imp = {f: rep.result(f).importance for f in space.names}
        ordered += imp["f1"] > imp["f2"] > imp["f3"] and imp["f3"] < 0
        for f in space.names:
            errors[f].append(abs(imp[f] - truth[f]))
    worst = max(median(e) for e in errors.values())
    elapsed = time.perf_counter() - t
    detail = f"ordering recovered {ordered}/{REPS}, worst median |error| {worst:.3f}"
    verdict(3, ordered >= 18 and worst <= 0.15, detail, elapsed, 30)


# 4 ---------------------------------------------------------------------------


def test_criterion_4_strategy_failure_modes():
    t = time.perf_counter()
    space = build_factor_space([("f1", 30), ("f2", 30), ("f3", 30)])
    spec = SyntheticOracleSpec(effects={"f1": 2.0, "f2": 1.0, "f3": 0.0}, gamma=1.0, noise_std=0.3)
    adapter = SyntheticOracle(spec, space)
    reps = [
        run_strategy_comparison(adapter, space, None, RunSettings(n=10, m=20, master_seed=repetition_seed(123, r)))
        for r in range(REPS)
    ]

    def baseline(rep, factor, strategy):
        return next(b for b in rep.baselines if b.factor == factor and b.strategy == strategy)

    ratios = {f: median(baseline(rep, f, "random").std / rep.gm_std for rep in reps) for f in space.names}
    random_ok = all(abs(v - 1) <= 0.15 for v in ratios.values())
    zero_imp = median(rep.result("f3").importance for rep in reps)
    flipping = [f for f in space.names if len({baseline_verdict(baseline(rep, f, "fixed").std, rep.gm_std) for rep in reps}) == 2]
    elapsed = time.perf_counter() - t
    detail = (
        "random/gm medians " + ", ".join(f"{f}={v:.3f}" for f, v in ratios.items())
        + f"; zero-effect importance {zero_imp:.3f}; fixed verdict flips for {flipping or 'none'}"
    )
    verdict(4, random_ok and zero_imp < 0 and flipping, detail, elapsed, 60)


# 5, 6 ------------------------------------------------------------------------


def icl_medians(factor, **overrides):
    space = build_factor_space([(f, UNBOUNDED) for f in ICL_FACTORS])
    adapter = ToyICL(replace(ToyICL.default_config, **overrides))
    return median(
        run_investigation(adapter, space, [factor], RunSettings(n=10, m=20, master_seed=repetition_seed(55, r)))
        .result(factor).importance
        for r in range(REPS)
    )


def test_criterion_5_order_sensitivity_knob():
    t = time.perf_counter()
    flat = icl_medians("data_order", order_decay=0.0)
    steep = icl_medians("data_order", order_decay=0.5)
    elapsed = time.perf_counter() - t
    detail = f"data_order median importance {flat:.3f} at lambda=0, {steep:.3f} at lambda=0.5"
    verdict(5, flat <= 0.05 and steep - flat >= 0.2, detail, elapsed, 60)


def test_criterion_6_shots_trend():
    t = time.perf_counter()
    few = icl_medians("sample_choice", shots=2)
    many = icl_medians("sample_choice", shots=10)
    elapsed = time.perf_counter() - t
    detail = f"sample_choice median importance {few:.3f} with 2 shots, {many:.3f} with 10"
    verdict(6, many < few, detail, elapsed, 90)


# 7 ---------------------------------------------------------------------------


# M=10 medians are far noisier than M=100 ones and ten times cheaper, so the
# small-budget column gets more repetitions; golden runs do not enter c_std
# or m_std, hence the small fixed L.
REPS_BIG, REPS_SMALL = 20, 100


def test_criterion_7_ablation_trend():
    t = time.perf_counter()
    space = build_factor_space([(f, UNBOUNDED) for f in FINETUNE_FACTORS])
    base = ToyFinetune()
    settings = RunSettings(n=10, m=20, l=100, master_seed=2024)

    def column(m, size, reps):
        return run_ablation(lambda s: with_eval_size(base, s), space, [m], [size], settings=settings,
                            repetitions=reps).columns[0]

    big, small = column(100, "100%", REPS_BIG), column(10, "10%", REPS_SMALL)
    parts, ok = [], True
    for f in FINETUNE_FACTORS:
        b, s = big.factors[f], small.factors[f]
        dm, dc = s["m_std"] / b["m_std"] - 1, s["c_std"] / b["c_std"] - 1
        ok &= s["m_std"] >= b["m_std"] and abs(dc) < 0.25
        parts.append(f"{f} m {dm:+.1%} c {dc:+.1%}")
    elapsed = time.perf_counter() - t
    detail = f"(M=10, 10%, {REPS_SMALL} reps) vs (M=100, 100%, {REPS_BIG} reps): " + "; ".join(parts)
    verdict(7, ok, detail, elapsed, 300)


# 8 ---------------------------------------------------------------------------


class Interrupt(BaseException):
    pass


def test_criterion_8_determinism_and_resume(tmp_path, monkeypatch):
    t = time.perf_counter()
    args = ["investigate", "--experiment", "synthetic", "--factors", "a,b,c", "--n", "10", "--m", "20", "--seed", "8"]
    total = 200 + 3 * 200
    assert main([*args, "--parallelism", "1", "--out", str(tmp_path / "serial")]) == 0
    assert main([*args, "--parallelism", "8", "--out", str(tmp_path / "parallel")]) == 0

    real = cli.build_adapter
    calls = {"n": 0}

    class Stopping(ExperimentAdapter):
        def __init__(self, inner):
            self.inner = inner
            self.experiment_id = inner.experiment_id
            self.metric_name = inner.metric_name

        @property
        def config(self):
            return self.inner.config

        def evaluate(self, assignment, seeds):
            calls["n"] += 1
            if calls["n"] > total // 2:
                raise Interrupt
            return self.inner.evaluate(assignment, seeds)

    monkeypatch.setattr(cli, "build_adapter", lambda cfg, space: Stopping(real(cfg, space)))
    with pytest.raises(Interrupt):
        main([*args, "--parallelism", "1", "--out", str(tmp_path / "resumed")])
    monkeypatch.setattr(cli, "build_adapter", real)
    partial = len((tmp_path / "resumed" / "synthetic" / "records.jsonl").read_text().splitlines())
    assert main([*args, "--parallelism", "1", "--out", str(tmp_path / "resumed")]) == 0

    def load(name):
        d = tmp_path / name / "synthetic"
        recs = [RunRecord.from_json(json.loads(x)).stable_view() for x in (d / "records.jsonl").read_text().splitlines()]
        return recs, (d / "summary.csv").read_bytes()

    serial, parallel, resumed = load("serial"), load("parallel"), load("resumed")
    elapsed = time.perf_counter() - t
    same = serial == parallel == resumed
    detail = (f"{len(serial[0])} records; interrupted after {partial} stored runs; "
              f"all three runs {'identical' if same else 'differ'}")
    verdict(8, same and len(serial[0]) == total and partial == total // 2, detail, elapsed, 60)


# 9 ---------------------------------------------------------------------------

F1_CASES = [
    ([0, 1, 2, 1], [0, 1, 2, 1], 1.0),
    ([0, 0, 0, 0], [0, 0, 1, 1], 1 / 3),
    ([1, 1, 1, 1], [0, 0, 1, 1], 1 / 3),
    ([0, 1, 0, 1], [1, 0, 1, 0], 0.0),
    ([0, 1, 2], [0, 1, 1], (1 + 2 / 3 + 0) / 3),
    # class 0: tp1 fp1 fn1 -> 1/2; class 1: tp1 fp1 fn1 -> 1/2; class 2: tp1 -> 1
    ([0, 1, 2, 1, 0], [0, 0, 2, 1, 1], (0.5 + 0.5 + 1) / 3),
    ([2, 2, 2], [2, 2, 2], 1.0),
]


def test_criterion_9_f1_fixtures():
    t = time.perf_counter()
    errs = [abs(compute_f1_macro(p, y) - want) for p, y, want in F1_CASES]
    elapsed = time.perf_counter() - t
    verdict(9, max(errs) <= 1e-9, f"{len(F1_CASES)} hand-computed cases, worst error {max(errs):.1e}", elapsed, 1)
