import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from randlens.errors import ConfigError, LengthMismatch, UnknownExperiment, UnknownFactor
from randlens.executor import derive_seed_bundle, evaluate_assignment, execute_plan, verify_determinism
from randlens.experiments import (
    FINETUNE_FACTORS,
    ICL_FACTORS,
    SyntheticDatasetSpec,
    SyntheticOracle,
    SyntheticOracleSpec,
    ToyExperimentConfig,
    ToyFinetune,
    ToyICL,
    analytic_decomposition,
    compute_f1_macro,
    expected_decomposition,
    generate_dataset,
    make_adapter,
    oracle_tensor,
    parse_eval_size,
    synthetic_oracle_eval,
    with_eval_size,
)
from randlens.experiments.registry import synthetic_spec, toy_config
from randlens.factor_space import UNBOUNDED, Assignment, build_factor_space
from randlens.planner import plan_interactions
from randlens.stats import GridResult, decompose
from randlens.workflows import RunSettings, run_investigation


def assign(**kw):
    return Assignment(tuple(kw.items()))


# --- F1 macro ---------------------------------------------------------------


def naive_f1(pred, true):
    classes = sorted(set(pred) | set(true))
    out = []
    for c in classes:
        tp = sum(p == c and t == c for p, t in zip(pred, true))
        fp = sum(p == c and t != c for p, t in zip(pred, true))
        fn = sum(p != c and t == c for p, t in zip(pred, true))
        out.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(out) / len(out)


def test_f1_perfect():
    assert compute_f1_macro([0, 1, 2, 1], [0, 1, 2, 1]) == 1.0


def test_f1_all_one_class_binary():
    assert compute_f1_macro([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(1 / 3, abs=1e-12)


def test_f1_length_mismatch():
    with pytest.raises(LengthMismatch):
        compute_f1_macro([0, 1], [0])


def test_f1_predicted_class_absent_from_labels_scores_zero():
    # class 2 only predicted: F1(2) = 0; classes 0 and 1 perfect otherwise
    assert compute_f1_macro([0, 1, 2], [0, 1, 1]) == pytest.approx((1 + 2 / 3 + 0) / 3)


def test_f1_empty():
    assert compute_f1_macro([], []) == 0.0


labels = st.lists(st.integers(0, 4), min_size=1, max_size=40)


@given(st.data())
def test_f1_matches_naive(data):
    true = data.draw(labels)
    pred = data.draw(st.lists(st.integers(0, 4), min_size=len(true), max_size=len(true)))
    assert compute_f1_macro(pred, true) == pytest.approx(naive_f1(pred, true), abs=1e-12)


@given(st.data())
def test_f1_relabel_invariance(data):
    true = data.draw(labels)
    pred = data.draw(st.lists(st.integers(0, 4), min_size=len(true), max_size=len(true)))
    perm = data.draw(st.permutations(range(5)))
    assert compute_f1_macro([perm[p] for p in pred], [perm[t] for t in true]) == pytest.approx(
        compute_f1_macro(pred, true), abs=1e-12
    )


# --- dataset ----------------------------------------------------------------


def test_dataset_deterministic_and_balanced():
    spec = SyntheticDatasetSpec(n_classes=3, n_samples=300)
    x1, y1 = generate_dataset(spec)
    x2, y2 = generate_dataset(replace(spec))
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert np.bincount(y1).tolist() == [100, 100, 100]
    assert not np.array_equal(generate_dataset(spec, seed=1)[0], x1)
    with pytest.raises(ValueError):
        x1[0, 0] = 1.0  # cached arrays are read-only


def test_dataset_centers_pairwise_separated():
    spec = SyntheticDatasetSpec(n_classes=4, n_samples=40_000, dim=5, separation=3.0)
    x, y = generate_dataset(spec)
    centers = np.array([x[y == c].mean(axis=0) for c in range(4)])
    dists = [np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)]
    assert np.allclose(dists, 3.0, atol=0.1)


def test_dataset_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticDatasetSpec(n_classes=1)
    with pytest.raises(ConfigError):
        SyntheticDatasetSpec(n_classes=3, n_samples=11)
    with pytest.raises(ConfigError):
        SyntheticDatasetSpec(n_classes=2, class_scale=(1.0,))


def _centroid_f1(spec):
    x, y = generate_dataset(spec)
    half = len(y) // 2
    centroids = np.array([x[:half][y[:half] == c].mean(axis=0) for c in range(spec.n_classes)])
    pred = np.argmin(((x[half:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
    return compute_f1_macro(pred, y[half:])


def test_dataset_far_apart_is_linearly_separable():
    assert _centroid_f1(SyntheticDatasetSpec(n_classes=2, n_samples=4000, separation=10.0)) > 0.99


def test_dataset_no_separation_is_chance():
    assert _centroid_f1(SyntheticDatasetSpec(n_classes=2, n_samples=4000, separation=0.0)) == pytest.approx(
        0.5, abs=0.05
    )


# --- synthetic oracle -------------------------------------------------------

ABC = build_factor_space([("A", 6), ("B", 5), ("C", 4)])


def test_oracle_constant_without_effects():
    spec = SyntheticOracleSpec(base=0.7)
    for idx in itertools.product(range(6), range(5), range(4)):
        assert synthetic_oracle_eval(Assignment(tuple(zip(ABC.names, idx))), spec) == 0.7


def test_oracle_single_effect_rows_are_permutations():
    oracle = SyntheticOracle(SyntheticOracleSpec(effects={"A": 1.5}), ABC)
    plan = plan_interactions(ABC, "A", 5, 8, seed=4)
    grid = GridResult.from_records(execute_plan(plan, oracle).records, 8, 5)
    c, m, _ = decompose(grid)
    assert m == 0 and c > 0


def test_oracle_is_pure_and_deterministic():
    oracle = SyntheticOracle(SyntheticOracleSpec(effects={"A": 1.0}, gamma=0.5, noise_std=0.2), ABC)
    a = assign(A=1, B=2, C=3)
    assert evaluate_assignment(oracle, a) == evaluate_assignment(oracle, a)
    assert verify_determinism(plan_interactions(ABC, "B", 3, 3, 0), oracle, 5).ok


def test_oracle_explicit_offsets_and_validation():
    spec = SyntheticOracleSpec(effects={"A": (0, 1, 2, 3, 4, 5)})
    assert synthetic_oracle_eval(assign(A=4, B=0, C=0), spec) == 4.0
    with pytest.raises(ConfigError):
        SyntheticOracle(SyntheticOracleSpec(effects={"A": (1.0, 2.0)}), ABC)
    with pytest.raises(UnknownFactor):
        SyntheticOracle(SyntheticOracleSpec(effects={"Z": 1.0}), ABC)
    with pytest.raises(ConfigError):
        SyntheticOracleSpec(gamma=-1.0)


def test_analytic_ordering_follows_effect_sizes():
    space = build_factor_space([("A", 20), ("B", 20)])
    spec = SyntheticOracleSpec(effects={"A": 2.0, "B": 1.0}, noise_std=0.5)
    tensor = oracle_tensor(spec, space)
    a = analytic_decomposition(spec, space, "A", 10, tensor=tensor)
    b = analytic_decomposition(spec, space, "B", 10, tensor=tensor)
    assert a.importance > b.importance


def test_analytic_zero_effect_is_negative():
    spec = SyntheticOracleSpec(effects={"A": 1.0, "B": 1.0}, noise_std=0.3)
    assert analytic_decomposition(spec, ABC, "C").importance < 0


def test_analytic_single_effect_no_noise_is_one():
    spec = SyntheticOracleSpec(effects={"A": 1.0})
    got = analytic_decomposition(spec, ABC, "A")
    assert got.m_std == pytest.approx(0, abs=1e-12)
    # every row holds the same 6 values, so gm^2 = P (C - 1) c^2 / (P C - 1)
    # with P = 20 rows and C = 6 columns; the ratio tends to 1 as C grows
    assert got.importance == pytest.approx(np.sqrt(119 / 100), rel=1e-12)
    big = build_factor_space([("A", 200), ("B", 5)])
    assert analytic_decomposition(spec, big, "A").importance == pytest.approx(1, abs=0.01)


def test_analytic_symmetric_spec():
    space = build_factor_space([("A", 5), ("B", 5)])
    offsets = (0.0, 1.0, -2.0, 0.5, 3.0)
    spec = SyntheticOracleSpec(effects={"A": offsets, "B": offsets})
    a = analytic_decomposition(spec, space, "A")
    b = analytic_decomposition(spec, space, "B")
    assert a.importance == pytest.approx(b.importance, abs=1e-12)


def test_expected_decomposition_matches_monte_carlo_at_variance_level():
    rng = np.random.default_rng(11)
    tensor = rng.normal(size=(7, 6)) + rng.normal(size=(7, 1)) + rng.normal(size=(1, 6))
    c_std, m_std, gm_std = expected_decomposition(tensor, axis=1, n=3)
    grid = tensor  # rows: axis 0; investigated configurations: axis 1
    m_vars, c_vars = [], []
    for _ in range(20_000):
        rows = rng.choice(7, size=4, replace=False)
        cols = rng.choice(6, size=3, replace=False)
        sub = grid[np.ix_(rows, cols)]
        m_vars.append(sub.mean(axis=1).var(ddof=1))
        c_vars.append(sub.var(axis=1, ddof=1).mean())
    assert np.mean(m_vars) == pytest.approx(m_std**2, rel=0.03)
    assert np.mean(c_vars) == pytest.approx(np.mean(grid.var(axis=1, ddof=1)), rel=0.03)
    assert gm_std == pytest.approx(grid.std(ddof=1))


def test_oracle_tensor_refuses_huge_spaces():
    big = build_factor_space([("A", 1000), ("B", 1001)])
    with pytest.raises(ConfigError):
        oracle_tensor(SyntheticOracleSpec(), big)


# --- toy adapters -----------------------------------------------------------

FT_SPACE = build_factor_space([(f, UNBOUNDED) for f in FINETUNE_FACTORS])
ICL_SPACE = build_factor_space([(f, UNBOUNDED) for f in ICL_FACTORS])


def test_finetune_easy_data():
    cfg = replace(ToyFinetune.default_config, dataset=SyntheticDatasetSpec(n_classes=3, n_samples=3000, separation=10.0))
    ad = ToyFinetune(cfg)
    for i in range(5):
        assert evaluate_assignment(ad, assign(label_selection=i, data_split=i + 1, model_init=2 * i, data_order=3 * i)) > 0.95


def test_finetune_data_order_matters():
    ad = ToyFinetune(replace(ToyFinetune.default_config, epochs=1, learning_rate=2.0))
    base = dict(label_selection=1, data_split=2, model_init=3)
    values = {evaluate_assignment(ad, assign(**base, data_order=k)) for k in range(5)}
    assert len(values) > 1


def test_finetune_identical_assignments_identical_f1():
    ad = ToyFinetune()
    a = assign(label_selection=4, data_split=5, model_init=6, data_order=7)
    assert evaluate_assignment(ad, a) == evaluate_assignment(ToyFinetune(), a)


def test_toy_runs_in_partial_spaces():
    ad = ToyFinetune()
    assert 0 <= evaluate_assignment(ad, assign(model_init=1, data_order=2)) <= 1


def test_labelled_pool_too_large():
    with pytest.raises(ConfigError):
        ToyExperimentConfig(dataset=SyntheticDatasetSpec(n_samples=100), labelled=90)


def test_toy_config_validation():
    with pytest.raises(ConfigError):
        ToyExperimentConfig(order_decay=1.5)
    with pytest.raises(ConfigError):
        ToyExperimentConfig(eval_size=10_000)


def test_icl_order_invariant_without_decay():
    ad = ToyICL(replace(ToyICL.default_config, order_decay=0.0))
    base = dict(label_selection=3, data_split=4, sample_choice=5)
    assert len({evaluate_assignment(ad, assign(**base, data_order=k)) for k in range(8)}) == 1


def test_icl_order_sensitive_with_decay():
    ad = ToyICL(replace(ToyICL.default_config, order_decay=0.5))
    base = dict(label_selection=3, data_split=4, sample_choice=5)
    assert len({evaluate_assignment(ad, assign(**base, data_order=k)) for k in range(8)}) > 1


def test_icl_decay_raises_data_order_importance():
    settings = RunSettings(n=6, m=8, master_seed=3)
    scores = []
    for lam in (0.0, 0.5):
        ad = ToyICL(replace(ToyICL.default_config, order_decay=lam))
        scores.append(run_investigation(ad, ICL_SPACE, ["data_order"], settings).result("data_order").importance)
    assert scores[1] > scores[0]


def test_eval_subset_is_head_of_test_part():
    ad = ToyFinetune()
    a = assign(label_selection=1, data_split=2)
    seeds = derive_seed_bundle(ad.experiment_id, a)
    full = ad._split(a, seeds)
    small = ToyFinetune(ad.cfg.with_eval_fraction(0.1))._split(a, seeds)
    assert np.array_equal(small.eval_x, full.eval_x[: len(small.eval_y)])
    assert np.array_equal(small.pool_x, full.pool_x)  # pool does not depend on the eval cap


# --- registry ---------------------------------------------------------------


def test_make_adapter_builtins():
    space = build_factor_space([("a", 5), ("b", 5)])
    assert isinstance(make_adapter("synthetic", {}, space), SyntheticOracle)
    assert isinstance(make_adapter("toy_finetune", {"epochs": "2"}, FT_SPACE), ToyFinetune)
    assert make_adapter("toy_icl", {"shots": "10"}).cfg.shots == 10
    with pytest.raises(UnknownExperiment):
        make_adapter("llama")
    with pytest.raises(ConfigError):
        make_adapter("toy_icl", {}, build_factor_space([("model_init", 5), ("data_order", 5)]))


def test_toy_config_overrides():
    cfg = toy_config({"n_classes": "4", "learning_rate": "0.25", "eval_size": "100", "dataset_seed": "9"})
    assert (cfg.dataset.n_classes, cfg.learning_rate, cfg.eval_size, cfg.dataset.seed) == (4, 0.25, 100, 9)
    with pytest.raises(ConfigError):
        toy_config({"nonsense": "1"})
    with pytest.raises(ConfigError):
        toy_config({"epochs": "two"})


def test_synthetic_spec_parsing():
    space = build_factor_space([("a", 5), ("b", 5)])
    spec = synthetic_spec({"effects": "a=2, b=0.5", "gamma": "1", "noise_std": "0.2"}, space)
    assert dict(spec.effects) == {"a": 2.0, "b": 0.5} and spec.gamma == 1.0
    assert dict(synthetic_spec({}, space).effects) == {"a": 1.0, "b": 1.0}
    with pytest.raises(ConfigError):
        synthetic_spec({"effects": "a"}, space)
    with pytest.raises(ConfigError):
        synthetic_spec({"colour": "red"}, space)


def test_eval_size_parsing():
    assert parse_eval_size("10%") == ("10%", pytest.approx(0.1))
    assert parse_eval_size("100%") == ("100%", None)
    assert parse_eval_size("500") == ("500", 500)
    for bad in ("0%", "150%", "abc", "0"):
        with pytest.raises(ConfigError):
            parse_eval_size(bad)


def test_with_eval_size():
    ad = ToyFinetune()
    assert with_eval_size(ad, "10%").cfg.eval_size == round(ad.cfg.n_test * 0.1)
    assert with_eval_size(ad, "100%").cfg.eval_size is None
    assert with_eval_size(ad, "25").cfg.eval_size == 25
    with pytest.raises(ConfigError):
        with_eval_size(ad, str(ad.cfg.n_test + 1))
    oracle = SyntheticOracle(SyntheticOracleSpec())
    assert with_eval_size(oracle, "100%") is oracle
    with pytest.raises(ConfigError):
        with_eval_size(oracle, "10%")
