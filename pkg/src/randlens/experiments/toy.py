"""Desk-scale stand-ins for fine-tuning and in-context learning.

Both adapters share the data pipeline:

* ``data_split`` permutes the corpus into train and test parts; the capped
  evaluation subset is the head of that permuted test part;
* ``label_selection`` picks the labelled pool from the train part and holds
  out a validation share of it (unused by the learners);
* the learner then consumes ``model_init`` / ``data_order`` (fine-tuning) or
  ``sample_choice`` / ``data_order`` (in-context learning).

A factor missing from the assignment falls back to configuration 0, so the
adapters also run in spaces that declare only some factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..errors import ConfigError
from ..executor import ExperimentAdapter, SeedBundle, factor_seed
from ..factor_space import Assignment
from .data import SyntheticDatasetSpec, generate_dataset
from .metrics import compute_f1_macro

FINETUNE_FACTORS = ("label_selection", "data_split", "model_init", "data_order")
ICL_FACTORS = ("label_selection", "data_split", "data_order", "sample_choice")


@dataclass(frozen=True)
class ToyExperimentConfig:
    dataset: SyntheticDatasetSpec = field(default_factory=SyntheticDatasetSpec)
    labelled: int = 60
    test_fraction: float = 0.2
    validation_fraction: float = 0.2
    eval_size: int | None = None  # cap on evaluated test samples; None = whole test split
    # fine-tuning
    epochs: int = 2
    learning_rate: float = 0.5
    batch_size: int = 4
    init_scale: float = 1.0
    # in-context learning
    shots: int = 2  # exemplars per class
    order_decay: float = 0.0  # weight of the exemplar at position p is (1 - order_decay) ** p
    bandwidth: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if not 0 <= self.order_decay <= 1:
            raise ConfigError("order_decay must lie in [0, 1]")
        if self.labelled < 2:
            raise ConfigError("labelled pool needs at least 2 samples")
        if self.labelled > self.n_train:
            raise ConfigError(
                f"labelled pool of {self.labelled} exceeds the {self.n_train} train samples"
            )
        if self.eval_size is not None and not 1 <= self.eval_size <= self.n_test:
            raise ConfigError(f"eval_size {self.eval_size} must lie in [1, {self.n_test}] (test split size)")
        for name in ("epochs", "batch_size", "shots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def n_test(self) -> int:
        return int(round(self.dataset.n_samples * self.test_fraction))

    @property
    def n_train(self) -> int:
        return self.dataset.n_samples - self.n_test

    @property
    def n_eval(self) -> int:
        return self.n_test if self.eval_size is None else self.eval_size

    def with_eval_fraction(self, fraction: float) -> "ToyExperimentConfig":
        return replace(self, eval_size=max(1, int(round(self.n_test * fraction))))

    def to_json(self) -> dict[str, Any]:
        doc = {k: v for k, v in self.__dict__.items() if k != "dataset"}
        doc["dataset"] = dict(self.dataset.__dict__)
        return doc


@dataclass(frozen=True)
class _Split:
    pool_x: np.ndarray
    pool_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray


class _ToyAdapter(ExperimentAdapter):
    metric_name = "f1_macro"
    metric_range = (0.0, 1.0)
    factors: tuple[str, ...] = ()
    default_config = ToyExperimentConfig()

    def __init__(self, config: ToyExperimentConfig | None = None, experiment_id: str | None = None):
        self.cfg = config or self.default_config
        if experiment_id is not None:
            self.experiment_id = experiment_id

    @property
    def config(self):
        return self.cfg.to_json()

    def _rng(self, assignment: Assignment, seeds: SeedBundle, name: str) -> np.random.Generator:
        if name in seeds.factor_seeds:
            return seeds.rng(name)
        return np.random.default_rng(factor_seed(self.experiment_id, name, 0))

    def _split(self, assignment: Assignment, seeds: SeedBundle) -> _Split:
        cfg = self.cfg
        x, y = generate_dataset(cfg.dataset)
        perm = self._rng(assignment, seeds, "data_split").permutation(len(y))
        test_idx, train_idx = perm[: cfg.n_test], perm[cfg.n_test :]
        rng = self._rng(assignment, seeds, "label_selection")
        pool = train_idx[rng.choice(len(train_idx), size=cfg.labelled, replace=False)]
        n_val = int(round(cfg.labelled * cfg.validation_fraction))
        val, pool = pool[:n_val], pool[n_val:]
        # the permutation is uniform, so its head is a uniform subset
        test_idx = test_idx[: cfg.n_eval]
        return _Split(x[pool], y[pool], x[val], y[val], x[test_idx], y[test_idx])


def _softmax_sgd(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    cfg: ToyExperimentConfig,
    init_rng: np.random.Generator,
    order_rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    w = init_rng.normal(0.0, cfg.init_scale, size=(x.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(cfg.epochs):
        order = order_rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            logits = x[batch] @ w + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            grad = (p - onehot[batch]) / len(batch)
            w -= cfg.learning_rate * (x[batch].T @ grad)
            b -= cfg.learning_rate * grad.sum(axis=0)
    return w, b


class ToyFinetune(_ToyAdapter):
    """Softmax regression trained by seeded mini-batch SGD.

    ``model_init`` draws the initial weights and ``data_order`` the batch
    order of every epoch. With few samples, few epochs and a large learning
    rate, both leave a visible mark on the final F1.
    """

    experiment_id = "toy_finetune"
    factors = FINETUNE_FACTORS
    # Five moderately separated classes, a 100-sample pool and one SGD epoch
    # give every factor an effect above the eval-subset noise even at 10% of
    # the 4000-sample test split; a larger test split would drown the subset
    # composition effect, a smaller one would let it dominate data_split.
    default_config = ToyExperimentConfig(
        dataset=SyntheticDatasetSpec(n_classes=5, n_samples=20000, dim=6, separation=2.5),
        labelled=100,
        epochs=1,
        learning_rate=1.5,
        init_scale=2.0,
    )

    def evaluate(self, assignment: Assignment, seeds: SeedBundle) -> float:
        split = self._split(assignment, seeds)
        w, b = _softmax_sgd(
            split.pool_x,
            split.pool_y,
            self.cfg.dataset.n_classes,
            self.cfg,
            self._rng(assignment, seeds, "model_init"),
            self._rng(assignment, seeds, "data_order"),
        )
        pred = np.argmax(split.eval_x @ w + b, axis=1)
        return compute_f1_macro(pred, split.eval_y)


class ToyICL(_ToyAdapter):
    """Exemplar classifier standing in for in-context learning.

    ``sample_choice`` picks ``shots`` exemplars per class from the labelled
    pool and ``data_order`` permutes them into a prompt. A test point takes
    the label of the exemplar with the highest weighted similarity, where the
    exemplar at prompt position p weighs ``(1 - order_decay) ** p``. With
    ``order_decay = 0`` the prediction cannot depend on the order.
    """

    experiment_id = "toy_icl"
    factors = ICL_FACTORS
    default_config = ToyExperimentConfig(eval_size=200)

    def exemplars(self, split: _Split, assignment: Assignment, seeds: SeedBundle):
        rng = self._rng(assignment, seeds, "sample_choice")
        chosen = []
        for cls in range(self.cfg.dataset.n_classes):
            members = np.flatnonzero(split.pool_y == cls)
            if len(members):
                k = min(self.cfg.shots, len(members))
                chosen.extend(members[rng.choice(len(members), size=k, replace=False)])
        chosen = np.asarray(chosen, dtype=int)
        order = self._rng(assignment, seeds, "data_order").permutation(len(chosen))
        return split.pool_x[chosen[order]], split.pool_y[chosen[order]]

    def evaluate(self, assignment: Assignment, seeds: SeedBundle) -> float:
        split = self._split(assignment, seeds)
        ex_x, ex_y = self.exemplars(split, assignment, seeds)
        with np.errstate(divide="ignore"):
            log_w = np.log((1.0 - self.cfg.order_decay) ** np.arange(len(ex_y)))
        d2 = ((split.eval_x[:, None, :] - ex_x[None, :, :]) ** 2).sum(axis=2)
        # log of weight * gaussian similarity; avoids underflow for far points
        score = log_w[None, :] - d2 / (2 * self.cfg.bandwidth**2)
        pred = ex_y[np.argmax(score, axis=1)]
        return compute_f1_macro(pred, split.eval_y)
