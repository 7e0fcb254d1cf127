"""Classification metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import LengthMismatch


def compute_f1_macro(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over every class seen in labels or predictions.

    A class that is predicted but never occurs in ``labels`` has recall 0/0
    and scores F1 = 0, as does any class whose precision or recall has a zero
    denominator. Empty inputs score 0.
    """
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.size} predictions for {true.size} labels")
    if true.size == 0:
        return 0.0
    classes, codes = np.unique(np.concatenate([pred, true]), return_inverse=True)
    k = classes.size
    p_code, t_code = codes[: pred.size], codes[pred.size :]
    tp = np.bincount(p_code[p_code == t_code], minlength=k).astype(float)
    predicted = np.bincount(p_code, minlength=k)
    actual = np.bincount(t_code, minlength=k)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return float(f1.mean())
