"""Network-level assembly: 3-bit quantization, decision decoding and evaluation."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import TENSOR_NAMES, ModelParams, run_discrete

WEIGHT_LEVELS = np.arange(-3, 4)


class EvaluationError(ValueError):
    pass


class Label(enum.IntEnum):
    NOT_CHEWING = 0
    CHEWING = 1

    def one_hot(self) -> np.ndarray:
        """Target state in ``(h_0, h_1)`` order: unit 1 is the chewing unit."""
        return np.array([0.0, 2.0]) if self is Label.CHEWING else np.array([2.0, 0.0])

    @classmethod
    def from_one_hot(cls, vec) -> "Label":
        vec = np.asarray(vec, dtype=float)
        return cls.CHEWING if vec[1] > vec[0] else cls.NOT_CHEWING


@dataclass
class QuantizedParams:
    """Integer register image of an AFUA layer; entries in ``{-3..3}``."""

    W: np.ndarray
    Wz: np.ndarray
    U: np.ndarray
    Uz: np.ndarray
    b: np.ndarray
    bz: np.ndarray

    def __post_init__(self):
        for name in TENSOR_NAMES:
            arr = np.asarray(getattr(self, name))
            if not np.all(np.isin(arr, WEIGHT_LEVELS)):
                raise ValueError(f"{name} holds values outside the signed 3-bit range")
            setattr(self, name, arr.astype(np.int64))
        # shape validation is shared with ModelParams
        self.as_float()

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in TENSOR_NAMES}

    def as_float(self) -> ModelParams:
        return ModelParams(**{k: v.astype(float) for k, v in self.as_dict().items()})

    def register_bits(self) -> dict[str, np.ndarray]:
        """Per-tensor ``(..., 3)`` arrays of ``(w_sgn, w_0, w_1)`` register bits."""
        return {k: to_register_bits(v) for k, v in self.as_dict().items()}


Params = Union[ModelParams, QuantizedParams]


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    t = np.trunc(x)
    # x - trunc(x) is exact, unlike floor(|x| + 0.5) just below one half
    return np.where(np.abs(x - t) >= 0.5, t + np.sign(x), t)


def quantize(params: Params) -> QuantizedParams:
    """Round to the nearest integer (ties away from zero) and clamp to ``[-3, 3]``."""
    if isinstance(params, QuantizedParams):
        params = params.as_float()
    return QuantizedParams(**{
        k: np.clip(round_half_away(v), -3, 3).astype(np.int64)
        for k, v in params.as_dict().items()})


def to_register_bits(q) -> np.ndarray:
    """Sign bit plus two magnitude bits (``w_0`` weighs 1, ``w_1`` weighs 2)."""
    q = np.asarray(q, dtype=np.int64)
    mag = np.abs(q)
    return np.stack([(q < 0).astype(np.int64), mag & 1, (mag >> 1) & 1], axis=-1)


def from_register_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    mag = bits[..., 1] + 2 * bits[..., 2]
    return np.where(bits[..., 0] == 1, -mag, mag)


def _as_model(params: Params) -> ModelParams:
    return params.as_float() if isinstance(params, QuantizedParams) else params


@dataclass
class Prediction:
    h_final: np.ndarray
    label: Label
    score: float


def decision_score(h_final) -> np.ndarray:
    """Chewing-unit minus not-chewing-unit output."""
    h_final = np.asarray(h_final, dtype=float)
    return h_final[..., 1] - h_final[..., 0]


def final_states(params: Params, windows: Sequence) -> np.ndarray:
    """Run every window from the rest state; returns ``(len(windows), m)``."""
    if len(windows) == 0:
        raise EvaluationError("no windows to evaluate")
    frames = np.stack([np.asarray(w.frames, dtype=float) for w in windows])
    if frames.shape[1] == 0:
        raise EvaluationError("windows must contain at least one frame")
    return run_discrete(_as_model(params), frames)


def classify_window(params: Params, window, threshold: float = 0.0) -> Prediction:
    frames = np.asarray(window.frames, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise EvaluationError("window must contain at least one frame")
    h = run_discrete(_as_model(params), frames)
    return decode(h, threshold)


def decode(h_final, threshold: float = 0.0) -> Prediction:
    score = float(decision_score(h_final))
    label = Label.CHEWING if score >= threshold else Label.NOT_CHEWING
    return Prediction(h_final=np.asarray(h_final, dtype=float), label=label, score=score)


def accuracy(params: Params, windows: Sequence, threshold: float = 0.0) -> float:
    scores = decision_score(final_states(params, windows))
    truth = np.array([int(w.label) for w in windows])
    return float(np.mean((scores >= threshold).astype(int) == truth))


@dataclass
class RocCurve:
    thresholds: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.sensitivity.tolist(),
                        self.specificity.tolist()))

    def operating_point(self, min_sensitivity: float = 0.0):
        """Threshold maximizing specificity subject to a sensitivity floor.

        Returns ``(threshold, sensitivity, specificity)`` or ``None``.
        """
        ok = np.flatnonzero(self.sensitivity >= min_sensitivity)
        if ok.size == 0:
            return None
        i = ok[np.argmax(self.specificity[ok] + 1e-9 * self.sensitivity[ok])]
        return float(self.thresholds[i]), float(self.sensitivity[i]), float(self.specificity[i])

    def best_balanced(self):
        """Threshold maximizing Youden's index (sensitivity + specificity - 1)."""
        i = int(np.argmax(self.sensitivity + self.specificity))
        return float(self.thresholds[i]), float(self.sensitivity[i]), float(self.specificity[i])


def roc_from_scores(scores, labels, n_thresholds: int = 256) -> RocCurve:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = labels == 1
    if pos.all() or not pos.any():
        raise EvaluationError("ROC needs both classes in the test set")
    thresholds = np.linspace(scores.min(), scores.max(), n_thresholds)
    predicted = scores[None, :] >= thresholds[:, None]
    sens = (predicted & pos).sum(axis=1) / pos.sum()
    spec = (~predicted & ~pos).sum(axis=1) / (~pos).sum()
    # close the staircase at (FPR, TPR) = (1, 1) and (0, 0)
    fpr = np.concatenate([[1.0], 1.0 - spec, [0.0]])
    tpr = np.concatenate([[1.0], sens, [0.0]])
    auc = float(np.sum((fpr[:-1] - fpr[1:]) * (tpr[:-1] + tpr[1:]) / 2.0))
    return RocCurve(thresholds=thresholds, sensitivity=sens, specificity=spec, auc=auc)


def roc(params: Params, test_set: Sequence, n_thresholds: int = 256) -> RocCurve:
    labels = [int(w.label) for w in test_set]
    if len(set(labels)) < 2:
        raise EvaluationError("ROC needs both classes in the test set")
    scores = decision_score(final_states(params, test_set))
    return roc_from_scores(scores, labels, n_thresholds)


@dataclass
class Metrics:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    counts: dict = field(default_factory=dict)
    undefined: tuple = ()

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "counts": self.counts,
                "undefined": list(self.undefined)}


def confusion_metrics(predictions, labels) -> Metrics:
    """Accuracy, precision, recall and F1 with chewing as the positive class.

    A metric whose denominator is zero is returned as ``None`` and named in
    ``undefined``.
    """
    pred = np.array([int(p.label) if isinstance(p, Prediction) else int(p)
                     for p in predictions])
    truth = np.array([int(t) for t in labels])
    if pred.shape != truth.shape:
        raise EvaluationError("predictions and labels differ in length")
    if pred.size == 0:
        raise EvaluationError("nothing to score")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    undefined = []
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None:
        undefined.append("precision")
    if recall is None:
        undefined.append("recall")
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
        undefined.append("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy=(tp + tn) / pred.size, precision=precision, recall=recall,
                   f1=f1, counts={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
                   undefined=tuple(undefined))
