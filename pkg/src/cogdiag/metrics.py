"""Evaluation metrics: identifiability, trait-response consistency, its
train/test overfit rate, classification/regression scores, and the
within-group trait-distance histogram.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import MetricError
from .fileio import write_csv

NO_PAIRS_MESSAGE = "no identical-response pairs; run shadow augmentation"


def manhattan(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise MetricError(f"manhattan: length mismatch {u.shape} vs {v.shape}")
    return float(np.abs(u - v).sum())


def _within_group_pairs(groups):
    for group in groups:
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                yield group[a], group[b]


def ids(traits, groups) -> float:
    """Identifiability score: mean of 1/(1+distance)^2 over ordered pairs of
    entities with identical response rows.

    The double sum over ordered pairs is evaluated within groups only; the
    inverse-square weight is symmetric, so each unordered pair contributes
    twice. Equals exactly 1.0 iff every within-group distance is zero.
    """
    traits = np.asarray(traits, dtype=np.float64)
    if traits.ndim == 1:
        traits = traits.reshape(-1, 1)
    z = sum(len(g) * (len(g) - 1) for g in groups)
    if z == 0:
        raise MetricError(NO_PAIRS_MESSAGE)
    total = 0.0
    for i, j in _within_group_pairs(groups):
        dist = float(np.abs(traits[i] - traits[j]).sum())
        total += 2.0 / (1.0 + dist) ** 2
    return total / z


@dataclass
class DocResult:
    per_question: dict
    mean: float


def doc(traits, logs, q_matrix) -> DocResult:
    """Degree of consistency between response order and trait order.

    For each question: over ordered learner pairs (i, j) where both answered
    and i scored strictly higher, count relevant concepts where trait order
    agrees (numerator) and where traits differ at all (denominator). Strict
    comparisons throughout; a question with denominator 0 is excluded.
    Expects pair-unique logs (run preprocessing first).
    """
    traits = np.asarray(traits, dtype=np.float64)
    q = np.asarray(q_matrix)
    if traits.ndim != 2 or traits.shape[1] != q.shape[1]:
        raise MetricError(
            f"doc: traits {traits.shape} do not line up with Q-matrix {q.shape}")

    answered: dict = {}
    for entry in logs:
        answered.setdefault(entry.question_id, []).append((entry.learner_id, entry.score))

    per_question = {}
    for l in range(q.shape[0]):
        entries = answered.get(l)
        if not entries:
            continue
        correct = [lid for lid, s in entries if s == 1]
        wrong = [lid for lid, s in entries if s == 0]
        if not correct or not wrong:
            continue
        num = 0
        den = 0
        for k in np.nonzero(q[l])[0]:
            t_correct = traits[correct, k]
            t_wrong = np.sort(traits[wrong, k])
            below = np.searchsorted(t_wrong, t_correct, side="left")
            not_above = np.searchsorted(t_wrong, t_correct, side="right")
            num += int(below.sum())
            den += int(below.sum()) + int((len(t_wrong) - not_above).sum())
        if den > 0:
            per_question[int(l)] = num / den
    if not per_question:
        raise MetricError("doc: no question has a defined consistency value")
    mean = sum(per_question.values()) / len(per_question)
    return DocResult(per_question=per_question, mean=mean)


def reo(doc_train: float, doc_test: float) -> float:
    """Overfit rate 1 - doc_test/doc_train.

    Equal inputs short-circuit to exactly 0.0, and the division runs as a
    reciprocal multiply; both together keep the clean identities (0 for
    equal inputs, 0.25 for the 0.8/0.6 case) exact in doubles.
    """
    if doc_train <= 0.0:
        raise MetricError(f"reo: doc_train must be > 0, got {doc_train}")
    if doc_test == doc_train:
        return 0.0
    return 1.0 - doc_test * (1.0 / doc_train)


class PredictionMetrics(NamedTuple):
    acc: float
    rmse: float
    f1: float


def classification_metrics(preds, labels, threshold: float = 0.5) -> PredictionMetrics:
    """Accuracy and F1 at the threshold (>= counts as positive), RMSE on the
    raw probabilities. Empty precision/recall denominators give 0."""
    preds = np.asarray(preds, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if preds.shape != labels.shape:
        raise MetricError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise MetricError("empty prediction set")
    cls = preds >= threshold
    pos = labels == 1.0
    acc = float(np.mean(cls == pos))
    rmse = float(np.sqrt(np.mean((preds - labels) ** 2)))
    tp = int(np.sum(cls & pos))
    fp = int(np.sum(cls & ~pos))
    fn = int(np.sum(~cls & pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PredictionMetrics(acc=acc, rmse=rmse, f1=f1)


@dataclass
class HistogramBin:
    lo: float
    hi: float
    count: int
    cumulative: float


def distance_histogram(traits, groups, bin_width: float = 0.05) -> list:
    """Histogram of within-group pairwise Manhattan distances.

    Bins are [i*w, (i+1)*w); only non-empty bins appear; cumulative is the
    running fraction of pairs."""
    if bin_width <= 0.0:
        raise MetricError(f"bin_width must be > 0, got {bin_width}")
    traits = np.asarray(traits, dtype=np.float64)
    if traits.ndim == 1:
        traits = traits.reshape(-1, 1)
    counts: dict = {}
    total = 0
    for i, j in _within_group_pairs(groups):
        dist = float(np.abs(traits[i] - traits[j]).sum())
        idx = int(np.floor(dist / bin_width))
        counts[idx] = counts.get(idx, 0) + 1
        total += 1
    if total == 0:
        raise MetricError(NO_PAIRS_MESSAGE)
    bins = []
    running = 0
    for idx in sorted(counts):
        running += counts[idx]
        bins.append(HistogramBin(
            lo=idx * bin_width, hi=(idx + 1) * bin_width,
            count=counts[idx], cumulative=running / total))
    return bins


def write_histogram_csv(path, bins) -> None:
    write_csv(path, ["bin_lo", "bin_hi", "count", "cumulative"],
              [(b.lo, b.hi, b.count, b.cumulative) for b in bins])


@dataclass
class MetricsReport:
    """Bundle of everything one evaluation run can produce; fields the run
    did not compute stay None."""

    ids_learner: float | None = None
    ids_question: float | None = None
    mean_doc_train: float | None = None
    mean_doc_test: float | None = None
    reo: float | None = None
    acc: float | None = None
    rmse: float | None = None
    f1: float | None = None
    histogram: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("ids_learner", "ids_question"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v <= 1.0:
                raise MetricError(f"{name} out of (0,1]: {v}")
        if self.reo is not None and self.reo > 1.0:
            raise MetricError(f"reo above 1: {self.reo}")
        for name in ("acc", "f1"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise MetricError(f"{name} out of [0,1]: {v}")

    def to_dict(self) -> dict:
        return {
            "ids_learner": self.ids_learner,
            "ids_question": self.ids_question,
            "mean_doc_train": self.mean_doc_train,
            "mean_doc_test": self.mean_doc_test,
            "reo": self.reo,
            "acc": self.acc,
            "rmse": self.rmse,
            "f1": self.f1,
            "histogram": [
                {"bin_lo": b.lo, "bin_hi": b.hi, "count": b.count, "cumulative": b.cumulative}
                for b in self.histogram
            ],
        }
