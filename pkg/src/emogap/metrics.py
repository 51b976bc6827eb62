"""Classification metrics and subject-level majority voting.

Precision/recall/F1 are macro-averaged over the three classes with the
0-convention for empty denominators; accuracy is the plain fraction correct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import DEPRESSION_CLASSES


@dataclass
class Metrics:
    accuracy: float
    f1: float
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
        }


def compute_metrics(predictions, labels, n_classes: int = 3) -> Metrics:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError(
            f"predictions {pred.shape} and labels {true.shape} must be equal-length "
            "non-empty vectors"
        )
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, t in zip(pred, true):
        confusion[t, p] += 1
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    precisions, recalls, f1s = [], [], []
    for c in range(n_classes):
        tp = confusion[c, c]
        col = confusion[:, c].sum()
        row = confusion[c, :].sum()
        precision = tp / col if col else 0.0
        recall = tp / row if row else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    return Metrics(
        accuracy=accuracy,
        f1=float(np.mean(f1s)),
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
    )


@dataclass
class SubjectPrediction:
    subject_id: str
    votes: list[int]
    final: int
    mean_probabilities: np.ndarray

    @property
    def final_label(self) -> str:
        return DEPRESSION_CLASSES[self.final]


def majority_vote(
    subject_id: str, probabilities: np.ndarray, n_classes: int = 3
) -> SubjectPrediction:
    """Aggregate one subject's segment probabilities into a final class.

    Each segment votes its argmax; the modal class wins. Vote ties fall to
    the tied class with the highest mean probability, then to the lowest
    class index, so the rule is fully deterministic.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] != n_classes:
        raise ValueError(f"need (n_segments, {n_classes}) probabilities, got {probs.shape}")
    votes = probs.argmax(axis=1)
    counts = np.bincount(votes, minlength=n_classes)
    mean_probs = probs.mean(axis=0)
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if len(tied) == 1:
        final = int(tied[0])
    else:
        best = mean_probs[tied].max()
        final = int(tied[np.flatnonzero(mean_probs[tied] == best)[0]])
    return SubjectPrediction(
        subject_id=subject_id,
        votes=[int(v) for v in votes],
        final=final,
        mean_probabilities=mean_probs,
    )


def vote_by_subject(
    subject_ids: list[str], probabilities: np.ndarray
) -> list[SubjectPrediction]:
    """Group segment probabilities by subject and vote each one."""
    rows_by_subject: dict[str, list[int]] = {}
    for i, subject in enumerate(subject_ids):
        rows_by_subject.setdefault(subject, []).append(i)
    probs = np.asarray(probabilities, dtype=np.float64)
    return [
        majority_vote(subject, probs[rows])
        for subject, rows in sorted(rows_by_subject.items())
    ]
