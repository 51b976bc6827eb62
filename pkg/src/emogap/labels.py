"""Closed label sets and the consistency-label rule."""

from __future__ import annotations

from .errors import LabelError

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"
SENTIMENTS = (POSITIVE, NEGATIVE, NEUTRAL)

HEALTHY = "healthy"
MILD = "mild"
MODERATE = "moderate"
DEPRESSION_CLASSES = (HEALTHY, MILD, MODERATE)


def check_sentiment(label: str) -> str:
    if label not in SENTIMENTS:
        raise LabelError(f"unknown sentiment label {label!r}")
    return label


def check_depression(label: str) -> str:
    if label not in DEPRESSION_CLASSES:
        raise LabelError(f"unknown depression class {label!r}")
    return label


def depression_index(label: str) -> int:
    return DEPRESSION_CLASSES.index(check_depression(label))


def consistency_label(sent_a: str, sent_t: str) -> int:
    """1 when the two modalities carry the same sentiment label, else 0.

    Equality is the whole rule, so neutral-vs-neutral is consistent too.
    """
    check_sentiment(sent_a)
    check_sentiment(sent_t)
    return 1 if sent_a == sent_t else 0
