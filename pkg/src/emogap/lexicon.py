"""Lexicon-driven sentiment scoring for text segments.

A lexicon is a word -> polarity-score map loaded from a UTF-8 TSV file
(one ``word<TAB>score`` per line; the lexicon contents themselves are an
input, not shipped). A segment's label is the sign of its summed token
scores: positive sum -> positive, negative -> negative, zero -> neutral.
Unknown tokens score 0, so the empty segment is neutral.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DataFormatError
from .labels import NEGATIVE, NEUTRAL, POSITIVE


class Lexicon:
    def __init__(self, scores: dict[str, float] | None = None):
        self.scores = dict(scores or {})

    def score(self, word: str) -> float:
        return self.scores.get(word, 0.0)

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def load(cls, path) -> "Lexicon":
        path = Path(path)
        if not path.exists():
            raise DataFormatError(f"lexicon not found: {path}")
        scores: dict[str, float] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected 'word<TAB>score', got {line!r}"
                    )
                word, raw = parts
                try:
                    scores[word] = float(raw)
                except ValueError as exc:
                    raise DataFormatError(
                        f"{path}:{lineno}: score {raw!r} is not a number"
                    ) from exc
        return cls(scores)


def score_text_sentiment(tokens: list[str], lexicon: Lexicon) -> str:
    total = sum(lexicon.score(tok) for tok in tokens)
    if total > 0:
        return POSITIVE
    if total < 0:
        return NEGATIVE
    return NEUTRAL
