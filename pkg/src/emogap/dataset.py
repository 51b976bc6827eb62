"""Segment records, on-disk dataset layout, speaker-disjoint folds, batching.

A dataset directory holds ``manifest.jsonl`` plus one feature file per
segment per modality under ``features/``. Masks produced here are the single
source of validity truth downstream; padding value is 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import atfs
from .encoder import ACOUSTIC, TEXTUAL, FeatureSequence
from .errors import DataFormatError
from .labels import (
    check_depression,
    check_sentiment,
    consistency_label,
    depression_index,
)

FEATURE_DIR = "features"


@dataclass
class SegmentRecord:
    """One acoustic-textual segment pair with all its labels."""

    segment_id: str
    subject_id: str
    acoustic: FeatureSequence
    textual: FeatureSequence
    sent_a: str
    sent_t: str
    depression: str
    tokens: list[str] | None = None
    consistency: int = field(default=-1)

    def __post_init__(self):
        check_sentiment(self.sent_a)
        check_sentiment(self.sent_t)
        check_depression(self.depression)
        derived = consistency_label(self.sent_a, self.sent_t)
        if self.consistency == -1:
            self.consistency = derived
        elif self.consistency != derived:
            raise DataFormatError(
                f"segment {self.segment_id}: stored consistency {self.consistency} "
                f"contradicts labels ({self.sent_a}, {self.sent_t})"
            )


@dataclass
class Batch:
    acoustic: np.ndarray  # (B, T1max, Da) float32, zero-padded
    acoustic_mask: np.ndarray  # (B, T1max) bool
    textual: np.ndarray  # (B, T2max, Dt)
    textual_mask: np.ndarray  # (B, T2max) bool
    consistency: np.ndarray  # (B,) int64
    depression: np.ndarray  # (B,) int64
    segment_ids: list[str]
    subject_ids: list[str]

    def __len__(self) -> int:
        return len(self.segment_ids)


@dataclass
class FoldSplit:
    """k pairwise-disjoint subject groups covering every subject."""

    folds: list[list[str]]

    def __post_init__(self):
        seen: set[str] = set()
        for fold in self.folds:
            for subject in fold:
                if subject in seen:
                    raise ValueError(f"subject {subject!r} appears in two folds")
                seen.add(subject)

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, fold_index: int) -> tuple[set[str], set[str]]:
        test = set(self.folds[fold_index])
        train = {s for i, f in enumerate(self.folds) if i != fold_index for s in f}
        return train, test


def save_dataset(records: list[SegmentRecord], out_dir) -> None:
    """Write feature files plus the manifest for a record set."""
    out_dir = Path(out_dir)
    (out_dir / FEATURE_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        for modality, seq, sentiment in (
            (ACOUSTIC, rec.acoustic, rec.sent_a),
            (TEXTUAL, rec.textual, rec.sent_t),
        ):
            rel = f"{FEATURE_DIR}/{rec.segment_id}.{modality}.atfs"
            atfs.write_atfs(seq.features, out_dir / rel)
            entries.append(
                {
                    "segment_id": rec.segment_id,
                    "subject_id": rec.subject_id,
                    "modality": modality,
                    "path": rel,
                    "rows": seq.length,
                    "cols": seq.dim,
                    "sentiment": sentiment,
                    "depression": rec.depression,
                }
            )
    atfs.write_manifest(entries, out_dir / atfs.MANIFEST_NAME)


def load_dataset(data_dir) -> list[SegmentRecord]:
    """Read a dataset directory back into records, validating as it goes."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataFormatError(f"data directory not found: {data_dir}")
    entries = atfs.read_manifest(data_dir / atfs.MANIFEST_NAME)
    by_segment: dict[str, dict[str, dict]] = {}
    order: list[str] = []
    for entry in entries:
        seg = entry["segment_id"]
        if seg not in by_segment:
            by_segment[seg] = {}
            order.append(seg)
        if entry["modality"] in by_segment[seg]:
            raise DataFormatError(f"segment {seg}: duplicate {entry['modality']} row")
        by_segment[seg][entry["modality"]] = entry

    records = []
    for seg in order:
        rows = by_segment[seg]
        for modality in (ACOUSTIC, TEXTUAL):
            if modality not in rows:
                raise DataFormatError(f"segment {seg}: missing {modality} row")
        ea, et = rows[ACOUSTIC], rows[TEXTUAL]
        if ea["subject_id"] != et["subject_id"] or ea["depression"] != et["depression"]:
            raise DataFormatError(f"segment {seg}: modality rows disagree on labels")
        seqs = {}
        for entry in (ea, et):
            feature_path = data_dir / entry["path"]
            if not feature_path.exists():
                raise DataFormatError(
                    f"segment {seg}: feature file {entry['path']} missing"
                )
            matrix = atfs.read_atfs(feature_path)
            if matrix.shape != (entry["rows"], entry["cols"]):
                raise DataFormatError(
                    f"segment {seg}: {entry['path']} is {matrix.shape}, manifest "
                    f"says ({entry['rows']}, {entry['cols']})"
                )
            seqs[entry["modality"]] = FeatureSequence(entry["modality"], matrix)
        records.append(
            SegmentRecord(
                segment_id=seg,
                subject_id=ea["subject_id"],
                acoustic=seqs[ACOUSTIC],
                textual=seqs[TEXTUAL],
                sent_a=ea["sentiment"],
                sent_t=et["sentiment"],
                depression=ea["depression"],
            )
        )
    return records


def subject_classes(records: list[SegmentRecord]) -> dict[str, str]:
    """Map subject -> depression class, insisting each subject has one."""
    classes: dict[str, str] = {}
    for rec in records:
        prev = classes.get(rec.subject_id)
        if prev is None:
            classes[rec.subject_id] = rec.depression
        elif prev != rec.depression:
            raise DataFormatError(
                f"subject {rec.subject_id} carries two depression classes"
            )
    return classes


def split_speaker_folds(records: list[SegmentRecord], k: int, seed: int) -> FoldSplit:
    """Stratified k-fold split over subjects; per-class sizes differ by <= 1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    classes = subject_classes(records)
    by_class: dict[str, list[str]] = {}
    for subject in sorted(classes):
        by_class.setdefault(classes[subject], []).append(subject)
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    for cls in sorted(by_class):
        subjects = by_class[cls]
        if len(subjects) < k:
            raise ValueError(
                f"k={k} exceeds the {len(subjects)} subjects of class {cls!r}"
            )
        perm = rng.permutation(len(subjects))
        for i, idx in enumerate(perm):
            folds[i % k].append(subjects[idx])
    return FoldSplit(folds)


def _pad_stack(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    max_t = max(s.shape[0] for s in seqs)
    dim = seqs[0].shape[1]
    out = np.zeros((len(seqs), max_t, dim), dtype=np.float32)
    mask = np.zeros((len(seqs), max_t), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True
    return out, mask


def make_batches(
    records: list[SegmentRecord],
    batch_size: int,
    seed: int | np.random.Generator = 0,
    shuffle: bool = True,
) -> list[Batch]:
    """Seeded shuffle, then right-padded fixed-size batches (last one short)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = rng.permutation(len(records)) if shuffle else np.arange(len(records))
    batches = []
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start : start + batch_size]]
        acoustic, a_mask = _pad_stack([r.acoustic.features for r in chunk])
        textual, t_mask = _pad_stack([r.textual.features for r in chunk])
        batches.append(
            Batch(
                acoustic=acoustic,
                acoustic_mask=a_mask,
                textual=textual,
                textual_mask=t_mask,
                consistency=np.array([r.consistency for r in chunk], dtype=np.int64),
                depression=np.array(
                    [depression_index(r.depression) for r in chunk], dtype=np.int64
                ),
                segment_ids=[r.segment_id for r in chunk],
                subject_ids=[r.subject_id for r in chunk],
            )
        )
    return batches
