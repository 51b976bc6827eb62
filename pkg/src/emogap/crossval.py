"""Speaker-disjoint cross-validation driver and embedding export."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .dataset import SegmentRecord, make_batches, split_speaker_folds, subject_classes
from .errors import ConfigError
from .fusion import DepressionModel, EpochRecord, train_incremental
from .labels import depression_index
from .metrics import Metrics, compute_metrics, vote_by_subject

EXPORT_LAYERS = ("head_hidden", "fc1", "fc2", "fc3")


@dataclass
class FoldReport:
    fold: int
    test_subjects: list[str]
    segment_metrics: Metrics
    subject_metrics: Metrics
    history: list[EpochRecord]

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "test_subjects": sorted(self.test_subjects),
            "segment": self.segment_metrics.to_dict(),
            "subject": self.subject_metrics.to_dict(),
            "history": [h.to_dict() for h in self.history],
        }


@dataclass
class CvReport:
    k: int
    config: dict
    folds: list[FoldReport]
    averaging: str = "macro"

    def aggregate(self) -> dict:
        out = {}
        for level, pick in (
            ("segment", lambda f: f.segment_metrics),
            ("subject", lambda f: f.subject_metrics),
        ):
            out[level] = {
                name: float(np.mean([getattr(pick(f), name) for f in self.folds]))
                for name in ("accuracy", "f1", "precision", "recall")
            }
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "averaging": self.averaging,
            "config": self.config,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": self.aggregate(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def predict_records(
    model: DepressionModel, records: list[SegmentRecord], batch_size: int = 64
) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    """Deterministic unshuffled inference over records.

    Returns (segment_ids, subject_ids, probabilities (N, 3), true labels).
    """
    seg_ids: list[str] = []
    subj_ids: list[str] = []
    probs: list[np.ndarray] = []
    labels: list[int] = []
    for batch in make_batches(records, batch_size, shuffle=False):
        seg_ids.extend(batch.segment_ids)
        subj_ids.extend(batch.subject_ids)
        probs.append(model.predict_batch(batch))
        labels.extend(int(x) for x in batch.depression)
    return seg_ids, subj_ids, np.concatenate(probs, axis=0), np.asarray(labels)


def evaluate_model(
    model: DepressionModel, records: list[SegmentRecord]
) -> tuple[Metrics, Metrics]:
    """Segment-level and majority-voted subject-level metrics."""
    _, subj_ids, probs, labels = predict_records(
        model, records, model.cfg.train.batch_size
    )
    segment_metrics = compute_metrics(probs.argmax(axis=1), labels)
    votes = vote_by_subject(subj_ids, probs)
    classes = subject_classes(records)
    subject_true = [depression_index(classes[v.subject_id]) for v in votes]
    subject_pred = [v.final for v in votes]
    subject_metrics = compute_metrics(subject_pred, subject_true)
    return segment_metrics, subject_metrics


def fold_seed(base_seed: int, fold_index: int) -> int:
    """Independent per-fold seed; stable under parallel execution."""
    return int(np.random.SeedSequence([base_seed, fold_index]).generate_state(1)[0])


def _run_fold(args: tuple) -> FoldReport:
    records, cfg, fold_index, test_subjects = args
    test_set = set(test_subjects)
    train_records = [r for r in records if r.subject_id not in test_set]
    test_records = [r for r in records if r.subject_id in test_set]
    fold_cfg = replace(
        cfg, train=replace(cfg.train, seed=fold_seed(cfg.train.seed, fold_index))
    )
    model, history = train_incremental(train_records, fold_cfg)
    segment_metrics, subject_metrics = evaluate_model(model, test_records)
    return FoldReport(
        fold=fold_index,
        test_subjects=sorted(test_subjects),
        segment_metrics=segment_metrics,
        subject_metrics=subject_metrics,
        history=history,
    )


def run_cross_validation(
    records: list[SegmentRecord],
    cfg: RunConfig,
    k: int = 5,
    parallel_folds: int = 1,
) -> CvReport:
    """Train and evaluate one model per fold; results are independent of
    parallel_folds because each fold derives its own seed."""
    split = split_speaker_folds(records, k, seed=cfg.train.seed)
    jobs = [(records, cfg, i, split.folds[i]) for i in range(k)]
    if parallel_folds > 1:
        with ProcessPoolExecutor(max_workers=min(parallel_folds, k)) as pool:
            folds = list(pool.map(_run_fold, jobs))
    else:
        folds = [_run_fold(job) for job in jobs]
    folds.sort(key=lambda f: f.fold)
    return CvReport(k=k, config=cfg.to_dict(), folds=folds)


def export_embeddings(
    model: DepressionModel,
    records: list[SegmentRecord],
    layer: str,
    batch_size: int = 64,
) -> list[dict]:
    """One export row per segment from the chosen layer.

    ``head_hidden`` is the classifier's final hidden layer; ``fc1``/``fc2``/
    ``fc3`` tap the consistency subnet (which must therefore be enabled).
    """
    if layer not in EXPORT_LAYERS:
        raise ConfigError(f"unknown layer {layer!r}; expected one of {EXPORT_LAYERS}")
    if layer != "head_hidden" and model.atei is None:
        raise ConfigError(f"layer {layer!r} needs the consistency subnet enabled")
    rows: list[dict] = []
    for batch in make_batches(records, batch_size, shuffle=False):
        result = model.forward_batch(batch, training=False)
        if layer == "head_hidden":
            vectors = result.head_hidden.data
        else:
            vectors = getattr(result.atei_out, layer).data
        for i, seg_id in enumerate(batch.segment_ids):
            rows.append(
                {
                    "segment_id": seg_id,
                    "depression": int(batch.depression[i]),
                    "vector": [float(x) for x in vectors[i]],
                }
            )
    return rows


def write_embeddings(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
