"""Cross-validation driver and embedding-export tests (desk-tiny configs)."""

import json

import numpy as np
import pytest

from emogap import crossval as cv
from emogap.config import build_config
from emogap.errors import ConfigError
from emogap.fusion import DepressionModel, train_incremental
from emogap.synthetic import SynthConfig, generate_synthetic

TINY_DOC = {
    "train": {"max_epochs": 1, "pretrain_epochs": 1, "batch_size": 32},
    "encoder": {
        "n_blocks": 1,
        "n_heads": 2,
        "model_dim": 16,
        "head_dim": 8,
        "ffn_dim": 32,
    },
    "atei": {"n_blocks": 1, "fc_dim": 16, "scale_dim": 8},
    "classifier": {"hidden_dim": 16},
}


def tiny_dataset(seed=0, n_subjects=5, segs=3):
    cfg = SynthConfig(
        n_subjects=n_subjects,
        segments_mean=float(segs),
        segments_std=0.0,
        input_dim_a=6,
        input_dim_t=5,
        t_range_a=(3, 4),
        t_range_t=(2, 3),
        seed=seed,
    )
    return generate_synthetic(cfg)[0]


def tiny_cfg(**train_overrides):
    doc = json.loads(json.dumps(TINY_DOC))
    doc["train"].update(train_overrides)
    return build_config(doc, "desk")


class TestRunCrossValidation:
    def test_every_subject_tested_once(self):
        records = tiny_dataset()
        report = cv.run_cross_validation(records, tiny_cfg(), k=5)
        tested = [s for f in report.folds for s in f.test_subjects]
        assert sorted(tested) == sorted({r.subject_id for r in records})

    def test_report_echoes_config(self):
        records = tiny_dataset(seed=1)
        cfg = tiny_cfg(seed=77)
        report = cv.run_cross_validation(records, cfg, k=5)
        assert report.config == cfg.to_dict()
        assert report.to_dict()["config"]["train"]["seed"] == 77

    def test_aggregate_is_fold_mean(self):
        records = tiny_dataset(seed=2)
        report = cv.run_cross_validation(records, tiny_cfg(), k=5)
        agg = report.aggregate()
        manual = np.mean([f.subject_metrics.accuracy for f in report.folds])
        assert agg["subject"]["accuracy"] == pytest.approx(float(manual))

    def test_json_deterministic(self):
        records = tiny_dataset(seed=3)
        a = cv.run_cross_validation(records, tiny_cfg(), k=5).to_json()
        b = cv.run_cross_validation(records, tiny_cfg(), k=5).to_json()
        assert a == b

    def test_parallel_folds_identical_results(self):
        records = tiny_dataset(seed=4)
        serial = cv.run_cross_validation(records, tiny_cfg(), k=5, parallel_folds=1)
        parallel = cv.run_cross_validation(records, tiny_cfg(), k=5, parallel_folds=3)
        assert serial.to_json() == parallel.to_json()

    def test_history_per_fold(self):
        records = tiny_dataset(seed=5)
        report = cv.run_cross_validation(records, tiny_cfg(), k=5)
        for fold in report.folds:
            assert len(fold.history) == 2  # 1 pretrain + 1 joint


class TestFoldSeeds:
    def test_distinct_and_deterministic(self):
        seeds = [cv.fold_seed(7, i) for i in range(5)]
        assert len(set(seeds)) == 5
        assert seeds == [cv.fold_seed(7, i) for i in range(5)]


class TestExportEmbeddings:
    def make_model(self, records, **overrides):
        cfg = tiny_cfg(**overrides)
        model, _ = train_incremental(records, cfg)
        return model

    def test_row_count_and_width(self):
        records = tiny_dataset(seed=6)
        model = self.make_model(records)
        rows = cv.export_embeddings(model, records, "fc2")
        assert len(rows) == len(records)
        assert all(len(r["vector"]) == 16 for r in rows)
        head_rows = cv.export_embeddings(model, records, "head_hidden")
        assert all(len(r["vector"]) == 16 for r in head_rows)

    def test_unknown_layer(self):
        records = tiny_dataset(seed=7)
        model = self.make_model(records)
        with pytest.raises(ConfigError, match="unknown layer"):
            cv.export_embeddings(model, records, "fc9")

    def test_subnet_layer_requires_subnet(self):
        records = tiny_dataset(seed=8)
        model = self.make_model(records, atei_mode="off", pretrain_epochs=0)
        with pytest.raises(ConfigError, match="subnet"):
            cv.export_embeddings(model, records, "fc1")

    def test_file_bytes_deterministic(self, tmp_path):
        records = tiny_dataset(seed=9)
        model = self.make_model(records)
        rows = cv.export_embeddings(model, records, "fc1")
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        cv.write_embeddings(rows, a)
        cv.write_embeddings(cv.export_embeddings(model, records, "fc1"), b)
        assert a.read_bytes() == b.read_bytes()
        first = json.loads(a.read_text().splitlines()[0])
        assert set(first) == {"segment_id", "depression", "vector"}
