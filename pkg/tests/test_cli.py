"""End-to-end CLI tests: every command through its public surface."""

import json
import struct
import subprocess
import sys

import pytest

from emogap.cli import main

DESK_TINY = {
    "profile": "desk",
    "train": {"max_epochs": 1, "pretrain_epochs": 1, "batch_size": 32},
    "encoder": {"n_blocks": 1, "n_heads": 2, "model_dim": 16, "head_dim": 8,
                "ffn_dim": 32},
    "atei": {"n_blocks": 1, "fc_dim": 16, "scale_dim": 8},
    "classifier": {"hidden_dim": 16},
    "synth": {
        "n_subjects": 5,
        "segments_mean": 3.0,
        "segments_std": 0.0,
        "input_dim_a": 6,
        "input_dim_t": 5,
        "t_range_a": [3, 4],
        "t_range_t": [2, 3],
    },
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(DESK_TINY))
    return path


@pytest.fixture
def data_dir(tmp_path, config_path):
    out = tmp_path / "data"
    assert main(["synth", "--config", str(config_path), "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_outputs(self, tmp_path, config_path):
        out = tmp_path / "corpus"
        assert main(["synth", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "manifest.jsonl").exists()
        oracle = json.loads((out / "oracle.json").read_text())
        assert "bayes_subject_accuracy" in oracle["oracle"]
        n_lines = len((out / "manifest.jsonl").read_text().splitlines())
        assert n_lines == 5 * 3 * 3 * 2  # subjects x classes x segments x modalities

    def test_default_desk_profile_subject_count(self, tmp_path):
        out = tmp_path / "d"
        assert main(["synth", "--out", str(out), "--set",
                     "synth.segments_mean=1.0", "--set", "synth.segments_std=0.0"]) == 0
        oracle = json.loads((out / "oracle.json").read_text())
        assert oracle["oracle"]["n_subjects"] == 20 * 3

    def test_same_seed_byte_identical(self, tmp_path, config_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["synth", "--config", str(config_path), "--seed", "5",
                         "--out", str(out)]) == 0
            outs.append(out)
        for rel in ["manifest.jsonl", "oracle.json"]:
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
        a_feats = sorted((outs[0] / "features").iterdir())
        b_feats = sorted((outs[1] / "features").iterdir())
        assert [f.name for f in a_feats] == [f.name for f in b_feats]
        for fa, fb in zip(a_feats, b_feats):
            assert fa.read_bytes() == fb.read_bytes()

    def test_bad_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"nope": 1}}))
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


class TestTrainAndCv:
    def test_cv_writes_report(self, tmp_path, config_path, data_dir):
        report_path = tmp_path / "report.json"
        code = main([
            "cv", "--config", str(config_path), "--data", str(data_dir),
            "--out", str(report_path), "--k", "5",
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["k"] == 5
        assert len(report["folds"]) == 5
        assert report["averaging"] == "macro"

    def test_cv_missing_data_exit_3_no_partial_report(self, tmp_path, config_path):
        report_path = tmp_path / "r.json"
        code = main([
            "cv", "--config", str(config_path), "--data", str(tmp_path / "nope"),
            "--out", str(report_path),
        ])
        assert code == 3
        assert not report_path.exists()

    def test_cv_parallel_folds_identical(self, tmp_path, config_path, data_dir):
        paths = []
        for n, name in ((1, "serial.json"), (3, "parallel.json")):
            p = tmp_path / name
            assert main([
                "cv", "--config", str(config_path), "--data", str(data_dir),
                "--out", str(p), "--parallel-folds", str(n),
            ]) == 0
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_train_checkpoint_and_export(self, tmp_path, config_path, data_dir):
        ckpt = tmp_path / "model.atck"
        assert main(["train", "--config", str(config_path), "--data", str(data_dir),
                     "--out", str(ckpt)]) == 0
        raw = ckpt.read_bytes()
        assert raw[:4] == b"ATCK"
        assert struct.unpack_from("<I", raw, 4)[0] == 1
        emb = tmp_path / "emb.jsonl"
        assert main(["export-embeddings", "--data", str(data_dir),
                     "--checkpoint", str(ckpt), "--layer", "fc2",
                     "--out", str(emb)]) == 0
        lines = emb.read_text().splitlines()
        assert len(lines) == 5 * 3 * 3
        row = json.loads(lines[0])
        assert len(row["vector"]) == 16

    def test_pretrain_checkpoint_then_warm_start(self, tmp_path, config_path, data_dir):
        sub = tmp_path / "subnet.atck"
        assert main(["pretrain-atei", "--config", str(config_path),
                     "--data", str(data_dir), "--out", str(sub)]) == 0
        full = tmp_path / "full.atck"
        assert main(["train", "--config", str(config_path), "--data", str(data_dir),
                     "--atei-init", str(sub), "--out", str(full)]) == 0

    def test_train_reruns_byte_identical(self, tmp_path, config_path, data_dir):
        outs = []
        for name in ("m1.atck", "m2.atck"):
            p = tmp_path / name
            assert main(["train", "--config", str(config_path), "--data",
                         str(data_dir), "--out", str(p)]) == 0
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]


class TestScoreText:
    def test_hand_scores(self, tmp_path):
        lex = tmp_path / "lex.tsv"
        lex.write_text("good\t1\nbad\t-1\nawful\t-2\n")
        tokens = tmp_path / "tokens.txt"
        tokens.write_text("good good bad\nawful good\n")
        out = tmp_path / "labels.txt"
        assert main(["score-text", "--lexicon", str(lex), "--tokens", str(tokens),
                     "--out", str(out)]) == 0
        assert out.read_text().splitlines() == ["positive", "negative"]

    def test_missing_lexicon_exit_3(self, tmp_path):
        tokens = tmp_path / "tokens.txt"
        tokens.write_text("hello\n")
        assert main(["score-text", "--lexicon", str(tmp_path / "no.tsv"),
                     "--tokens", str(tokens)]) == 3


class TestCliContract:
    def test_help_on_every_command(self):
        for cmd in ("synth", "pretrain-atei", "train", "cv", "score-text",
                    "export-embeddings"):
            proc = subprocess.run(
                [sys.executable, "-m", "emogap.cli", cmd, "--help"],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0
            assert "--" in proc.stdout

    def test_unknown_flag_fails_fast(self):
        proc = subprocess.run(
            [sys.executable, "-m", "emogap.cli", "synth", "--frobnicate"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2

    def test_machine_output_stdout_only(self, tmp_path):
        lex = tmp_path / "lex.tsv"
        lex.write_text("up\t1\n")
        tokens = tmp_path / "t.txt"
        tokens.write_text("up\n")
        proc = subprocess.run(
            [sys.executable, "-m", "emogap.cli", "score-text",
             "--lexicon", str(lex), "--tokens", str(tokens)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout == "positive\n"
