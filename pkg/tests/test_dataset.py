"""Dataset layer tests: records, disk round-trip, folds, batching."""

import numpy as np
import pytest

from emogap import dataset as ds
from emogap.encoder import FeatureSequence
from emogap.errors import DataFormatError
from emogap.synthetic import SynthConfig, generate_synthetic


def tiny_record(seg="s0", subject="subj0", cls="healthy", sa="positive", st="positive"):
    rng = np.random.default_rng(abs(hash(seg)) % 2**32)
    return ds.SegmentRecord(
        segment_id=seg,
        subject_id=subject,
        acoustic=FeatureSequence("acoustic", rng.standard_normal((5, 4))),
        textual=FeatureSequence("textual", rng.standard_normal((3, 4))),
        sent_a=sa,
        sent_t=st,
        depression=cls,
    )


class TestSegmentRecord:
    def test_consistency_derived(self):
        assert tiny_record(sa="positive", st="positive").consistency == 1
        assert tiny_record(sa="positive", st="negative").consistency == 0

    def test_contradictory_consistency_rejected(self):
        with pytest.raises(DataFormatError):
            ds.SegmentRecord(
                segment_id="x",
                subject_id="s",
                acoustic=FeatureSequence("acoustic", np.ones((2, 3))),
                textual=FeatureSequence("textual", np.ones((2, 3))),
                sent_a="positive",
                sent_t="positive",
                depression="mild",
                consistency=0,
            )


class TestDiskRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        cfg = SynthConfig(n_subjects=2, segments_mean=3.0, segments_std=0.0, seed=5)
        records, _ = generate_synthetic(cfg)
        ds.save_dataset(records, tmp_path)
        back = ds.load_dataset(tmp_path)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert a.segment_id == b.segment_id
            assert a.subject_id == b.subject_id
            assert (a.sent_a, a.sent_t, a.depression) == (b.sent_a, b.sent_t, b.depression)
            assert a.consistency == b.consistency
            assert a.acoustic.features.tobytes() == b.acoustic.features.tobytes()
            assert a.textual.features.tobytes() == b.textual.features.tobytes()

    def test_missing_dir(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            ds.load_dataset(tmp_path / "absent")

    def test_missing_feature_file(self, tmp_path):
        cfg = SynthConfig(n_subjects=1, segments_mean=2.0, segments_std=0.0, seed=1)
        records, _ = generate_synthetic(cfg)
        ds.save_dataset(records, tmp_path)
        victim = next((tmp_path / "features").iterdir())
        victim.unlink()
        with pytest.raises(DataFormatError, match="missing"):
            ds.load_dataset(tmp_path)

    def test_shape_mismatch_with_manifest(self, tmp_path):
        cfg = SynthConfig(n_subjects=1, segments_mean=2.0, segments_std=0.0, seed=2)
        records, _ = generate_synthetic(cfg)
        ds.save_dataset(records, tmp_path)
        from emogap import atfs

        victim = sorted((tmp_path / "features").iterdir())[0]
        atfs.write_atfs(np.zeros((1, 1), dtype=np.float32), victim)
        with pytest.raises(DataFormatError, match="manifest"):
            ds.load_dataset(tmp_path)


class TestFolds:
    def records_for(self, per_class=10, segs=3):
        cfg = SynthConfig(
            n_subjects=per_class, segments_mean=float(segs), segments_std=0.0, seed=3
        )
        records, _ = generate_synthetic(cfg)
        return records

    def test_even_split(self):
        records = self.records_for(per_class=10)
        split = ds.split_speaker_folds(records, k=5, seed=0)
        for fold in split.folds:
            assert len(fold) == 6  # 2 per class x 3 classes

    def test_same_seed_identical(self):
        records = self.records_for()
        a = ds.split_speaker_folds(records, 5, seed=42)
        b = ds.split_speaker_folds(records, 5, seed=42)
        assert a.folds == b.folds

    def test_disjoint_and_covering_many_seeds(self):
        records = self.records_for(per_class=7)
        all_subjects = set(ds.subject_classes(records))
        for seed in range(200):
            split = ds.split_speaker_folds(records, 3, seed=seed)
            union = set()
            for fold in split.folds:
                fold_set = set(fold)
                assert not (union & fold_set)
                union |= fold_set
            assert union == all_subjects

    def test_stratified_within_one(self):
        records = self.records_for(per_class=11)
        classes = ds.subject_classes(records)
        split = ds.split_speaker_folds(records, 4, seed=9)
        for cls in ("healthy", "mild", "moderate"):
            sizes = [sum(classes[s] == cls for s in fold) for fold in split.folds]
            assert max(sizes) - min(sizes) <= 1

    def test_k_too_large(self):
        records = self.records_for(per_class=3)
        with pytest.raises(ValueError, match="exceeds"):
            ds.split_speaker_folds(records, 4, seed=0)

    def test_train_test_partition(self):
        records = self.records_for(per_class=5)
        split = ds.split_speaker_folds(records, 5, seed=1)
        train, test = split.train_test(2)
        assert not (train & test)
        assert train | test == set(ds.subject_classes(records))


class TestBatching:
    def test_batch_sizes(self):
        cfg = SynthConfig(n_subjects=(44, 43, 43), segments_mean=1.0, segments_std=0.0)
        records, _ = generate_synthetic(cfg)  # 130 segments splits 64+64+2
        batches = ds.make_batches(records, 64, seed=0)
        assert [len(b) for b in batches] == [64, 64, 2]

    def test_equal_lengths_all_true_masks(self):
        cfg = SynthConfig(
            n_subjects=3,
            segments_mean=2.0,
            segments_std=0.0,
            t_range_a=(5, 5),
            t_range_t=(4, 4),
        )
        records, _ = generate_synthetic(cfg)
        for batch in ds.make_batches(records, 8, seed=1):
            assert batch.acoustic_mask.all()
            assert batch.textual_mask.all()

    def test_padding_is_zero_and_masked(self):
        cfg = SynthConfig(n_subjects=2, segments_mean=4.0, segments_std=0.0, seed=7)
        records, _ = generate_synthetic(cfg)
        for batch in ds.make_batches(records, 16, seed=2):
            assert (batch.acoustic[~batch.acoustic_mask] == 0).all()
            assert (batch.textual[~batch.textual_mask] == 0).all()

    def test_shuffle_deterministic(self):
        cfg = SynthConfig(n_subjects=4, segments_mean=3.0, segments_std=0.0, seed=8)
        records, _ = generate_synthetic(cfg)
        a = ds.make_batches(records, 8, seed=3)
        b = ds.make_batches(records, 8, seed=3)
        assert [x.segment_ids for x in a] == [x.segment_ids for x in b]
        c = ds.make_batches(records, 8, seed=4)
        assert [x.segment_ids for x in a] != [x.segment_ids for x in c]

    def test_all_records_kept(self):
        cfg = SynthConfig(n_subjects=3, segments_mean=5.0, segments_std=1.0, seed=9)
        records, _ = generate_synthetic(cfg)
        batches = ds.make_batches(records, 7, seed=5)
        seen = [s for b in batches for s in b.segment_ids]
        assert sorted(seen) == sorted(r.segment_id for r in records)
