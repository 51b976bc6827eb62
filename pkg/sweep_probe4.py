"""Round 4: head capacity vs memorization, on the pattern geometry."""
import json, sys, time
import numpy as np
from emogap.config import build_config
from emogap.crossval import evaluate_model, fold_seed
from emogap.dataset import split_speaker_folds
from emogap.fusion import train_incremental
from emogap.synthetic import SynthConfig, generate_synthetic

SYSTEMS = {
    "baseline": {"atei_mode": "off"},
    "zero_one": {"atei_mode": "zero_one"},
    "fc2": {"atei_mode": "embed_fc2"},
    "fc2_scaled": {"atei_mode": "embed_fc2", "scaling": True},
}
GEO = dict(input_dim_a=16, input_dim_t=16, t_range_a=(4, 8), t_range_t=(3, 6),
           center_scale=0.5, noise_sigma=1.0, pattern_strength=0.8)

def run_config(name, train_kwargs, hidden, seeds=(0,), k=5, folds_limit=5):
    t0 = time.time()
    out = {s: [] for s in SYSTEMS}
    train_acc = {s: [] for s in SYSTEMS}
    oracle = None
    for seed in seeds:
        synth = SynthConfig(n_subjects=20, segments_mean=10.0, segments_std=0.0,
                            mismatch_rates=(0.1, 0.4, 0.7), seed=seed, **GEO)
        records, summary = generate_synthetic(synth)
        oracle = summary
        split = split_speaker_folds(records, k, seed=seed)
        for fold in range(min(k, folds_limit)):
            test_set = set(split.folds[fold])
            train_recs = [r for r in records if r.subject_id not in test_set]
            test_recs = [r for r in records if r.subject_id in test_set]
            for sys_name, overrides in SYSTEMS.items():
                cfg = build_config({
                    "train": {**train_kwargs, **overrides, "seed": fold_seed(seed, fold)},
                    "classifier": {"hidden_dim": hidden},
                }, "desk")
                model, hist = train_incremental(train_recs, cfg)
                joint = [h for h in hist if h.phase == "joint"]
                train_acc[sys_name].append(joint[-1].accuracy)
                _, subj = evaluate_model(model, test_recs)
                out[sys_name].append(subj.accuracy)
    means = {s: float(np.mean(v)) for s, v in out.items()}
    report = {
        "config": name, "elapsed_s": round(time.time() - t0, 1),
        "oracle_vote": round(oracle.bayes_subject_accuracy, 4),
        "means": {s: round(m, 4) for s, m in means.items()},
        "train_acc": {s: round(float(np.mean(v)), 3) for s, v in train_acc.items()},
        "a": abs(means["baseline"] - 1/3) <= 0.07,
        "b": means["fc2"] >= oracle.bayes_subject_accuracy - 0.10,
        "c": means["fc2"] >= means["zero_one"] >= means["baseline"],
        "d": means["fc2_scaled"] >= means["fc2"],
    }
    print(json.dumps(report), flush=True)

grid = {
    "h16_lr1e-3": (dict(lr=1e-3), 16),
    "h32_lr1e-3": (dict(lr=1e-3), 32),
    "h16_lr5e-4": (dict(lr=5e-4), 16),
}
which = sys.argv[1] if len(sys.argv) > 1 else "all"
for name, (tk, hidden) in grid.items():
    if which in ("all", name):
        run_config(name, tk, hidden, seeds=(0,), folds_limit=5)
