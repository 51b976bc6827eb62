"""Round 2: weak per-frame SNR so the supervised subnet outpaces XOR learning."""
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

def run_config(name, synth_kwargs, train_kwargs, seeds=(0,), k=5, folds_limit=5):
    t0 = time.time()
    out = {s: [] for s in SYSTEMS}
    pre_acc = []
    oracle = None
    for seed in seeds:
        synth = SynthConfig(n_subjects=20, segments_mean=10.0, segments_std=0.0,
                            mismatch_rates=(0.1, 0.4, 0.7), seed=seed, **synth_kwargs)
        records, summary = generate_synthetic(synth)
        oracle = summary
        split = split_speaker_folds(records, k, seed=seed)
        for fold in range(min(k, folds_limit)):
            test_set = set(split.folds[fold])
            train_recs = [r for r in records if r.subject_id not in test_set]
            test_recs = [r for r in records if r.subject_id in test_set]
            for sys_name, overrides in SYSTEMS.items():
                cfg = build_config({"train": {**train_kwargs, **overrides,
                                              "seed": fold_seed(seed, fold)}}, "desk")
                model, hist = train_incremental(train_recs, cfg)
                if sys_name == "fc2":
                    pre = [h for h in hist if h.phase == "pretrain"]
                    if pre: pre_acc.append(pre[-1].accuracy)
                _, subj = evaluate_model(model, test_recs)
                out[sys_name].append(subj.accuracy)
    means = {s: float(np.mean(v)) for s, v in out.items()}
    report = {
        "config": name, "elapsed_s": round(time.time() - t0, 1),
        "oracle_vote": round(oracle.bayes_subject_accuracy, 4),
        "consistency_bayes": round(oracle.bayes_consistency_accuracy, 4),
        "pretrain_acc": round(float(np.mean(pre_acc)), 4) if pre_acc else None,
        "means": {s: round(m, 4) for s, m in means.items()},
        "a": abs(means["baseline"] - 1/3) <= 0.07,
        "b": means["fc2"] >= oracle.bayes_subject_accuracy - 0.10,
        "c": means["fc2"] >= means["zero_one"] >= means["baseline"],
        "d": means["fc2_scaled"] >= means["fc2"],
    }
    print(json.dumps(report), flush=True)

grid = {
    "s2.5_lr3e-4": (dict(noise_sigma=2.5, t_range_a=(4,8), t_range_t=(3,6), input_dim_a=16, input_dim_t=16), dict(lr=3e-4)),
    "s2.0_lr3e-4": (dict(noise_sigma=2.0, t_range_a=(4,8), t_range_t=(3,6), input_dim_a=16, input_dim_t=16), dict(lr=3e-4)),
    "s2.5_lr5e-4": (dict(noise_sigma=2.5, t_range_a=(4,8), t_range_t=(3,6), input_dim_a=16, input_dim_t=16), dict(lr=5e-4)),
    "s3.0_lr3e-4": (dict(noise_sigma=3.0, t_range_a=(4,8), t_range_t=(3,6), input_dim_a=16, input_dim_t=16), dict(lr=3e-4)),
}
which = sys.argv[1] if len(sys.argv) > 1 else "all"
for name, (sk, tk) in grid.items():
    if which in ("all", name):
        run_config(name, sk, tk, seeds=(0,), folds_limit=5)
