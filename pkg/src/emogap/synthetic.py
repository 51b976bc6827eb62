"""Synthetic corpus with a known Bayes oracle.

The generator encodes the core modeling premise directly: each segment has a
latent textual sentiment; with a class-dependent probability the acoustic
sentiment disagrees with it. Features are Gaussian clusters around
per-sentiment centers, so each modality's marginal feature distribution is
identical across depression classes -- the class signal lives ONLY in the
cross-modal mismatch rate. Any single-modality (or mismatch-blind) model is
therefore at chance by construction.

The oracle summary reports what an ideal observer of the true per-segment
mismatch indicator achieves when it casts one Bayes-optimal vote per segment
and aggregates per subject with the pipeline's majority-vote rule (exact
binomial enumeration over mismatch counts). A subject-level count-likelihood
bound and the analytic consistency-detection ceiling are included alongside.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import SegmentRecord
from .encoder import ACOUSTIC, TEXTUAL, FeatureSequence
from .errors import ConfigError
from .labels import DEPRESSION_CLASSES, SENTIMENTS


def _per_class(value, name: str) -> tuple[float, float, float]:
    if isinstance(value, (int, float)):
        return (float(value),) * 3
    vals = tuple(float(v) for v in value)
    if len(vals) != 3:
        raise ConfigError(f"{name} must be a scalar or one value per class")
    return vals


@dataclass
class SynthConfig:
    """Generator geometry.

    Sentiment clusters (the first three feature dims) drive the sentiment
    labels. ``pattern_strength`` adds a per-segment random sign pattern of
    magnitude rho on the remaining shared dims: both modalities carry the
    SAME pattern exactly when the segment is consistent, an independent one
    otherwise. The pattern is the high-SNR expression of the mismatch
    indicator; since whether it is shared depends only on that indicator,
    per-class marginals stay identical and the class signal still lives
    only in the mismatch rate. pattern_strength=0 disables the channel.
    """

    n_subjects: int | tuple = 20
    segments_mean: float | tuple = (10.0, 14.5, 10.0)
    segments_std: float | tuple = 2.0
    input_dim_a: int = 24
    input_dim_t: int = 24
    t_range_a: tuple[int, int] = (6, 12)
    t_range_t: tuple[int, int] = (4, 10)
    mismatch_rates: tuple[float, float, float] = (0.1, 0.4, 0.7)
    center_scale: float = 3.0
    noise_sigma: float = 1.0
    pattern_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.n_subjects = tuple(int(v) for v in _per_class(self.n_subjects, "n_subjects"))
        self.segments_mean = _per_class(self.segments_mean, "segments_mean")
        self.segments_std = _per_class(self.segments_std, "segments_std")
        self.mismatch_rates = _per_class(self.mismatch_rates, "mismatch_rates")
        if any(n < 1 for n in self.n_subjects):
            raise ConfigError("n_subjects must be >= 1 per class")
        if any(m < 1 for m in self.segments_mean):
            raise ConfigError("segments_mean must be >= 1")
        if any(not 0.0 <= p <= 1.0 for p in self.mismatch_rates):
            raise ConfigError("mismatch_rates must lie in [0, 1]")
        if min(self.input_dim_a, self.input_dim_t) < 3:
            raise ConfigError("input dims must be >= 3 to hold distinct centers")
        for lo, hi in (self.t_range_a, self.t_range_t):
            if not 1 <= lo <= hi:
                raise ConfigError("T ranges must satisfy 1 <= min <= max")
        if self.center_scale <= 0:
            raise ConfigError("center_scale must be positive (centers distinct)")
        if self.noise_sigma <= 0:
            raise ConfigError("noise_sigma must be positive")
        if self.pattern_strength < 0:
            raise ConfigError("pattern_strength must be >= 0")
        if self.pattern_strength > 0 and self.pattern_dims < 1:
            raise ConfigError(
                "pattern_strength > 0 needs input dims > 3 on both modalities"
            )
        if len(set(self.mismatch_rates)) == 1:
            warnings.warn(
                "all classes share one mismatch rate; classes are indistinguishable",
                stacklevel=2,
            )

    @property
    def pattern_dims(self) -> int:
        return max(0, min(self.input_dim_a, self.input_dim_t) - 3)


@dataclass
class OracleSummary:
    """Analytic ceilings implied by the generator parameters."""

    bayes_subject_accuracy: float
    bayes_segment_accuracy: float
    bayes_subject_accuracy_count_rule: float
    bayes_consistency_accuracy: float
    per_class_subject_accuracy: dict[str, float]
    mismatch_rates: tuple[float, float, float]
    n_subjects: int
    n_segments: int
    empirical_mismatch_rates: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "bayes_subject_accuracy": self.bayes_subject_accuracy,
            "bayes_segment_accuracy": self.bayes_segment_accuracy,
            "bayes_subject_accuracy_count_rule": self.bayes_subject_accuracy_count_rule,
            "bayes_consistency_accuracy": self.bayes_consistency_accuracy,
            "per_class_subject_accuracy": self.per_class_subject_accuracy,
            "mismatch_rates": list(self.mismatch_rates),
            "n_subjects": self.n_subjects,
            "n_segments": self.n_segments,
            "empirical_mismatch_rates": self.empirical_mismatch_rates,
        }


def _indicator_posteriors(rates) -> tuple[np.ndarray, np.ndarray]:
    """Class posteriors given one segment's indicator, equal class priors."""
    p = np.asarray(rates, dtype=np.float64)
    mis = p / p.sum() if p.sum() > 0 else np.full(3, 1 / 3)
    q = 1.0 - p
    con = q / q.sum() if q.sum() > 0 else np.full(3, 1 / 3)
    return con, mis


def subject_vote_from_counts(n_consistent: int, n_mismatch: int, rates) -> int:
    """The indicator oracle's subject decision for given segment counts.

    Each segment votes its posterior argmax; the subject takes the modal
    vote, ties resolved by the mean posterior, then by lowest class index --
    the same rule the evaluation pipeline documents for majority voting.
    """
    post_con, post_mis = _indicator_posteriors(rates)
    vote_con = int(post_con.argmax())
    vote_mis = int(post_mis.argmax())
    counts = np.zeros(3)
    counts[vote_con] += n_consistent
    counts[vote_mis] += n_mismatch
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    if len(tied) == 1:
        return int(tied[0])
    total = n_consistent + n_mismatch
    mean_post = (n_consistent * post_con + n_mismatch * post_mis) / total
    best_post = mean_post[tied].max()
    return int(tied[np.flatnonzero(mean_post[tied] == best_post)[0]])


def _binom_pmf(m: int, n: int, p: float) -> float:
    return math.comb(n, m) * p**m * (1.0 - p) ** (n - m)


def oracle_subject_correct_prob(n_segments: int, class_index: int, rates) -> float:
    """P(vote oracle names the class) by exact binomial enumeration."""
    p = rates[class_index]
    total = 0.0
    for m in range(n_segments + 1):
        if subject_vote_from_counts(n_segments - m, m, rates) == class_index:
            total += _binom_pmf(m, n_segments, p)
    return total


def count_rule_correct_prob(n_segments: int, class_index: int, rates) -> float:
    """P(correct) for the binomial-likelihood subject classifier (upper bound)."""
    p = rates[class_index]
    total = 0.0
    for m in range(n_segments + 1):
        likes = [_binom_pmf(m, n_segments, rates[c]) for c in range(3)]
        if int(np.argmax(likes)) == class_index:
            total += _binom_pmf(m, n_segments, p)
    return total


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


_HERM_X, _HERM_W = np.polynomial.hermite.hermgauss(96)


def _top_of_three_prob(a: float) -> float:
    """P(N(a,1) exceeds two independent N(0,1)) via Gauss-Hermite quadrature."""
    vals = np.array([_phi(math.sqrt(2.0) * x + a) ** 2 for x in _HERM_X])
    return float((_HERM_W * vals).sum() / math.sqrt(math.pi))


def sentiment_map_accuracy(cfg: SynthConfig, modality: str) -> float:
    """P(the MAP sentiment estimate is right), averaged over the T range.

    Rows are i.i.d. Gaussians around orthogonal centers, so the sample mean
    is sufficient and the MAP rule compares its first three coordinates.
    """
    lo, hi = cfg.t_range_a if modality == ACOUSTIC else cfg.t_range_t
    acc = 0.0
    for t in range(lo, hi + 1):
        a = cfg.center_scale * math.sqrt(t) / cfg.noise_sigma
        acc += _top_of_three_prob(a)
    return acc / (hi - lo + 1)


def cluster_detector_accuracy(cfg: SynthConfig, consistent_share: float) -> float:
    """Indicator detection by comparing per-modality MAP sentiment estimates.

    Wrong estimates fall uniformly on the two other sentiments by symmetry
    of the orthogonal centers.
    """
    qa = sentiment_map_accuracy(cfg, ACOUSTIC)
    qt = sentiment_map_accuracy(cfg, TEXTUAL)
    ea, et = (1.0 - qa) / 2.0, (1.0 - qt) / 2.0
    match_given_consistent = qa * qt + 2.0 * ea * et
    match_given_mismatch = qa * et + ea * qt + ea * et
    return consistent_share * match_given_consistent + (1.0 - consistent_share) * (
        1.0 - match_given_mismatch
    )


def pattern_detector_accuracy(cfg: SynthConfig, consistent_share: float) -> float:
    """Indicator detection by counting per-dim sign agreements of the two
    pooled pattern blocks; exact via binomial enumeration over dims,
    averaged over the (uniform, independent) length ranges."""
    n_dims = cfg.pattern_dims
    if cfg.pattern_strength == 0.0 or n_dims == 0:
        return max(consistent_share, 1.0 - consistent_share)
    pi1, pi0 = consistent_share, 1.0 - consistent_share
    lo_a, hi_a = cfg.t_range_a
    lo_t, hi_t = cfg.t_range_t
    total = 0.0
    for t_a in range(lo_a, hi_a + 1):
        delta_a = _phi(-cfg.pattern_strength * math.sqrt(t_a) / cfg.noise_sigma)
        for t_t in range(lo_t, hi_t + 1):
            delta_t = _phi(-cfg.pattern_strength * math.sqrt(t_t) / cfg.noise_sigma)
            q1 = (1 - delta_a) * (1 - delta_t) + delta_a * delta_t
            acc = sum(
                max(pi1 * _binom_pmf(k, n_dims, q1), pi0 * _binom_pmf(k, n_dims, 0.5))
                for k in range(n_dims + 1)
            )
            total += acc
    return total / ((hi_a - lo_a + 1) * (hi_t - lo_t + 1))


def consistency_bayes_accuracy(cfg: SynthConfig, consistent_share: float) -> float:
    """Reference ceiling for match/mismatch detection from features.

    The best of three well-defined detectors, each with an exact analytic
    accuracy: always-guess-the-prior, sentiment-cluster comparison, and
    sign-pattern agreement. A lower bound on the true Bayes ceiling that is
    tight whenever one channel dominates (as in the shipped geometries).
    """
    prior_guess = max(consistent_share, 1.0 - consistent_share)
    return max(
        prior_guess,
        cluster_detector_accuracy(cfg, consistent_share),
        pattern_detector_accuracy(cfg, consistent_share),
    )


def generate_synthetic(cfg: SynthConfig) -> tuple[list[SegmentRecord], OracleSummary]:
    """Draw the corpus and compute its oracle summary. Bit-reproducible."""
    rng = np.random.default_rng(cfg.seed)
    centers_a = np.zeros((3, cfg.input_dim_a))
    centers_t = np.zeros((3, cfg.input_dim_t))
    for s in range(3):
        centers_a[s, s] = cfg.center_scale
        centers_t[s, s] = cfg.center_scale

    records: list[SegmentRecord] = []
    subject_rows: list[tuple[int, int]] = []  # (class index, n segments)
    mismatch_counts = np.zeros(3)
    segment_counts = np.zeros(3)

    for c, cls in enumerate(DEPRESSION_CLASSES):
        p = cfg.mismatch_rates[c]
        for j in range(cfg.n_subjects[c]):
            subject_id = f"{cls}_{j:03d}"
            n_seg = max(
                1, int(round(rng.normal(cfg.segments_mean[c], cfg.segments_std[c])))
            )
            subject_rows.append((c, n_seg))
            for i in range(n_seg):
                s_t = int(rng.integers(0, 3))
                mismatched = bool(rng.random() < p)
                if mismatched:
                    others = [s for s in range(3) if s != s_t]
                    s_a = others[int(rng.integers(0, 2))]
                else:
                    s_a = s_t
                n_pat = cfg.pattern_dims if cfg.pattern_strength > 0 else 0
                if n_pat:
                    pattern_t = cfg.pattern_strength * (
                        2.0 * rng.integers(0, 2, n_pat) - 1.0
                    )
                    if mismatched:
                        pattern_a = cfg.pattern_strength * (
                            2.0 * rng.integers(0, 2, n_pat) - 1.0
                        )
                    else:
                        pattern_a = pattern_t
                t1 = int(rng.integers(cfg.t_range_a[0], cfg.t_range_a[1] + 1))
                feats_a = centers_a[s_a] + cfg.noise_sigma * rng.standard_normal(
                    (t1, cfg.input_dim_a)
                )
                t2 = int(rng.integers(cfg.t_range_t[0], cfg.t_range_t[1] + 1))
                feats_t = centers_t[s_t] + cfg.noise_sigma * rng.standard_normal(
                    (t2, cfg.input_dim_t)
                )
                if n_pat:
                    feats_a[:, 3 : 3 + n_pat] += pattern_a
                    feats_t[:, 3 : 3 + n_pat] += pattern_t
                records.append(
                    SegmentRecord(
                        segment_id=f"{subject_id}_s{i:03d}",
                        subject_id=subject_id,
                        acoustic=FeatureSequence(ACOUSTIC, feats_a.astype(np.float32)),
                        textual=FeatureSequence(TEXTUAL, feats_t.astype(np.float32)),
                        sent_a=SENTIMENTS[s_a],
                        sent_t=SENTIMENTS[s_t],
                        depression=cls,
                    )
                )
                mismatch_counts[c] += mismatched
                segment_counts[c] += 1

    rates = cfg.mismatch_rates
    post_con, post_mis = _indicator_posteriors(rates)
    vote_con, vote_mis = int(post_con.argmax()), int(post_mis.argmax())
    seg_share = segment_counts / segment_counts.sum()
    seg_acc = sum(
        seg_share[c] * ((1 - rates[c]) * (vote_con == c) + rates[c] * (vote_mis == c))
        for c in range(3)
    )

    per_class_sum = np.zeros(3)
    per_class_n = np.zeros(3)
    count_rule_sum = 0.0
    for c, n_seg in subject_rows:
        per_class_sum[c] += oracle_subject_correct_prob(n_seg, c, rates)
        per_class_n[c] += 1
        count_rule_sum += count_rule_correct_prob(n_seg, c, rates)
    n_subjects = len(subject_rows)
    consistent_share = float(
        sum(seg_share[c] * (1.0 - rates[c]) for c in range(3))
    )

    summary = OracleSummary(
        bayes_subject_accuracy=float(per_class_sum.sum() / n_subjects),
        bayes_segment_accuracy=float(seg_acc),
        bayes_subject_accuracy_count_rule=float(count_rule_sum / n_subjects),
        bayes_consistency_accuracy=consistency_bayes_accuracy(cfg, consistent_share),
        per_class_subject_accuracy={
            DEPRESSION_CLASSES[c]: float(per_class_sum[c] / per_class_n[c])
            for c in range(3)
        },
        mismatch_rates=rates,
        n_subjects=n_subjects,
        n_segments=int(segment_counts.sum()),
        empirical_mismatch_rates={
            DEPRESSION_CLASSES[c]: float(mismatch_counts[c] / segment_counts[c])
            for c in range(3)
        },
    )
    return records, summary
