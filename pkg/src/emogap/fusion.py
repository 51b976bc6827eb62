"""Severity model: fusion of branch embeddings, classifier head, and the
two-phase (pretrain, then joint) training loop.

The acoustic and textual branches produce segment embeddings; the
consistency subnet contributes its mismatch representation; the configured
fusion merges whatever is present in fixed (acoustic, textual, mismatch)
order; a three-layer head predicts healthy/mild/moderate. Joint training
optimizes the unweighted sum of the depression and consistency
cross-entropies on each batch, with gradients flowing into the subnet both
through its own loss and through the fused representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import inconsistency as inc
from .config import FUSION_ADD, FUSION_CONCAT, FUSION_MULT, RunConfig
from .dataset import Batch, SegmentRecord, make_batches
from .errors import ConfigError, ShapeError


@dataclass
class LossBreakdown:
    """One batch's loss terms; total is the other two, by construction."""

    depression: float
    atei: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.depression + self.atei


def fuse(parts: list[ad.Tensor], strategy: str) -> ad.Tensor:
    """Merge the present inputs, fixed (acoustic, textual, mismatch) order."""
    if not parts:
        raise ShapeError("fuse: no inputs present")
    if strategy == FUSION_CONCAT:
        return ad.concat_last(parts)
    widths = {p.shape[-1] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"{strategy} fusion needs equal widths, got {sorted(widths)}")
    if strategy not in (FUSION_ADD, FUSION_MULT):
        raise ConfigError(f"unknown fusion strategy {strategy!r}")
    out = parts[0]
    for p in parts[1:]:
        out = ad.add(out, p) if strategy == FUSION_ADD else ad.mul(out, p)
    return out


@dataclass
class ClassifierParams:
    w1: ad.Parameter
    b1: ad.Parameter
    w2: ad.Parameter
    b2: ad.Parameter
    w3: ad.Parameter
    b3: ad.Parameter

    def parameters(self) -> list[ad.Parameter]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]


def init_classifier(
    rng: np.random.Generator, input_dim: int, hidden_dim: int, dtype=np.float32
) -> ClassifierParams:
    def w(label, shape):
        return ad.Parameter(f"head/{label}", ad.xavier_uniform(rng, shape, dtype))

    def zeros(label, shape):
        return ad.Parameter(f"head/{label}", np.zeros(shape, dtype=dtype))

    return ClassifierParams(
        w1=w("w1", (input_dim, hidden_dim)),
        b1=zeros("b1", (hidden_dim,)),
        w2=w("w2", (hidden_dim, hidden_dim)),
        b2=zeros("b2", (hidden_dim,)),
        w3=w("w3", (hidden_dim, 3)),
        b3=zeros("b3", (3,)),
    )


def classify_with_hidden(
    e_fusion: ad.Tensor, params: ClassifierParams
) -> tuple[ad.Tensor, ad.Tensor]:
    """Head forward; also returns the final hidden layer for export."""
    if e_fusion.shape[-1] != params.w1.value.shape[0]:
        raise ShapeError(
            f"classify: fused width {e_fusion.shape} vs head input "
            f"{params.w1.value.shape}"
        )
    h1 = ad.relu(ad.add(ad.matmul(e_fusion, ad.param_node(params.w1)), ad.param_node(params.b1)))
    h2 = ad.relu(ad.add(ad.matmul(h1, ad.param_node(params.w2)), ad.param_node(params.b2)))
    logits = ad.add(ad.matmul(h2, ad.param_node(params.w3)), ad.param_node(params.b3))
    return logits, h2


def classify(e_fusion: ad.Tensor, params: ClassifierParams) -> ad.Tensor:
    return classify_with_hidden(e_fusion, params)[0]


def joint_loss(
    dep_logits: ad.Tensor,
    dep_labels: np.ndarray,
    atei_logits: ad.Tensor | None,
    atei_labels: np.ndarray | None,
) -> tuple[ad.Tensor, LossBreakdown]:
    """Unweighted sum of the two cross-entropies (consistency term optional).

    Returns the scalar graph node to backprop plus the recorded breakdown;
    the breakdown's total always equals depression + atei exactly.
    """
    dep_ce = ad.cross_entropy(dep_logits, dep_labels)
    if atei_logits is None:
        return dep_ce, LossBreakdown(depression=float(dep_ce.data), atei=0.0)
    atei_ce = ad.cross_entropy(atei_logits, atei_labels)
    total = ad.add(dep_ce, atei_ce)
    return total, LossBreakdown(depression=float(dep_ce.data), atei=float(atei_ce.data))


@dataclass
class EpochRecord:
    phase: str  # "pretrain" | "joint"
    epoch: int
    total: float
    depression: float
    atei: float
    accuracy: float
    batches: list[LossBreakdown] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "epoch": self.epoch,
            "total": self.total,
            "depression": self.depression,
            "atei": self.atei,
            "accuracy": self.accuracy,
        }


@dataclass
class ForwardResult:
    dep_logits: ad.Tensor
    head_hidden: ad.Tensor
    fused: ad.Tensor
    atei_out: inc.AteiOutputs | None
    atei_rep: ad.Tensor | None


class DepressionModel:
    """All parameters plus the forward pass for one configuration."""

    def __init__(self, cfg: RunConfig, input_dim_a: int, input_dim_t: int, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.input_dim_a = input_dim_a
        self.input_dim_t = input_dim_t
        self.dtype = dtype
        t = cfg.train
        # one independent init stream per component, so the presence of one
        # component never shifts another's initial weights
        streams = np.random.SeedSequence(t.seed).spawn(4)
        self.encoder_a = enc.init_encoder(
            np.random.default_rng(streams[0]), cfg.encoder, input_dim_a, "enc_a", dtype
        )
        self.encoder_t = (
            enc.init_encoder(
                np.random.default_rng(streams[1]), cfg.encoder, input_dim_t, "enc_t", dtype
            )
            if t.use_textual
            else None
        )
        self.atei = (
            inc.init_atei(
                np.random.default_rng(streams[2]),
                cfg.encoder,
                cfg.atei,
                input_dim_a,
                input_dim_t,
                dtype,
            )
            if t.atei_mode != inc.OFF
            else None
        )
        self.head = init_classifier(
            np.random.default_rng(streams[3]),
            cfg.fusion_input_dim(),
            cfg.classifier.hidden_dim,
            dtype,
        )

    def parameters(self) -> list[ad.Parameter]:
        out = self.encoder_a.parameters()
        if self.encoder_t is not None:
            out += self.encoder_t.parameters()
        if self.atei is not None:
            out += self.atei.parameters()
        out += self.head.parameters()
        return out

    def forward_batch(
        self,
        batch: Batch,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ForwardResult:
        cfg, t = self.cfg, self.cfg.train
        xa = ad.Tensor(batch.acoustic.astype(self.dtype), op="input_a")
        xt = ad.Tensor(batch.textual.astype(self.dtype), op="input_t")
        parts = [
            enc.aggregate_mean(
                enc.encoder_forward(
                    xa, batch.acoustic_mask, self.encoder_a, cfg.encoder, training, rng
                ),
                batch.acoustic_mask,
            )
        ]
        if self.encoder_t is not None:
            parts.append(
                enc.aggregate_mean(
                    enc.encoder_forward(
                        xt, batch.textual_mask, self.encoder_t, cfg.encoder, training, rng
                    ),
                    batch.textual_mask,
                )
            )
        atei_out = None
        atei_rep = None
        if self.atei is not None:
            atei_out = inc.atei_forward(
                xa,
                xt,
                batch.acoustic_mask,
                batch.textual_mask,
                self.atei,
                cfg.encoder,
                cfg.atei,
                training,
                rng,
            )
            atei_rep = inc.representation(atei_out, t.atei_mode)
            if t.scaling:
                atei_rep = inc.scale_representation(atei_rep, self.atei.alpha_logits)
            parts.append(atei_rep)
        fused = fuse(parts, t.fusion)
        dep_logits, head_hidden = classify_with_hidden(fused, self.head)
        return ForwardResult(dep_logits, head_hidden, fused, atei_out, atei_rep)

    def predict_batch(self, batch: Batch) -> np.ndarray:
        """Class probabilities (B, 3); dropout off, deterministic."""
        logits = self.forward_batch(batch, training=False).dep_logits
        return ad.softmax_masked(logits).data

    def predict_segment(self, record: SegmentRecord) -> np.ndarray:
        probs = self.predict_batch(_record_batch(record))
        return probs[0]


def _record_batch(record: SegmentRecord) -> Batch:
    return make_batches([record], batch_size=1, shuffle=False)[0]


def train_incremental(
    records: list[SegmentRecord],
    cfg: RunConfig,
    model: DepressionModel | None = None,
) -> tuple[DepressionModel, list[EpochRecord]]:
    """Two-phase training: consistency pretraining, then joint optimization.

    Deterministic given cfg.train.seed; history holds exactly
    pretrain_epochs + max_epochs records (pretraining is skipped entirely
    when the mismatch subnet is off). Passing a prebuilt ``model`` supports
    warm starts (e.g. a subnet loaded from a checkpoint).
    """
    if not records:
        raise ValueError("train_incremental: empty dataset")
    if model is None:
        model = DepressionModel(cfg, records[0].acoustic.dim, records[0].textual.dim)
    t = cfg.train
    run_streams = np.random.SeedSequence(t.seed).spawn(2)
    batch_rng = np.random.default_rng(run_streams[0])
    dropout_rng = np.random.default_rng(run_streams[1])
    history: list[EpochRecord] = []

    if model.atei is not None and t.pretrain_epochs > 0:
        pre_history = inc.pretrain_atei(
            lambda epoch: make_batches(records, t.batch_size, batch_rng),
            model.atei,
            cfg.encoder,
            cfg.atei,
            lr=t.lr,
            epochs=t.pretrain_epochs,
            dropout_rng=dropout_rng,
        )
        for rec in pre_history:
            breakdown = LossBreakdown(depression=0.0, atei=rec["loss"])
            history.append(
                EpochRecord(
                    phase="pretrain",
                    epoch=rec["epoch"],
                    total=breakdown.total,
                    depression=breakdown.depression,
                    atei=breakdown.atei,
                    accuracy=rec["accuracy"],
                )
            )

    trainable = model.parameters()
    for epoch in range(t.max_epochs):
        batch_records: list[LossBreakdown] = []
        hits = 0
        count = 0
        for batch in make_batches(records, t.batch_size, batch_rng):
            for p in trainable:
                p.zero_grad()
            result = model.forward_batch(batch, training=True, rng=dropout_rng)
            atei_logits = None if result.atei_out is None else result.atei_out.logits
            loss_node, breakdown = joint_loss(
                result.dep_logits, batch.depression, atei_logits, batch.consistency
            )
            ad.backward(loss_node)
            ad.adam_step(trainable, t.lr)
            batch_records.append(breakdown)
            hits += int((result.dep_logits.data.argmax(axis=-1) == batch.depression).sum())
            count += len(batch)
        dep_mean = float(np.mean([b.depression for b in batch_records]))
        atei_mean = float(np.mean([b.atei for b in batch_records]))
        epoch_breakdown = LossBreakdown(depression=dep_mean, atei=atei_mean)
        history.append(
            EpochRecord(
                phase="joint",
                epoch=epoch,
                total=epoch_breakdown.total,
                depression=epoch_breakdown.depression,
                atei=epoch_breakdown.atei,
                accuracy=hits / count,
                batches=batch_records,
            )
        )
    return model, history
