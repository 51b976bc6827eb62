"""Cross-attention network that learns emotion-consistency classification.

Two dedicated encoder stacks (not shared with the main branches) process the
raw acoustic/textual sequences. A single-head cross-attention layer then
attends each modality over the other; the four masked means are concatenated
into a 4D-wide hidden vector and pushed through three FC+ReLU layers to a
2-way consistent/inconsistent output.

The network's value downstream is its representation of the mismatch:
either the hard 0/1 decision, the two raw output logits, or one of the
FC activations, optionally modulated by a learnable simplex-constrained
scaling vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .errors import ConfigError, ShapeError

ZERO_ONE = "zero_one"
ZERO_ONE_LOGITS = "zero_one_logits"
EMBED_FC1 = "embed_fc1"
EMBED_FC2 = "embed_fc2"
EMBED_FC3 = "embed_fc3"
OFF = "off"
MODES = (OFF, ZERO_ONE, ZERO_ONE_LOGITS, EMBED_FC1, EMBED_FC2, EMBED_FC3)
EMBED_MODES = (EMBED_FC1, EMBED_FC2, EMBED_FC3)


@dataclass
class AteiConfig:
    """Shape of the consistency subnet.

    n_blocks is the depth of each internal encoder stack; fc_dim the width
    of FC1-FC3 (1024 at paper scale); scale_dim the constant under the
    square root in the cross-attention scores.
    """

    n_blocks: int = 2
    fc_dim: int = 1024
    scale_dim: int = 128

    def __post_init__(self):
        if self.n_blocks < 1 or self.fc_dim < 1 or self.scale_dim < 1:
            raise ConfigError("AteiConfig fields must be positive")


@dataclass
class AteiParams:
    enc_a: enc.EncoderParams
    enc_t: enc.EncoderParams
    q_a: ad.Parameter
    k_a: ad.Parameter
    v_a: ad.Parameter
    q_t: ad.Parameter
    k_t: ad.Parameter
    v_t: ad.Parameter
    fc1_w: ad.Parameter
    fc1_b: ad.Parameter
    fc2_w: ad.Parameter
    fc2_b: ad.Parameter
    fc3_w: ad.Parameter
    fc3_b: ad.Parameter
    out_w: ad.Parameter
    out_b: ad.Parameter
    alpha_logits: ad.Parameter

    def parameters(self) -> list[ad.Parameter]:
        return (
            self.enc_a.parameters()
            + self.enc_t.parameters()
            + [
                self.q_a,
                self.k_a,
                self.v_a,
                self.q_t,
                self.k_t,
                self.v_t,
                self.fc1_w,
                self.fc1_b,
                self.fc2_w,
                self.fc2_b,
                self.fc3_w,
                self.fc3_b,
                self.out_w,
                self.out_b,
                self.alpha_logits,
            ]
        )


@dataclass
class AteiOutputs:
    """Forward products of the subnet, all still attached to the graph."""

    xa_enc: ad.Tensor  # (B, T1, D) encoded acoustic sequence
    xt_enc: ad.Tensor  # (B, T2, D) encoded textual sequence
    x_at: ad.Tensor  # (B, T1, D) acoustic queries over textual keys
    x_ta: ad.Tensor  # (B, T2, D) textual queries over acoustic keys
    hidden: ad.Tensor  # (B, 4D)
    fc1: ad.Tensor  # (B, fc_dim), post-ReLU
    fc2: ad.Tensor
    fc3: ad.Tensor
    logits: ad.Tensor  # (B, 2)


def stack_config(enc_cfg: enc.EncoderConfig, atei_cfg: AteiConfig) -> enc.EncoderConfig:
    """Encoder geometry reused for the subnet stacks at its own depth."""
    return replace(enc_cfg, n_blocks=atei_cfg.n_blocks, ffn_dim=enc_cfg.ffn_dim)


def init_atei(
    rng: np.random.Generator,
    enc_cfg: enc.EncoderConfig,
    atei_cfg: AteiConfig,
    input_dim_a: int,
    input_dim_t: int,
    dtype=np.float32,
) -> AteiParams:
    d = enc_cfg.model_dim
    fc = atei_cfg.fc_dim
    cfg = stack_config(enc_cfg, atei_cfg)

    def w(label, shape):
        return ad.Parameter(f"atei/{label}", ad.xavier_uniform(rng, shape, dtype))

    def zeros(label, shape):
        return ad.Parameter(f"atei/{label}", np.zeros(shape, dtype=dtype))

    return AteiParams(
        enc_a=enc.init_encoder(rng, cfg, input_dim_a, "atei/enc_a", dtype),
        enc_t=enc.init_encoder(rng, cfg, input_dim_t, "atei/enc_t", dtype),
        q_a=w("q_a", (d, d)),
        k_a=w("k_a", (d, d)),
        v_a=w("v_a", (d, d)),
        q_t=w("q_t", (d, d)),
        k_t=w("k_t", (d, d)),
        v_t=w("v_t", (d, d)),
        fc1_w=w("fc1/w", (4 * d, fc)),
        fc1_b=zeros("fc1/b", (fc,)),
        fc2_w=w("fc2/w", (fc, fc)),
        fc2_b=zeros("fc2/b", (fc,)),
        fc3_w=w("fc3/w", (fc, fc)),
        fc3_b=zeros("fc3/b", (fc,)),
        out_w=w("out/w", (fc, 2)),
        out_b=zeros("out/b", (2,)),
        alpha_logits=zeros("alpha_logits", (fc,)),
    )


def cross_attend(
    xa_enc: ad.Tensor,
    xt_enc: ad.Tensor,
    mask_a: np.ndarray | None,
    mask_t: np.ndarray | None,
    params: AteiParams,
    scale_dim: int,
) -> tuple[ad.Tensor, ad.Tensor]:
    """Single-head cross-attention in both directions.

    Acoustic queries attend over textual keys/values (masked on the textual
    side) and vice versa.
    """
    scale = ad.constant(np.asarray(1.0 / np.sqrt(scale_dim), dtype=xa_enc.dtype))
    d = xa_enc.shape[-1]
    qkv_a = ad.matmul(
        xa_enc,
        ad.concat_last(
            [ad.param_node(params.q_a), ad.param_node(params.k_a), ad.param_node(params.v_a)]
        ),
    )
    qkv_t = ad.matmul(
        xt_enc,
        ad.concat_last(
            [ad.param_node(params.q_t), ad.param_node(params.k_t), ad.param_node(params.v_t)]
        ),
    )
    qa = ad.slice_last(qkv_a, 0, d)
    ka = ad.slice_last(qkv_a, d, 2 * d)
    va = ad.slice_last(qkv_a, 2 * d, 3 * d)
    qt = ad.slice_last(qkv_t, 0, d)
    kt = ad.slice_last(qkv_t, d, 2 * d)
    vt = ad.slice_last(qkv_t, 2 * d, 3 * d)

    scores_at = ad.mul(ad.matmul(qa, ad.transpose_last(kt)), scale)
    w_at = ad.softmax_masked(
        scores_at, None if mask_t is None else np.expand_dims(mask_t, -2)
    )
    x_at = ad.matmul(w_at, vt)

    scores_ta = ad.mul(ad.matmul(qt, ad.transpose_last(ka)), scale)
    w_ta = ad.softmax_masked(
        scores_ta, None if mask_a is None else np.expand_dims(mask_a, -2)
    )
    x_ta = ad.matmul(w_ta, va)
    return x_at, x_ta


def build_atei_hidden(
    xa_enc: ad.Tensor,
    x_at: ad.Tensor,
    x_ta: ad.Tensor,
    xt_enc: ad.Tensor,
    mask_a: np.ndarray | None,
    mask_t: np.ndarray | None,
) -> ad.Tensor:
    """Masked mean of each stream, concatenated in the fixed order
    [enc-acoustic; acoustic-over-text; text-over-acoustic; enc-textual]."""
    return ad.concat_last(
        [
            ad.masked_mean(xa_enc, mask_a),
            ad.masked_mean(x_at, mask_a),
            ad.masked_mean(x_ta, mask_t),
            ad.masked_mean(xt_enc, mask_t),
        ]
    )


def atei_forward(
    xa: ad.Tensor,
    xt: ad.Tensor,
    mask_a: np.ndarray | None,
    mask_t: np.ndarray | None,
    params: AteiParams,
    enc_cfg: enc.EncoderConfig,
    atei_cfg: AteiConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> AteiOutputs:
    """Full subnet forward pass on raw (projected-width) feature batches."""
    cfg = stack_config(enc_cfg, atei_cfg)
    xa_enc = enc.encoder_forward(xa, mask_a, params.enc_a, cfg, training, rng)
    xt_enc = enc.encoder_forward(xt, mask_t, params.enc_t, cfg, training, rng)
    x_at, x_ta = cross_attend(xa_enc, xt_enc, mask_a, mask_t, params, atei_cfg.scale_dim)
    hidden = build_atei_hidden(xa_enc, x_at, x_ta, xt_enc, mask_a, mask_t)

    def fc(x, w, b):
        return ad.relu(ad.add(ad.matmul(x, ad.param_node(w)), ad.param_node(b)))

    h = hidden if hidden.data.ndim == 2 else ad.as_row(hidden)
    fc1 = fc(h, params.fc1_w, params.fc1_b)
    fc2 = fc(fc1, params.fc2_w, params.fc2_b)
    fc3 = fc(fc2, params.fc3_w, params.fc3_b)
    logits = ad.add(ad.matmul(fc3, ad.param_node(params.out_w)), ad.param_node(params.out_b))
    return AteiOutputs(xa_enc, xt_enc, x_at, x_ta, hidden, fc1, fc2, fc3, logits)


def representation(outputs: AteiOutputs, mode: str) -> ad.Tensor:
    """The mismatch feature handed to fusion, per the configured mode.

    zero_one is the hard decision and therefore a graph constant (no
    gradient path); the logits and FC embeddings stay differentiable.
    """
    if mode == ZERO_ONE:
        hard = outputs.logits.data.argmax(axis=-1).astype(outputs.logits.dtype)
        return ad.Tensor(hard[:, None].copy(), op="zero_one")
    if mode == ZERO_ONE_LOGITS:
        return outputs.logits
    if mode == EMBED_FC1:
        return outputs.fc1
    if mode == EMBED_FC2:
        return outputs.fc2
    if mode == EMBED_FC3:
        return outputs.fc3
    raise ConfigError(f"no representation for mode {mode!r}")


def scale_representation(e: ad.Tensor, alpha_logits: ad.Parameter) -> ad.Tensor:
    """Modulate the embedding by alpha = softmax(alpha_logits).

    alpha always lies on the probability simplex regardless of the logit
    values, which is exactly the constraint the scaling vector must keep
    during optimization.
    """
    if e.shape[-1] != alpha_logits.value.shape[0]:
        raise ShapeError(
            f"scale_representation: embedding width {e.shape} vs "
            f"alpha {alpha_logits.value.shape}"
        )
    alpha = ad.softmax_masked(ad.param_node(alpha_logits))
    return ad.mul(e, alpha)


def simplex_weights(alpha_logits: ad.Parameter) -> np.ndarray:
    """Current alpha vector as plain numpy (for checks and reports)."""
    return ad.softmax_masked(ad.param_node(alpha_logits)).data


def pretrain_atei(
    batches: list,
    params: AteiParams,
    enc_cfg: enc.EncoderConfig,
    atei_cfg: AteiConfig,
    lr: float,
    epochs: int,
    dropout_rng: np.random.Generator | None = None,
) -> list[dict]:
    """Phase-1 training: minimize consistency cross-entropy with Adam.

    ``batches`` is a callable(epoch) -> list of Batch or a fixed list. Returns
    one {loss, accuracy} record per epoch. Deterministic given the RNGs.
    """
    trainable = params.parameters()
    history: list[dict] = []
    for epoch in range(epochs):
        epoch_batches = batches(epoch) if callable(batches) else batches
        if not epoch_batches:
            raise ValueError("pretrain_atei: empty dataset")
        if epoch == 0:
            all_labels = np.concatenate([b.consistency for b in epoch_batches])
            if np.unique(all_labels).size < 2:
                warnings.warn(
                    "pretrain_atei: dataset has a single consistency class",
                    stacklevel=2,
                )
        losses, hits, count = [], 0, 0
        for batch in epoch_batches:
            for p in trainable:
                p.zero_grad()
            out = atei_forward(
                ad.constant(batch.acoustic),
                ad.constant(batch.textual),
                batch.acoustic_mask,
                batch.textual_mask,
                params,
                enc_cfg,
                atei_cfg,
                training=True,
                rng=dropout_rng,
            )
            loss = ad.cross_entropy(out.logits, batch.consistency)
            ad.backward(loss)
            ad.adam_step(trainable, lr)
            losses.append(float(loss.data))
            hits += int((out.logits.data.argmax(axis=-1) == batch.consistency).sum())
            count += len(batch.consistency)
        history.append(
            {"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": hits / count}
        )
    return history
