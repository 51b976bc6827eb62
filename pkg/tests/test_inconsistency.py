"""Cross-attention consistency-network tests."""

import numpy as np
import pytest

from emogap import autodiff as ad
from emogap import dataset as ds
from emogap import encoder as enc
from emogap import inconsistency as inc
from emogap.synthetic import SynthConfig, generate_synthetic

DESK_ENC = enc.EncoderConfig(
    n_blocks=1, n_heads=2, model_dim=8, head_dim=4, ffn_dim=16, dropout_rate=0.0
)
DESK_ATEI = inc.AteiConfig(n_blocks=1, fc_dim=8, scale_dim=4)


def make_params(seed=0, din_a=5, din_t=4, dtype=np.float32, enc_cfg=DESK_ENC, atei_cfg=DESK_ATEI):
    rng = np.random.default_rng(seed)
    return inc.init_atei(rng, enc_cfg, atei_cfg, din_a, din_t, dtype=dtype)


class TestCrossAttend:
    def single_head_inputs(self, seed, t1, t2, d=8, dtype=np.float32):
        rng = np.random.default_rng(seed)
        xa = ad.constant(rng.standard_normal((t1, d)).astype(dtype))
        xt = ad.constant(rng.standard_normal((t2, d)).astype(dtype))
        return xa, xt

    def test_single_textual_key_copies_value(self):
        params = make_params(seed=1)
        xa, xt = self.single_head_inputs(2, t1=4, t2=1)
        x_at, _ = inc.cross_attend(xa, xt, np.ones(4, bool), np.ones(1, bool), params, 4)
        vt = ad.matmul(xt, ad.param_node(params.v_t)).data
        for row in x_at.data:
            np.testing.assert_allclose(row, vt[0], atol=1e-6)

    def test_zero_query_projection_gives_masked_mean(self):
        params = make_params(seed=3)
        params.q_a.value[...] = 0.0
        xa, xt = self.single_head_inputs(4, t1=3, t2=5)
        mask_t = np.array([True, True, True, False, False])
        x_at, _ = inc.cross_attend(xa, xt, np.ones(3, bool), mask_t, params, 4)
        vt = ad.matmul(xt, ad.param_node(params.v_t)).data
        expected = vt[mask_t].mean(axis=0)
        for row in x_at.data:
            np.testing.assert_allclose(row, expected, atol=1e-6)

    def test_cross_attention_rows_sum_one_padded_zero(self):
        params = make_params(seed=5)
        rng = np.random.default_rng(6)
        xa = ad.constant(rng.standard_normal((2, 4, 8)).astype(np.float32))
        xt = ad.constant(rng.standard_normal((2, 6, 8)).astype(np.float32))
        mask_t = rng.random((2, 6)) > 0.4
        mask_t[:, 0] = True
        qa = ad.matmul(xa, ad.param_node(params.q_a))
        kt = ad.matmul(xt, ad.param_node(params.k_t))
        w = ad.softmax_masked(
            ad.matmul(qa, ad.transpose_last(kt)), mask_t[:, None, :]
        ).data
        np.testing.assert_allclose(w.sum(-1).astype(np.float64), 1.0, atol=1e-5)
        assert (w[~np.broadcast_to(mask_t[:, None, :], w.shape)] == 0).all()

    def test_gradient_check(self):
        params = make_params(seed=7, dtype=np.float64)
        rng = np.random.default_rng(8)
        t1, t2, d = 3, 2, 8
        xa = rng.standard_normal((t1, d))
        xt = rng.standard_normal((t2, d))
        watch = [params.q_a, params.k_t, params.v_t, params.q_t, params.k_a, params.v_a]

        def build():
            x_at, x_ta = inc.cross_attend(
                ad.constant(xa),
                ad.constant(xt),
                np.ones(t1, bool),
                np.ones(t2, bool),
                params,
                4,
            )
            return ad.sum_all(ad.mul(ad.concat_last([ad.masked_mean(x_at), ad.masked_mean(x_ta)]),
                                      ad.constant(np.linspace(0.5, 1.5, 2 * d))))

        assert ad.finite_difference_max_rel_error(build, watch, h=1e-3) < 1e-6


class TestHidden:
    def test_constant_inputs(self):
        c = 2.5
        mats = [ad.constant(np.full((1, 3, 2), c, dtype=np.float32)) for _ in range(4)]
        mask = np.ones((1, 3), bool)
        h = inc.build_atei_hidden(mats[0], mats[1], mats[2], mats[3], mask, mask)
        np.testing.assert_allclose(h.data, np.full((1, 8), c), atol=1e-6)

    def test_hand_concatenation_order(self):
        vals = [[1.0, 2.0]], [[3.0, 4.0]], [[5.0, 6.0]], [[7.0, 8.0]]
        mats = [ad.constant(np.array(v, dtype=np.float32)) for v in vals]
        mask = np.ones(1, bool)
        h = inc.build_atei_hidden(mats[0], mats[1], mats[2], mats[3], mask, mask)
        np.testing.assert_array_equal(h.data, [1, 2, 3, 4, 5, 6, 7, 8])

    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(9)
        xa = rng.standard_normal((1, 5, 4)).astype(np.float32)
        xt = rng.standard_normal((1, 3, 4)).astype(np.float32)
        ma, mt = np.ones((1, 5), bool), np.ones((1, 3), bool)
        base = inc.build_atei_hidden(
            ad.constant(xa), ad.constant(xa), ad.constant(xt), ad.constant(xt), ma, mt
        ).data
        perm = rng.permutation(5)
        xa2 = xa[:, perm]
        out = inc.build_atei_hidden(
            ad.constant(xa2), ad.constant(xa2), ad.constant(xt), ad.constant(xt), ma, mt
        ).data
        np.testing.assert_allclose(out, base, atol=1e-6)


def forward_tiny(params, seed=10, b=2, t1=3, t2=4, din_a=5, din_t=4, training=False):
    rng = np.random.default_rng(seed)
    xa = rng.standard_normal((b, t1, din_a)).astype(np.float32)
    xt = rng.standard_normal((b, t2, din_t)).astype(np.float32)
    ma = np.ones((b, t1), bool)
    mt = np.ones((b, t2), bool)
    return inc.atei_forward(
        ad.constant(xa), ad.constant(xt), ma, mt, params, DESK_ENC, DESK_ATEI,
        training=training,
    )


class TestForwardAndRepresentations:
    def test_shapes(self):
        params = make_params()
        out = forward_tiny(params)
        assert out.hidden.shape == (2, 32)  # 4 * model_dim
        assert out.fc1.shape == (2, 8)
        assert out.logits.shape == (2, 2)

    def test_zero_one_payload_binary(self):
        params = make_params(seed=11)
        out = forward_tiny(params, seed=12)
        rep = inc.representation(out, inc.ZERO_ONE)
        assert rep.shape == (2, 1)
        assert set(np.unique(rep.data)) <= {0.0, 1.0}

    def test_embedding_width_matches_config(self):
        params = make_params(seed=13)
        out = forward_tiny(params, seed=14)
        for mode in inc.EMBED_MODES:
            assert inc.representation(out, mode).shape == (2, 8)

    def test_logits_mode_is_presoftmax(self):
        params = make_params(seed=15)
        out = forward_tiny(params, seed=16)
        rep = inc.representation(out, inc.ZERO_ONE_LOGITS)
        np.testing.assert_array_equal(rep.data, out.logits.data)

    def test_modality_changes_move_distinct_hidden_blocks(self):
        params = make_params(seed=17)
        rng = np.random.default_rng(18)
        xa = rng.standard_normal((1, 3, 5)).astype(np.float32)
        xt = rng.standard_normal((1, 4, 4)).astype(np.float32)
        ma, mt = np.ones((1, 3), bool), np.ones((1, 4), bool)

        def hidden(xa_, xt_):
            return inc.atei_forward(
                ad.constant(xa_), ad.constant(xt_), ma, mt, params, DESK_ENC, DESK_ATEI
            ).hidden.data[0]

        base = hidden(xa, xt)
        d = DESK_ENC.model_dim
        xa2 = xa + rng.standard_normal(xa.shape).astype(np.float32)
        moved_a = hidden(xa2, xt)
        # acoustic change: encoded-acoustic block must move, encoded-textual must not
        assert not np.allclose(moved_a[:d], base[:d])
        np.testing.assert_array_equal(moved_a[3 * d :], base[3 * d :])
        xt2 = xt + rng.standard_normal(xt.shape).astype(np.float32)
        moved_t = hidden(xa, xt2)
        assert not np.allclose(moved_t[3 * d :], base[3 * d :])
        np.testing.assert_array_equal(moved_t[:d], base[:d])

    def test_full_forward_gradient_check(self):
        enc_cfg = enc.EncoderConfig(
            n_blocks=1, n_heads=2, model_dim=8, head_dim=4, ffn_dim=12, dropout_rate=0.0
        )
        atei_cfg = inc.AteiConfig(n_blocks=1, fc_dim=6, scale_dim=4)
        params = make_params(seed=19, dtype=np.float64, enc_cfg=enc_cfg, atei_cfg=atei_cfg)
        rng = np.random.default_rng(20)
        xa = rng.standard_normal((2, 3, 5))
        xt = rng.standard_normal((2, 2, 4))
        ma = np.array([[True, True, True], [True, True, False]])
        mt = np.array([[True, True], [True, False]])
        labels = np.array([0, 1])

        def build():
            out = inc.atei_forward(
                ad.constant(xa), ad.constant(xt), ma, mt, params, enc_cfg, atei_cfg
            )
            return ad.cross_entropy(out.logits, labels)

        err = ad.finite_difference_max_rel_error(build, params.parameters(), h=1e-3)
        assert err < 1e-6


class TestScaling:
    def test_uniform_alpha_divides_by_width(self):
        alpha = ad.Parameter("a", np.zeros(4, dtype=np.float32))
        e = ad.constant(np.array([[4.0, 8.0, -2.0, 0.0]], dtype=np.float32))
        out = inc.scale_representation(e, alpha)
        np.testing.assert_allclose(out.data, e.data / 4.0, atol=1e-7)

    def test_saturated_logit_masks_to_coordinate(self):
        logits = np.zeros(4, dtype=np.float32)
        logits[2] = 50.0
        alpha = ad.Parameter("a", logits)
        e = ad.constant(np.array([[1.0, 2.0, 3.0, 4.0]], dtype=np.float32))
        out = inc.scale_representation(e, alpha).data
        np.testing.assert_allclose(out, [[0.0, 0.0, 3.0, 0.0]], atol=1e-6)

    def test_hand_case(self):
        alpha = ad.Parameter("a", np.array([np.log(3.0), 0.0], dtype=np.float64))
        e = ad.constant(np.array([[4.0, 8.0]], dtype=np.float64))
        out = inc.scale_representation(e, alpha).data
        np.testing.assert_allclose(out, [[3.0, 2.0]], atol=1e-9)

    def test_simplex_for_wild_logits(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            logits = (rng.standard_normal(16) * rng.uniform(0, 40)).astype(np.float32)
            alpha = inc.simplex_weights(ad.Parameter("a", logits))
            assert (alpha >= 0).all()
            assert abs(float(alpha.astype(np.float64).sum()) - 1.0) < 1e-6


class TestPretraining:
    def make_training_setup(self, seed=0):
        cfg = SynthConfig(
            n_subjects=6,
            segments_mean=6.0,
            segments_std=0.0,
            input_dim_a=5,
            input_dim_t=4,
            t_range_a=(3, 5),
            t_range_t=(2, 4),
            mismatch_rates=(0.1, 0.5, 0.9),
            seed=seed,
        )
        records, _ = generate_synthetic(cfg)
        params = make_params(seed=seed)

        def batches(epoch):
            return ds.make_batches(records, 32, seed=1000 + epoch)

        return params, batches

    def test_loss_decreases_on_separable_data(self):
        params, batches = self.make_training_setup()
        history = inc.pretrain_atei(
            batches, params, DESK_ENC, DESK_ATEI, lr=3e-3, epochs=5
        )
        losses = [h["loss"] for h in history]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_zero_epochs_keeps_init(self):
        params, batches = self.make_training_setup(seed=1)
        before = [p.value.copy() for p in params.parameters()]
        history = inc.pretrain_atei(batches, params, DESK_ENC, DESK_ATEI, lr=1e-3, epochs=0)
        assert history == []
        for p, b in zip(params.parameters(), before):
            np.testing.assert_array_equal(p.value, b)

    def test_same_seed_bit_identical(self):
        def run():
            params, batches = self.make_training_setup(seed=2)
            inc.pretrain_atei(batches, params, DESK_ENC, DESK_ATEI, lr=1e-3, epochs=2)
            return b"".join(p.value.tobytes() for p in params.parameters())

        assert run() == run()

    def test_single_class_warns(self):
        with pytest.warns(UserWarning, match="indistinguishable"):
            cfg = SynthConfig(
                n_subjects=2,
                segments_mean=3.0,
                segments_std=0.0,
                mismatch_rates=(0.0, 0.0, 0.0),
                input_dim_a=5,
                input_dim_t=4,
                seed=3,
            )
        records, _ = generate_synthetic(cfg)
        params = make_params(seed=3)
        batches = ds.make_batches(records, 16, seed=0)
        with pytest.warns(UserWarning, match="single consistency class"):
            inc.pretrain_atei(batches, params, DESK_ENC, DESK_ATEI, lr=1e-3, epochs=1)

    def test_empty_dataset_rejected(self):
        params = make_params(seed=4)
        with pytest.raises(ValueError, match="empty"):
            inc.pretrain_atei([], params, DESK_ENC, DESK_ATEI, lr=1e-3, epochs=1)
