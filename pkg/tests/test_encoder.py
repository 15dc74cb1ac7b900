"""Backbone forward-pass contracts: shapes, masking, determinism, gradients."""

import itertools

import numpy as np
import pytest

from adapterqa.encoder import EncoderConfig, EncoderModel
from adapterqa.errors import ContractError
from adapterqa.rng import Rng
from adapterqa.tensor import Tensor


def tiny_config(**overrides):
    base = dict(vocab_size=30, max_seq_len=16, hidden_dim=16, num_blocks=2,
                num_heads=2, ffn_dim=24, seed=3)
    base.update(overrides)
    return EncoderConfig(**base)


class TestConfig:
    def test_rejects_indivisible_heads(self):
        with pytest.raises(ContractError):
            tiny_config(hidden_dim=10, num_heads=4)

    def test_rejects_dropout_of_one(self):
        with pytest.raises(ContractError):
            tiny_config(dropout_rate=1.0)

    def test_rejects_negative_depth(self):
        with pytest.raises(ContractError):
            tiny_config(num_blocks=-1)

    def test_allows_zero_depth(self):
        assert tiny_config(num_blocks=0).num_blocks == 0

    def test_rejects_zero_extents(self):
        for field in ("vocab_size", "max_seq_len", "hidden_dim",
                      "num_heads", "ffn_dim"):
            with pytest.raises(ContractError):
                tiny_config(**{field: 0})

    def test_dict_roundtrip(self):
        cfg = tiny_config(dropout_rate=0.25)
        assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


class TestEmbed:
    def test_zero_tables_give_zero_matrix(self):
        model = EncoderModel(tiny_config())
        model.params["embed.token"].data[:] = 0.0
        model.params["embed.pos"].data[:] = 0.0
        out = model.embed([1, 2, 3])
        np.testing.assert_array_equal(out.numpy(), np.zeros((3, 16)))

    def test_output_shape(self):
        out = EncoderModel(tiny_config()).embed(np.arange(7))
        assert out.shape == (7, 16)

    def test_rejects_empty_and_overlong_and_out_of_range(self):
        model = EncoderModel(tiny_config())
        with pytest.raises(ContractError):
            model.embed([])
        with pytest.raises(ContractError):
            model.embed(np.zeros(17, dtype=int))
        with pytest.raises(ContractError):
            model.embed([30])
        with pytest.raises(ContractError):
            model.embed([-1])


class TestAttention:
    def test_identical_rows_yield_projected_value_vector(self):
        model = EncoderModel(tiny_config(num_blocks=1))
        row = Rng(11).normal((16,), std=0.5)
        x = Tensor(np.tile(row, (5, 1)))
        out = model.self_attention(x).numpy()
        p = model.params
        value = row @ p["block.0.attn.wv"].numpy() + p["block.0.attn.bv"].numpy()
        expected = value @ p["block.0.attn.wo"].numpy() + p["block.0.attn.bo"].numpy()
        for pos in range(5):
            np.testing.assert_allclose(out[pos], expected, atol=1e-9)

    def test_single_position_weight_is_exactly_one(self):
        model = EncoderModel(tiny_config())
        x = Tensor(Rng(0).normal((1, 16)))
        weights = model.attention_weights(x)
        assert weights.shape == (2, 1, 1)
        assert np.all(weights == 1.0)

    def test_all_keys_masked_but_one_collapse_onto_it(self):
        model = EncoderModel(tiny_config())
        x = Tensor(Rng(1).normal((3, 16)))
        weights = model.attention_weights(x, pad_mask=[False, True, True])
        expected = np.zeros((2, 3, 3))
        expected[:, :, 0] = 1.0
        np.testing.assert_array_equal(weights, expected)

    def test_masked_keys_get_exactly_zero_weight(self):
        model = EncoderModel(tiny_config())
        x = Tensor(Rng(2).normal((4, 16)))
        mask = np.array([False, True, False, True])
        weights = model.attention_weights(x, pad_mask=mask)
        assert np.all(weights[:, :, mask] == 0.0)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_rejects_wrong_mask_length(self):
        model = EncoderModel(tiny_config())
        with pytest.raises(ContractError):
            model.self_attention(Tensor(np.zeros((3, 16))), pad_mask=[True, False])


class TestEncode:
    def test_zero_depth_equals_embedding(self):
        model = EncoderModel(tiny_config(num_blocks=0))
        ids = [1, 4, 9]
        np.testing.assert_array_equal(model.encode(ids).numpy(),
                                      model.embed(ids).numpy())

    def test_output_shape_tracks_input_length(self):
        model = EncoderModel(tiny_config())
        for n in (1, 5, 16):
            assert model.encode(np.zeros(n, dtype=int)).shape == (n, 16)

    def test_eval_mode_is_bit_identical(self):
        model = EncoderModel(tiny_config(dropout_rate=0.3))
        ids = [2, 7, 7, 1]
        a = model.encode(ids).numpy()
        b = model.encode(ids).numpy()
        assert a.tobytes() == b.tobytes()

    def test_training_dropout_requires_rng_and_perturbs(self):
        model = EncoderModel(tiny_config(dropout_rate=0.3))
        ids = [2, 7, 7, 1]
        with pytest.raises(ContractError):
            model.encode(ids, training=True)
        stream = Rng(5)
        a = model.encode(ids, training=True, rng=stream).numpy()
        b = model.encode(ids, training=True, rng=stream).numpy()
        assert not np.array_equal(a, b)

    def test_masked_position_contents_cannot_leak(self):
        """Brute force over every mask pattern at seq <= 4: rewriting the
        ids under masked positions leaves unmasked outputs bit-identical."""
        model = EncoderModel(tiny_config())
        rng = Rng(13)
        for seq in range(2, 5):
            ids = np.array([1 + i for i in range(seq)])
            for pattern in itertools.product([False, True], repeat=seq):
                mask = np.array(pattern)
                if not mask.any() or mask.all():
                    continue
                base = model.encode(ids, pad_mask=mask).numpy()
                for _ in range(3):
                    scrambled = ids.copy()
                    scrambled[mask] = [int(rng.integers(0, 30))
                                       for _ in range(int(mask.sum()))]
                    out = model.encode(scrambled, pad_mask=mask).numpy()
                    np.testing.assert_array_equal(out[~mask], base[~mask])

    def test_token_gradient_touches_only_batch_rows(self):
        model = EncoderModel(tiny_config())
        out = model.encode([3, 3, 8])
        out.sum().backward()
        grad = model.params["embed.token"].grad
        present = np.zeros(30, dtype=bool)
        present[[3, 8]] = True
        assert np.any(grad[present] != 0.0)
        np.testing.assert_array_equal(grad[~present], 0.0)

    def test_accepts_feature_objects(self):
        model = EncoderModel(tiny_config())

        class Carrier:
            token_ids = np.array([1, 2])

        assert model.encode(Carrier()).shape == (2, 16)


class TestStoreLayout:
    def test_backbone_names_cover_all_initial_parameters(self):
        model = EncoderModel(tiny_config())
        assert model.backbone_names() == model.params.names()
        assert model.params.trainable_mask == set(model.params.names())

    def test_bare_encoder_has_no_occupied_slots(self):
        assert EncoderModel(tiny_config()).occupied_slot_count() == 0

    def test_same_seed_same_weights(self):
        a = EncoderModel(tiny_config())
        b = EncoderModel(tiny_config())
        for name in a.params.names():
            assert np.array_equal(a.params[name].numpy(), b.params[name].numpy())
