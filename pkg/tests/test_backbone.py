"""Backbone: embedding layout, block attention, forward contract, checkpoints."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lctr import backbone as bb
from lctr import tensor as T
from lctr.checkpoint import load_checkpoint, load_into, save_checkpoint
from lctr.errors import ConfigurationError, ManifestError
from lctr.model import LctrModel
from lctr.tensor import Tensor, backward


def tiny_config(**kw):
    base = dict(image_size=16, patch_size=8, embed_dim=8, num_heads=2, num_blocks=2,
                mlp_ratio=2.0, num_classes=3)
    base.update(kw)
    return bb.BackboneConfig(**base)


class TestConfig:
    def test_indivisible_image_size(self):
        with pytest.raises(ConfigurationError):
            bb.BackboneConfig(image_size=30, patch_size=8)

    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigurationError):
            tiny_config(embed_dim=9, num_heads=2)

    def test_derived_extents(self):
        cfg = tiny_config()
        assert cfg.grid_size == 2
        assert cfg.num_patches == 4
        assert cfg.num_tokens == 5
        assert cfg.head_dim == 4


class TestEmbed:
    def test_token_count(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(0))
        seq = bb.embed(np.zeros((3, 16, 16)), cfg, params)
        assert seq.tokens.shape == (5, 8)
        assert seq.class_index == 0

    def test_zero_image_gives_position_rows(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(1))
        seq = bb.embed(np.zeros((3, 16, 16)), cfg, params)
        pos = params["pos_embed"].data
        assert_allclose(seq.tokens.data[1:], pos[1:], atol=1e-15)

    def test_marker_pixel_perturbs_first_patch_token_only(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(2))
        rng = np.random.default_rng(3)
        img = rng.uniform(size=(3, 16, 16))
        marked = img.copy()
        marked[:, 1, 1] += 0.5  # inside the top-left patch
        base = bb.embed(img, cfg, params).tokens.data
        pert = bb.embed(marked, cfg, params).tokens.data
        changed = np.abs(base - pert).max(axis=1) > 0
        assert changed.tolist() == [False, True, False, False, False]

    def test_batched_matches_single(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(4))
        imgs = np.random.default_rng(5).uniform(size=(3, 3, 16, 16))
        batched = bb.embed(imgs, cfg, params).tokens.data
        for b in range(3):
            single = bb.embed(imgs[b], cfg, params).tokens.data
            assert_allclose(batched[b], single, atol=1e-15)


def _ln_oracle(x, gain, bias, eps=bb.LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def _softmax_oracle(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestBlockForward:
    def test_attention_rows_sum_to_one(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(6))
        seq = bb.embed(np.random.default_rng(7).uniform(size=(3, 16, 16)), cfg, params)
        _, attn = bb.block_forward(seq, params, 0, cfg)
        assert attn.shape == (2, 5, 5)
        assert_allclose(attn.data.sum(axis=-1), np.ones((2, 5)), atol=1e-9)

    def test_zeroed_norm_affine_gives_uniform_attention(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(8))
        params["block0.ln1.gain"].data[...] = 0.0
        params["block0.ln1.bias"].data[...] = 0.0
        seq = bb.embed(np.random.default_rng(9).uniform(size=(3, 16, 16)), cfg, params)
        _, attn = bb.block_forward(seq, params, 0, cfg)
        assert_allclose(attn.data, np.full((2, 5, 5), 1.0 / 5.0), atol=1e-12)

    def test_single_head_hand_evaluation(self):
        cfg = bb.BackboneConfig(image_size=8, patch_size=8, embed_dim=2, num_heads=1,
                                num_blocks=1, mlp_ratio=2.0, num_classes=2)
        params = bb.init_backbone_params(cfg, np.random.default_rng(10))
        img = np.random.default_rng(11).uniform(size=(3, 8, 8))
        seq = bb.embed(img, cfg, params)
        _, attn = bb.block_forward(seq, params, 0, cfg)

        pre = _ln_oracle(seq.tokens.data, params["block0.ln1.gain"].data,
                         params["block0.ln1.bias"].data)
        q = pre @ params["block0.attn.wq"].data + params["block0.attn.bq"].data
        k = pre @ params["block0.attn.wk"].data + params["block0.attn.bk"].data
        expected = _softmax_oracle(q @ k.T / np.sqrt(2.0))
        assert attn.shape == (1, 2, 2)
        assert_allclose(attn.data[0], expected, atol=1e-12)


class TestForward:
    def test_output_shape_and_record_length(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(12))
        x_l, record = bb.forward(np.zeros((3, 16, 16)), cfg, params)
        assert x_l.shape == (4, 8)
        assert record.num_blocks == 2
        for a, avg in zip(record.per_block, record.averaged):
            assert a.shape == (2, 5, 5)
            assert avg.shape == (5, 5)

    def test_single_block_equals_embed_plus_block(self):
        cfg = tiny_config(num_blocks=1)
        params = bb.init_backbone_params(cfg, np.random.default_rng(13))
        img = np.random.default_rng(14).uniform(size=(3, 16, 16))
        x_l, _ = bb.forward(img, cfg, params)
        seq, _ = bb.block_forward(bb.embed(img, cfg, params), params, 0, cfg)
        assert_allclose(x_l.data, seq.tokens.data[1:], atol=1e-15)

    def test_averaged_is_exact_head_mean(self):
        cfg = tiny_config()
        params = bb.init_backbone_params(cfg, np.random.default_rng(15))
        _, record = bb.forward(np.random.default_rng(16).uniform(size=(3, 16, 16)), cfg, params)
        for a, avg in zip(record.per_block, record.averaged):
            assert (avg.data == a.data.mean(axis=0)).all()

    def test_gradient_reaches_patch_projection(self):
        model = LctrModel(tiny_config(), seed=17)
        imgs = np.random.default_rng(18).uniform(size=(2, 3, 16, 16))
        out = model.forward(imgs)
        backward(out.loss(np.array([0, 2])))
        grad = model.params["patch_embed.weight"].grad
        assert grad is not None and np.linalg.norm(grad) > 0


class TestCheckpoint:
    def test_round_trip_bit_for_bit(self, tmp_path):
        model = LctrModel(tiny_config(), seed=19)
        path = tmp_path / "model.ckpt"
        model.save(path)
        imgs = np.random.default_rng(20).uniform(size=(2, 3, 16, 16))
        with T.no_grad():
            before = model.forward(imgs).probs.data
        clone = LctrModel(tiny_config(), seed=999)
        clone.load(path)
        with T.no_grad():
            after = clone.forward(imgs).probs.data
        assert (before == after).all()

    def test_manifest_reports_tag(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not-a-checkpoint\n\n")
        with pytest.raises(ManifestError, match="lctr-ckpt-v1"):
            load_checkpoint(path)

    def test_mismatched_shapes_listed(self, tmp_path):
        model = LctrModel(tiny_config(), seed=21)
        path = tmp_path / "model.ckpt"
        model.save(path)
        other = LctrModel(tiny_config(embed_dim=16, num_heads=2), seed=21)
        with pytest.raises(ManifestError, match="patch_embed.weight"):
            load_into(other.params, path)

    def test_offsets_in_manifest(self, tmp_path):
        model = LctrModel(tiny_config(), seed=22)
        path = tmp_path / "model.ckpt"
        model.save(path)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(model.params)
        for name, arr in loaded.items():
            assert (arr == model.params[name].data).all()
