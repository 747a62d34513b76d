"""Miniature vision transformer that exposes per-block attention matrices.

The backbone splits an image into non-overlapping patches, projects them,
prepends a learned class token, adds a learned position embedding, and runs
pre-norm transformer blocks. Every block's post-softmax attention is kept so
the localization modules can consume it after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .init import trunc_normal
from .tensor import Parameter, Tensor

LN_EPS = 1e-6


@dataclass(frozen=True)
class BackboneConfig:
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    num_heads: int = 4
    num_blocks: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 5

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image size {self.image_size} not divisible by patch size {self.patch_size}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"embed dim {self.embed_dim} not divisible by {self.num_heads} heads"
            )
        for name in ("image_size", "patch_size", "embed_dim", "num_heads", "num_blocks", "num_classes"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.mlp_ratio <= 0:
            raise ConfigurationError("mlp_ratio must be positive")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def mlp_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))


@dataclass
class TokenSequence:
    """Class token at row 0, patch tokens in row-major grid order after it."""

    tokens: Tensor
    class_index: int = 0


@dataclass
class AttentionRecord:
    """Post-softmax attention for every block.

    `per_block[l]` has shape (S, T, T) (or (B, S, T, T) batched); `averaged[l]`
    is its arithmetic mean over the head axis.
    """

    per_block: list = field(default_factory=list)
    averaged: list = field(default_factory=list)

    @property
    def num_blocks(self) -> int:
        return len(self.per_block)

    def averaged_sample(self, b: int) -> list:
        """Per-sample head-averaged matrices as plain arrays."""
        return [a.data[b] for a in self.averaged]


def init_backbone_params(config: BackboneConfig, rng: np.random.Generator) -> dict:
    """Truncated-normal weights (std 0.02), zero biases, unit norm gains."""
    d = config.embed_dim
    patch_dim = 3 * config.patch_size**2
    params = {}

    def add(name, data):
        params[name] = Parameter(name, data)

    add("patch_embed.weight", trunc_normal(rng, (patch_dim, d)))
    add("patch_embed.bias", np.zeros(d))
    add("cls_token", trunc_normal(rng, (1, d)))
    add("pos_embed", trunc_normal(rng, (config.num_tokens, d)))
    for i in range(config.num_blocks):
        pre = f"block{i}."
        add(pre + "ln1.gain", np.ones(d))
        add(pre + "ln1.bias", np.zeros(d))
        for proj in ("q", "k", "v", "o"):
            add(pre + f"attn.w{proj}", trunc_normal(rng, (d, d)))
            add(pre + f"attn.b{proj}", np.zeros(d))
        add(pre + "ln2.gain", np.ones(d))
        add(pre + "ln2.bias", np.zeros(d))
        add(pre + "mlp.w1", trunc_normal(rng, (d, config.mlp_dim)))
        add(pre + "mlp.b1", np.zeros(config.mlp_dim))
        add(pre + "mlp.w2", trunc_normal(rng, (config.mlp_dim, d)))
        add(pre + "mlp.b2", np.zeros(d))
    return params


def _lift_image(image, config: BackboneConfig):
    img = T.as_tensor(image)
    if img.ndim == 3:
        return img.reshape((1,) + img.shape), False
    if img.ndim == 4:
        return img, True
    raise DimensionError(f"image must be (3,H,W) or (B,3,H,W), got shape {img.shape}")


def embed(image, config: BackboneConfig, params: dict) -> TokenSequence:
    """Patchify, project, prepend the class token, add position embeddings."""
    img, batched = _lift_image(image, config)
    bsz, ch, h, w = img.shape
    if ch != 3 or h != config.image_size or w != config.image_size:
        raise ConfigurationError(
            f"image shape {img.shape[1:]} does not match configured (3, "
            f"{config.image_size}, {config.image_size})"
        )
    g, p, d = config.grid_size, config.patch_size, config.embed_dim
    n = config.num_patches
    patches = img.reshape((bsz, 3, g, p, g, p))
    patches = patches.transpose(0, 2, 4, 1, 3, 5).reshape((bsz, n, 3 * p * p))
    tok = T.matmul(patches, params["patch_embed.weight"]) + params["patch_embed.bias"]
    cls = T.add(Tensor(np.zeros((bsz, 1, d))), params["cls_token"])
    tokens = T.concat([cls, tok], axis=1) + params["pos_embed"]
    if not batched:
        tokens = tokens.reshape((n + 1, d))
    return TokenSequence(tokens=tokens)


def block_forward(seq: TokenSequence, params: dict, index: int, config: BackboneConfig):
    """One pre-norm transformer block; returns the new sequence and its attention.

    Attention is softmax(q @ k^T / sqrt(head_dim)) captured before the value
    aggregation, shape (S, T, T) per sample.
    """
    x = seq.tokens
    batched = x.ndim == 3
    if not batched:
        x = x.reshape((1,) + x.shape)
    bsz, t, d = x.shape
    s, hd = config.num_heads, config.head_dim
    p = f"block{index}."

    def heads(m):
        return m.reshape((bsz, t, s, hd)).transpose(0, 2, 1, 3)

    pre = T.layer_norm(x, params[p + "ln1.gain"], params[p + "ln1.bias"], LN_EPS)
    q = heads(T.matmul(pre, params[p + "attn.wq"]) + params[p + "attn.bq"])
    k = heads(T.matmul(pre, params[p + "attn.wk"]) + params[p + "attn.bk"])
    v = heads(T.matmul(pre, params[p + "attn.wv"]) + params[p + "attn.bv"])
    scores = T.mul(T.matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / np.sqrt(hd))
    attn = T.softmax(scores, axis=-1)
    ctx = T.matmul(attn, v).transpose(0, 2, 1, 3).reshape((bsz, t, d))
    x = x + (T.matmul(ctx, params[p + "attn.wo"]) + params[p + "attn.bo"])

    pre2 = T.layer_norm(x, params[p + "ln2.gain"], params[p + "ln2.bias"], LN_EPS)
    hid = T.gelu(T.matmul(pre2, params[p + "mlp.w1"]) + params[p + "mlp.b1"])
    x = x + (T.matmul(hid, params[p + "mlp.w2"]) + params[p + "mlp.b2"])

    if not batched:
        x = x.reshape((t, d))
        attn = attn.reshape((s, t, t))
    return TokenSequence(tokens=x), attn


def forward(image, config: BackboneConfig, params: dict):
    """Run all blocks; return patch-token features and the attention record.

    The class-token row is dropped from the returned features, so their shape
    is (N, D) per sample.
    """
    seq = embed(image, config, params)
    record = AttentionRecord()
    head_axis = 1 if seq.tokens.ndim == 3 else 0
    for i in range(config.num_blocks):
        seq, attn = block_forward(seq, params, i, config)
        record.per_block.append(attn)
        record.averaged.append(attn.mean(axis=head_axis))
    x_l = seq.tokens[..., 1:, :]
    return x_l, record
