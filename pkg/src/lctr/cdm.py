"""Cue digging head: reverse-attention erasing, kernel-group scoring, and
score-weighted convolution producing class-wise spatial logits.

The class-token attention (averaged over blocks) marks the strongly
attended regions; erasing them leaves the weak responses and background,
which score the kernel groups. The feature map itself is then convolved
with the score-weighted sum of the group kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .init import kaiming_uniform, trunc_normal
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class CdmConfig:
    embed_dim: int
    num_classes: int
    num_kernel_groups: int = 4
    kernel_size: tuple = (3, 3)

    def __post_init__(self):
        if self.num_kernel_groups < 1:
            raise ConfigurationError(f"need at least one kernel group, got {self.num_kernel_groups}")
        kh, kw = self.kernel_size
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError(f"kernel extents must be odd, got {self.kernel_size}")
        if self.embed_dim < 1 or self.num_classes < 2:
            raise ConfigurationError("embed_dim must be >=1 and num_classes >=2")


class CdmParams:
    """Erase conv, the two score heads, and the learnable kernel groups."""

    def __init__(self, config: CdmConfig, rng: np.random.Generator, prefix: str = "cdm."):
        d, g, c = config.embed_dim, config.num_kernel_groups, config.num_classes
        kh, kw = config.kernel_size
        self.config = config
        self.erase_weight = Parameter(prefix + "erase_conv.weight", trunc_normal(rng, (d, d, 3, 3)))
        self.erase_bias = Parameter(prefix + "erase_conv.bias", np.zeros(d))
        self.gap_weight = Parameter(prefix + "score_fc_gap.weight", trunc_normal(rng, (d, g)))
        self.gap_bias = Parameter(prefix + "score_fc_gap.bias", np.zeros(g))
        self.gmp_weight = Parameter(prefix + "score_fc_gmp.weight", trunc_normal(rng, (d, g)))
        self.gmp_bias = Parameter(prefix + "score_fc_gmp.bias", np.zeros(g))
        self.group_kernels = Parameter(
            prefix + "group_kernels",
            kaiming_uniform(rng, (g, d, c, kh, kw), fan_in=d * kh * kw),
        )

    def parameters(self) -> list:
        return [
            self.erase_weight,
            self.erase_bias,
            self.gap_weight,
            self.gap_bias,
            self.gmp_weight,
            self.gmp_bias,
            self.group_kernels,
        ]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    @staticmethod
    def expected_param_count(config: CdmConfig) -> int:
        d, g, c = config.embed_dim, config.num_kernel_groups, config.num_classes
        kh, kw = config.kernel_size
        return (d * d * 9 + d) + 2 * (d * g + g) + g * d * c * kh * kw


def _lift_spatial(x, rank: int):
    x = T.as_tensor(x)
    if x.ndim == rank:
        return x.reshape((1,) + x.shape), False
    if x.ndim == rank + 1:
        return x, True
    raise DimensionError(f"expected rank {rank} or {rank + 1}, got shape {x.shape}")


def _lifted_averaged(attn):
    mats = []
    batched = None
    for a in attn.averaged:
        a = T.as_tensor(a)
        if batched is None:
            batched = a.ndim == 3
        mats.append(a if a.ndim == 3 else a.reshape((1,) + a.shape))
    if not mats:
        raise DimensionError("attention record is empty")
    return mats, batched


def reversed_class_map(attn, grid_h: int, grid_w: int) -> Tensor:
    """One minus the min-max-normalized mean class-token attention map.

    The patch entries of each block's class-token row are averaged over
    blocks and reshaped row-major onto the grid. A flat map (max == min)
    normalizes to all zeros, so its reversal erases nothing.
    """
    mats, batched = _lifted_averaged(attn)
    t = mats[0].shape[-1]
    if t - 1 != grid_h * grid_w:
        raise DimensionError(f"{t - 1} patch tokens do not fill a {grid_h}x{grid_w} grid")
    acc = mats[0][:, 0, 1:]
    for a in mats[1:]:
        acc = acc + a[:, 0, 1:]
    bsz = acc.shape[0]
    m = T.mul(acc, 1.0 / len(mats)).reshape((bsz, grid_h, grid_w))
    mn = m.min(axis=(1, 2), keepdims=True)
    mx = m.max(axis=(1, 2), keepdims=True)
    span = T.sub(mx, mn)
    live = (span.data > 0).astype(float)
    safe_span = T.add(span, Tensor(1.0 - live))
    normed = T.mul(T.div(T.sub(m, mn), safe_span), Tensor(live))
    rev = T.sub(1.0, normed)
    if not batched:
        rev = rev.reshape((grid_h, grid_w))
    return rev


def score_groups(x_l, reversed_map, params: CdmParams) -> Tensor:
    """Sigmoid group scores from the erased-and-convolved feature map.

    The reversed map multiplies the features spatially; the result runs
    through the erase convolution, then the average-pool and max-pool
    vectors each pass their own fully connected head, and the summed
    outputs go through a sigmoid.
    """
    x, batched = _lift_spatial(x_l, 3)
    rev, _ = _lift_spatial(reversed_map, 2)
    if rev.shape[-2:] != x.shape[-2:]:
        raise DimensionError(f"map shape {rev.shape[-2:]} does not match features {x.shape[-2:]}")
    d = params.config.embed_dim
    if x.shape[1] != d:
        raise DimensionError(f"features have {x.shape[1]} channels, expected {d}")
    erased = T.mul(x, rev.reshape((rev.shape[0], 1) + rev.shape[-2:]))
    xt = T.conv2d(erased, params.erase_weight) + params.erase_bias.tensor.reshape((d, 1, 1))
    pooled_avg = T.global_avg_pool(xt)
    pooled_max = T.global_max_pool(xt)
    pre = (
        T.matmul(pooled_avg, params.gap_weight)
        + params.gap_bias
        + T.matmul(pooled_max, params.gmp_weight)
        + params.gmp_bias
    )
    scores = T.sigmoid(pre)
    if not batched:
        scores = scores.reshape((scores.shape[-1],))
    return scores


def weighted_kernel_conv(x_l, scores, group_kernels) -> Tensor:
    """Convolve features with the score-weighted sum of the kernel groups."""
    x, batched = _lift_spatial(x_l, 3)
    s = T.as_tensor(scores)
    k = T.as_tensor(group_kernels)
    if s.ndim == 1:
        s = s.reshape((1, s.shape[0]))
    g = k.shape[0]
    if s.shape[-1] != g:
        raise DimensionError(f"{s.shape[-1]} scores for {g} kernel groups")
    sb = s.reshape(s.shape + (1, 1, 1, 1))
    w_eff = T.mul(sb, k).sum(axis=1)
    if w_eff.shape[0] == 1 and x.shape[0] != 1:
        w_eff = w_eff.reshape(w_eff.shape[1:])
    out = T.conv2d(x, w_eff)
    if not batched:
        out = out.reshape(out.shape[1:])
    return out


def cdm_forward(x_l, attn, params: CdmParams, config: CdmConfig) -> Tensor:
    """Class-wise spatial logits; gradients flow through scores and kernels."""
    x, batched = _lift_spatial(x_l, 3)
    rev = reversed_class_map(attn, x.shape[-2], x.shape[-1])
    if rev.ndim == 2:
        rev = rev.reshape((1,) + rev.shape)
    scores = score_groups(x, rev, params)
    out = weighted_kernel_conv(x, scores, params.group_kernels)
    if not batched:
        out = out.reshape(out.shape[1:])
    return out


def classify(x_cdm):
    """Average-pool the spatial logits into class probabilities.

    Returns (probs, loss_fn); loss_fn maps a label (or label array for a
    batch) to the mean negative log probability.
    """
    x = T.as_tensor(x_cdm)
    batched = x.ndim == 4
    logits = T.global_avg_pool(x)
    probs = T.softmax(logits, axis=-1)
    num_classes = probs.shape[-1]

    def loss_fn(labels):
        idx = np.atleast_1d(np.asarray(labels, dtype=np.intp))
        if idx.min() < 0 or idx.max() >= num_classes:
            raise ValueError(f"label out of range [0, {num_classes}): {labels}")
        p2 = probs if batched else probs.reshape((1, num_classes))
        picked = T.gather_rows(p2, idx)
        return T.mul(T.log(picked).mean(), -1.0)

    return probs, loss_fn
