"""Full model: transformer backbone plus a spatial classification head.

With the cue-digging head enabled the class-evidence map comes from the
score-weighted kernel-group convolution; disabled, a plain 1x1 convolution
from the embedding dim to the classes takes its place, keeping the
pool-and-softmax classifier identical for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backbone, tensor as T
from .cdm import CdmConfig, CdmParams, cdm_forward, classify
from .checkpoint import load_into, save_checkpoint
from .errors import DimensionError
from .init import trunc_normal
from .tensor import Parameter, Tensor


@dataclass
class ModelOutput:
    features: Tensor        # (B, D, h, w) patch features on the grid
    class_maps: Tensor      # (B, C, h, w) class-wise spatial logits
    probs: Tensor           # (B, C)
    attn: backbone.AttentionRecord
    loss_fn: object

    def loss(self, labels) -> Tensor:
        return self.loss_fn(labels)


class LctrModel:
    def __init__(self, backbone_config: backbone.BackboneConfig, cdm_config: CdmConfig | None = None,
                 cdm_enabled: bool = True, seed: int = 0):
        rng = np.random.default_rng(seed) if isinstance(seed, int) else seed
        self.backbone_config = backbone_config
        self.cdm_enabled = cdm_enabled
        self.params = backbone.init_backbone_params(backbone_config, rng)
        if cdm_enabled:
            if cdm_config is None:
                cdm_config = CdmConfig(
                    embed_dim=backbone_config.embed_dim, num_classes=backbone_config.num_classes
                )
            self.cdm_config = cdm_config
            self.cdm = CdmParams(cdm_config, rng)
            for p in self.cdm.parameters():
                self.params[p.name] = p
        else:
            self.cdm_config = None
            self.cdm = None
            d, c = backbone_config.embed_dim, backbone_config.num_classes
            head_w = Parameter("head.conv1x1.weight", trunc_normal(rng, (d, c, 1, 1)))
            head_b = Parameter("head.conv1x1.bias", np.zeros(c))
            self.params[head_w.name] = head_w
            self.params[head_b.name] = head_b

    def parameters(self) -> list:
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, images) -> ModelOutput:
        """Batched forward pass over images of shape (B, 3, H, W)."""
        imgs = T.as_tensor(images)
        if imgs.ndim != 4:
            raise DimensionError(f"model forward expects (B,3,H,W), got shape {imgs.shape}")
        cfg = self.backbone_config
        x_l, attn = backbone.forward(imgs, cfg, self.params)
        bsz = imgs.shape[0]
        g = cfg.grid_size
        feats = x_l.transpose(0, 2, 1).reshape((bsz, cfg.embed_dim, g, g))
        if self.cdm_enabled:
            class_maps = cdm_forward(feats, attn, self.cdm, self.cdm_config)
        else:
            class_maps = T.conv2d(feats, self.params["head.conv1x1.weight"]) + self.params[
                "head.conv1x1.bias"
            ].tensor.reshape((cfg.num_classes, 1, 1))
        probs, loss_fn = classify(class_maps)
        return ModelOutput(features=feats, class_maps=class_maps, probs=probs, attn=attn,
                           loss_fn=loss_fn)

    def save(self, path):
        save_checkpoint(self.params, path)

    def load(self, path):
        load_into(self.params, path)
