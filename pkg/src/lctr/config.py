"""Run configuration and the flat `key = value` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .backbone import BackboneConfig
from .cdm import CdmConfig
from .errors import ConfigurationError


@dataclass
class RunConfig:
    # backbone
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    num_heads: int = 4
    num_blocks: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 5
    # cue-digging head
    num_kernel_groups: int = 4
    kernel_size: int = 3
    # optimizer
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 5e-4
    # run
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    threshold_ratio: float = 0.35
    rpam_enabled: bool = True
    cdm_enabled: bool = True
    # data
    n_train: int = 2000
    n_test: int = 400

    def __post_init__(self):
        for name in ("epochs", "batch_size", "n_train", "n_test"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 < self.threshold_ratio < 1.0:
            raise ConfigurationError(
                f"threshold_ratio must lie in (0,1), got {self.threshold_ratio}"
            )
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigurationError("lr and eps must be positive")
        self.backbone()  # validates divisibility constraints
        self.cdm()

    def backbone(self) -> BackboneConfig:
        return BackboneConfig(
            image_size=self.image_size,
            patch_size=self.patch_size,
            embed_dim=self.embed_dim,
            num_heads=self.num_heads,
            num_blocks=self.num_blocks,
            mlp_ratio=self.mlp_ratio,
            num_classes=self.num_classes,
        )

    def cdm(self) -> CdmConfig:
        return CdmConfig(
            embed_dim=self.embed_dim,
            num_classes=self.num_classes,
            num_kernel_groups=self.num_kernel_groups,
            kernel_size=(self.kernel_size, self.kernel_size),
        )

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(name: str, text: str):
    field = _FIELDS[name]
    if field.type in ("bool", bool):
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"{name}: expected a boolean, got {text!r}")
    if field.type in ("int", int):
        return int(text)
    return float(text)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse `key = value` lines; `#` starts a comment, blank lines ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, text)
    if overrides:
        values.update(overrides)
    return RunConfig(**values)


def save_config(config: RunConfig, path):
    lines = []
    for field in dataclasses.fields(RunConfig):
        value = getattr(config, field.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{field.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
