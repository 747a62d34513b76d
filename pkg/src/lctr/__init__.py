"""Desk-scale weakly supervised object localization toolkit.

A miniature vision transformer with recorded per-block attention feeds two
localization mechanisms: parameter-free patch relation maps built from the
class-token attention, and a cue-digging head that erases strong responses
to score learnable kernel groups. Everything runs on an in-package float64
autodiff engine so gradients stay checkable against finite differences.
"""

from .backbone import AttentionRecord, BackboneConfig, TokenSequence
from .cdm import CdmConfig, CdmParams, cdm_forward, classify, reversed_class_map, score_groups
from .config import RunConfig, load_config, save_config
from .data import Sample, generate_dataset, load_dataset, save_dataset
from .localization import (
    Box,
    GroundTruth,
    MetricsReport,
    Prediction,
    evaluate,
    extract_box,
    extract_m_cdm,
    fuse_and_upsample,
    iou,
)
from .model import LctrModel, ModelOutput
from .optim import AdamW
from .rpam import (
    PatchRelationMap,
    block_relation_vector,
    build_patch_relation_map,
    class_token_vector,
    patch_attention_map,
)
from .runner import ablate, dump_attention, run_eval, sweep_threshold
from .tensor import Parameter, Tensor, backward, no_grad
from .train import TrainHistory, build_model, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AttentionRecord",
    "BackboneConfig",
    "Box",
    "CdmConfig",
    "CdmParams",
    "GroundTruth",
    "LctrModel",
    "MetricsReport",
    "ModelOutput",
    "Parameter",
    "PatchRelationMap",
    "Prediction",
    "RunConfig",
    "Sample",
    "Tensor",
    "TokenSequence",
    "TrainHistory",
    "ablate",
    "backward",
    "block_relation_vector",
    "build_model",
    "build_patch_relation_map",
    "cdm_forward",
    "class_token_vector",
    "classify",
    "dump_attention",
    "evaluate",
    "extract_box",
    "extract_m_cdm",
    "fuse_and_upsample",
    "generate_dataset",
    "iou",
    "load_config",
    "load_dataset",
    "no_grad",
    "patch_attention_map",
    "reversed_class_map",
    "run_eval",
    "save_config",
    "save_dataset",
    "score_groups",
    "sweep_threshold",
    "train",
]
