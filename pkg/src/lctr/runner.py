"""Evaluation pipeline and the ablation / threshold-sweep orchestration.

Per image: backbone features and attention, class-evidence maps, the patch
relation map (when enabled), fusion, upsampling, box extraction, metrics.
With the relation map disabled the fused map is the class map alone.
Artifacts: per-image heatmaps (PGM), predicted boxes (CSV), metrics as
key-value text and JSON, and rendered figure files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import report
from .config import RunConfig
from .localization import (
    Box,
    GroundTruth,
    MetricsReport,
    Prediction,
    evaluate,
    extract_box,
    extract_m_cdm,
    fuse_and_upsample,
    has_foreground,
    iou,
    predicted_class,
    write_boxes_csv,
    write_metrics_json,
    write_metrics_txt,
    write_pgm,
)
from .model import LctrModel
from .rpam import build_patch_relation_map, dump_relation_csv
from .tensor import no_grad

EVAL_CHUNK = 64


@dataclass
class SampleEval:
    probs: np.ndarray
    pred_heatmap: np.ndarray   # fused map for the predicted class
    gt_heatmap: np.ndarray     # fused map for the ground-truth class
    pred_box: Box
    loc_box: Box
    flagged: bool


def _forward_chunks(model: LctrModel, images: np.ndarray):
    """Yield (probs, class_maps, per-sample averaged attention) per image."""
    cfg = model.backbone_config
    for start in range(0, len(images), EVAL_CHUNK):
        chunk = images[start : start + EVAL_CHUNK]
        with no_grad():
            out = model.forward(chunk)
        probs = out.probs.data
        maps = out.class_maps.data
        averaged = [a.data for a in out.attn.averaged]
        for b in range(len(chunk)):
            yield probs[b], maps[b], [a[b] for a in averaged]


def evaluate_samples(model: LctrModel, samples: list, config: RunConfig) -> list:
    """Run the full localization pipeline on every sample."""
    cfg = model.backbone_config
    g = cfg.grid_size
    size = cfg.image_size
    images = np.stack([s.image for s in samples])
    results = []
    for (probs, class_maps, averaged), sample in zip(_forward_chunks(model, images), samples):
        if config.rpam_enabled:
            relation = build_patch_relation_map(averaged, g, g).map
        else:
            relation = np.ones((g, g))
        pred = predicted_class(probs)
        pred_heat = fuse_and_upsample(extract_m_cdm(class_maps, pred), relation, size, size)
        gt_heat = fuse_and_upsample(
            extract_m_cdm(class_maps, sample.label), relation, size, size
        )
        pred_box = extract_box(pred_heat, config.threshold_ratio)
        loc_box = extract_box(gt_heat, config.threshold_ratio)
        flagged = not (has_foreground(pred_heat) and has_foreground(gt_heat))
        results.append(
            SampleEval(
                probs=probs,
                pred_heatmap=pred_heat,
                gt_heatmap=gt_heat,
                pred_box=pred_box,
                loc_box=loc_box,
                flagged=flagged,
            )
        )
    return results


def report_from_evals(evals: list, samples: list) -> MetricsReport:
    predictions = [
        Prediction(probs=e.probs, loc_box=e.loc_box, flagged=e.flagged) for e in evals
    ]
    ground_truth = [GroundTruth(label=s.label, box=s.gt_box) for s in samples]
    return evaluate(predictions, ground_truth)


def run_eval(model: LctrModel, samples: list, config: RunConfig,
             out_dir=None, figures: bool = True) -> MetricsReport:
    """Evaluate and, when `out_dir` is given, write the artifact files."""
    evals = evaluate_samples(model, samples, config)
    metrics = report_from_evals(evals, samples)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        heat_dir = out / "heatmaps"
        heat_dir.mkdir(exist_ok=True)
        for i, e in enumerate(evals):
            write_pgm(heat_dir / f"heatmap_{i}.pgm", e.pred_heatmap)
        write_boxes_csv(
            out / "boxes.csv",
            [
                (i, e.pred_box, float(e.probs[predicted_class(e.probs)]))
                for i, e in enumerate(evals)
            ],
        )
        extras = {"n_flagged": sum(e.flagged for e in evals)}
        write_metrics_txt(out / "metrics.txt", metrics, extras)
        write_metrics_json(out / "metrics.json", metrics, extras)
        if figures:
            fig_dir = out / "figures"
            fig_dir.mkdir(exist_ok=True)
            report.render_overlays(samples, evals, fig_dir)
    return metrics


ABLATION_MODES = (
    ("baseline", False, False),
    ("rpam_only", True, False),
    ("cdm_only", False, True),
    ("full", True, True),
)


def ablate(config: RunConfig, train_samples: list, test_samples: list,
           out_dir=None, log_fn=None) -> list:
    """Four-way ablation: two trainings (head with and without the
    cue-digging module), each evaluated with the relation map off and on.

    Returns [(mode, MetricsReport)] in baseline, rpam_only, cdm_only, full
    order.
    """
    from .train import train  # local import to avoid a cycle

    models = {}
    for cdm_enabled in (False, True):
        cfg = config.replace(cdm_enabled=cdm_enabled)
        models[cdm_enabled], _ = train(cfg, train_samples, log_fn=log_fn)
    rows = []
    for mode, rpam_enabled, cdm_enabled in ABLATION_MODES:
        cfg = config.replace(rpam_enabled=rpam_enabled, cdm_enabled=cdm_enabled)
        rows.append((mode, run_eval(models[cdm_enabled], test_samples, cfg)))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_ablation_csv(out / "ablation.csv", rows)
        report.render_ablation_chart(rows, out / "ablation.png")
    return rows


def _write_ablation_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("mode,top1_cls,top5_cls,top1_loc,top5_loc,gt_known,n_samples\n")
        for mode, m in rows:
            fh.write(
                f"{mode},{m.top1_cls!r},{m.top5_cls!r},{m.top1_loc!r},"
                f"{m.top5_loc!r},{m.gt_known!r},{m.n_samples}\n"
            )


def sweep_threshold(model: LctrModel, samples: list, config: RunConfig,
                    ratios=None, out_dir=None) -> list:
    """Gt-known accuracy as a function of the binarization ratio.

    Heatmaps are computed once; only the box extraction reruns per ratio.
    Returns [(ratio, gt_known)].
    """
    if ratios is None:
        ratios = [round(0.05 * k, 2) for k in range(1, 19)]  # 0.05 .. 0.90
    evals = evaluate_samples(model, samples, config)
    gt_boxes = [s.gt_box for s in samples]
    rows = []
    for ratio in ratios:
        hits = 0
        for e, gt_box in zip(evals, gt_boxes):
            box = extract_box(e.gt_heatmap, ratio)
            hits += iou(box, gt_box) > 0.5
        rows.append((float(ratio), hits / len(samples)))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w") as fh:
            fh.write("threshold_ratio,gt_known\n")
            for ratio, acc in rows:
                fh.write(f"{ratio!r},{acc!r}\n")
        report.render_sweep_curve(rows, out / "sweep.png")
    return rows


def dump_attention(model: LctrModel, sample, config: RunConfig, out_dir):
    """Write per-block class-token and relation vectors (CSV) plus figures
    for one image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = model.backbone_config.grid_size
    image = sample.image if hasattr(sample, "image") else np.asarray(sample)
    with no_grad():
        model_out = model.forward(image[None])
    averaged = [a.data[0] for a in model_out.attn.averaged]
    dump_relation_csv(averaged, g, g, out / "attention.csv")
    relation = build_patch_relation_map(averaged, g, g).map
    class_maps = [a[0, 1:].reshape(g, g) for a in averaged]
    report.render_attention_grid(image, class_maps, relation, out / "attention.png")
    return out / "attention.csv"
