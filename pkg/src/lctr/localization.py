"""Localization pipeline: map fusion, upsampling, box extraction, metrics.

Everything here is pure numpy over detached maps. Conventions that change
box outcomes are pinned: bilinear interpolation uses half-pixel centers
(align-corners false), thresholding keeps pixels at or above
ratio * max, components are 8-connected, and ties between equal-area
components go to the first one encountered in row-major scan order.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class Box:
    """Pixel box, inclusive-exclusive: x0 <= x < x1, y0 <= y < y1."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate box ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass
class LocalizationMaps:
    m_cdm: np.ndarray
    m_rpam: np.ndarray
    m_fuse: np.ndarray
    upsampled: np.ndarray


@dataclass
class Prediction:
    """Per-sample evaluation inputs: class probabilities plus the box taken
    from the ground-truth class channel (class-agnostic localization)."""

    probs: np.ndarray
    loc_box: Box
    flagged: bool = False


@dataclass
class GroundTruth:
    label: int
    box: Box


@dataclass
class MetricsReport:
    top1_cls: float
    top5_cls: float
    top1_loc: float
    top5_loc: float
    gt_known: float
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "top1_cls": self.top1_cls,
            "top5_cls": self.top5_cls,
            "top1_loc": self.top1_loc,
            "top5_loc": self.top5_loc,
            "gt_known": self.gt_known,
            "n_samples": self.n_samples,
        }


def extract_m_cdm(class_maps: np.ndarray, class_id: int) -> np.ndarray:
    """Channel `class_id` of the (C, h, w) class-evidence stack."""
    maps = np.asarray(class_maps, dtype=float)
    if maps.ndim != 3:
        raise DimensionError(f"expected (C,h,w) class maps, got shape {maps.shape}")
    if not 0 <= class_id < maps.shape[0]:
        raise ValueError(f"class id {class_id} out of range for {maps.shape[0]} channels")
    return maps[class_id].copy()


def predicted_class(probs: np.ndarray) -> int:
    """Argmax with ties resolved to the lowest index."""
    return int(np.argmax(probs))


def minmax_normalize(a: np.ndarray) -> np.ndarray:
    """Scale to [0,1]; an all-equal map normalizes to all zeros."""
    a = np.asarray(a, dtype=float)
    lo = a.min()
    span = a.max() - lo
    if span <= 0:
        return np.zeros_like(a)
    return (a - lo) / span


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear interpolation (align-corners false)."""
    src = np.asarray(src, dtype=float)
    h, w = src.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = src[y0c][:, x0c] * (1 - fx) + src[y0c][:, x1c] * fx
    bottom = src[y1c][:, x0c] * (1 - fx) + src[y1c][:, x1c] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def fuse_and_upsample(m_cdm: np.ndarray, m_rpam: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Elementwise product, bilinear upsample, then min-max normalize."""
    m_cdm = np.asarray(m_cdm, dtype=float)
    m_rpam = np.asarray(m_rpam, dtype=float)
    if m_cdm.shape != m_rpam.shape:
        raise DimensionError(f"map shapes differ: {m_cdm.shape} vs {m_rpam.shape}")
    fused = m_cdm * m_rpam
    return minmax_normalize(bilinear_resize(fused, out_h, out_w))


def build_localization_maps(m_cdm, m_rpam, out_h: int, out_w: int) -> LocalizationMaps:
    m_cdm = np.asarray(m_cdm, dtype=float)
    m_rpam = np.asarray(m_rpam, dtype=float)
    return LocalizationMaps(
        m_cdm=m_cdm,
        m_rpam=m_rpam,
        m_fuse=m_cdm * m_rpam,
        upsampled=fuse_and_upsample(m_cdm, m_rpam, out_h, out_w),
    )


_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _components(mask: np.ndarray):
    """8-connected components in row-major discovery order.

    Yields (area, y_min, x_min, y_max, x_max) with inclusive extrema.
    """
    h, w = mask.shape
    labels = np.full((h, w), False)
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or labels[sy, sx]:
                continue
            labels[sy, sx] = True
            queue = deque([(sy, sx)])
            area = 0
            y_min = y_max = sy
            x_min = x_max = sx
            while queue:
                y, x = queue.popleft()
                area += 1
                y_min, y_max = min(y_min, y), max(y_max, y)
                x_min, x_max = min(x_min, x), max(x_max, x)
                for dy, dx in _NEIGHBORS:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = True
                        queue.append((ny, nx))
            yield area, y_min, x_min, y_max, x_max


def has_foreground(heatmap: np.ndarray) -> bool:
    return float(np.max(heatmap)) > 0.0


def extract_box(heatmap: np.ndarray, threshold_ratio: float) -> Box:
    """Tight box of the largest 8-connected component above the threshold.

    The mask keeps pixels >= threshold_ratio * max. A heatmap with no
    positive value has no foreground; the full-image box is returned and the
    caller should flag the sample (see `has_foreground`).
    """
    heatmap = np.asarray(heatmap, dtype=float)
    if heatmap.ndim != 2:
        raise DimensionError(f"heatmap must be 2-D, got shape {heatmap.shape}")
    if not 0.0 < threshold_ratio < 1.0:
        raise ConfigurationError(f"threshold ratio must lie in (0,1), got {threshold_ratio}")
    h, w = heatmap.shape
    peak = heatmap.max()
    if peak <= 0:
        return Box(0, 0, w, h)
    mask = heatmap >= threshold_ratio * peak
    best = None
    for area, y_min, x_min, y_max, x_max in _components(mask):
        if best is None or area > best[0]:
            best = (area, y_min, x_min, y_max, x_max)
    _, y_min, x_min, y_max, x_max = best
    return Box(x_min, y_min, x_max + 1, y_max + 1)


def iou(a: Box, b: Box) -> float:
    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def evaluate(predictions: list, ground_truth: list) -> MetricsReport:
    """Aggregate classification and localization accuracy.

    Top-1/Top-5 classification asks whether the ranked predictions contain
    the label; Gt-known asks whether the ground-truth-class box overlaps the
    annotation with IoU > 0.5; the localization metrics are the conjunction
    of the two.
    """
    if len(predictions) != len(ground_truth):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(ground_truth)} ground-truth entries"
        )
    if not predictions:
        raise ValueError("nothing to evaluate")
    c1 = c5 = l1 = l5 = gtk = 0
    for pred, gt in zip(predictions, ground_truth):
        ranked = np.argsort(-np.asarray(pred.probs), kind="stable")
        top1 = int(ranked[0]) == gt.label
        top5 = gt.label in ranked[:5]
        known = iou(pred.loc_box, gt.box) > 0.5
        c1 += top1
        c5 += top5
        gtk += known
        l1 += top1 and known
        l5 += top5 and known
    n = len(predictions)
    return MetricsReport(
        top1_cls=c1 / n,
        top5_cls=c5 / n,
        top1_loc=l1 / n,
        top5_loc=l5 / n,
        gt_known=gtk / n,
        n_samples=n,
    )


# -- artifact writers ---------------------------------------------------------


def write_pgm(path, heatmap: np.ndarray):
    """Binary portable graymap (magic P5), heatmap scaled from [0,1] to 255."""
    arr = np.clip(np.asarray(heatmap, dtype=float), 0.0, 1.0)
    pixels = np.round(arr * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_boxes_csv(path, rows):
    """Rows of (image_id, Box, score) as `image_id,x0,y0,x1,y1,score`."""
    with open(path, "w") as fh:
        fh.write("image_id,x0,y0,x1,y1,score\n")
        for image_id, box, score in rows:
            fh.write(f"{image_id},{box.x0},{box.y0},{box.x1},{box.y1},{score!r}\n")


def write_metrics_txt(path, report: MetricsReport, extras: dict | None = None):
    entries = report.as_dict()
    if extras:
        entries.update(extras)
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value!r}\n")


def write_metrics_json(path, report: MetricsReport, extras: dict | None = None):
    entries = report.as_dict()
    if extras:
        entries.update(extras)
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
