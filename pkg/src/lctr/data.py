"""Synthetic shape dataset with low-contrast bodies and discriminative markers.

Each sample renders one shape class over a textured background. The shape
body sits at low contrast so a classifier cannot rely on it alone, while a
small high-saturation corner marker (color and corner pinned per class)
gives an easy discriminative cue. That split makes partial-activation
versus full-extent localization measurable: a lazy localizer finds the
marker, a good one covers the body. Boxes are tight around the rendered
foreground and never used in training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .localization import Box

# Adjacent entries form marker-style pairs; keep paired bodies dissimilar.
SHAPE_NAMES = (
    "disk",
    "cross",
    "rectangle",
    "ring",
    "triangle",
    "frame",
    "diamond",
    "l_shape",
    "ellipse",
    "t_bar",
)

MARKER_COLORS = np.array(
    [
        [0.95, 0.10, 0.10],
        [0.10, 0.90, 0.15],
        [0.15, 0.25, 0.95],
        [0.95, 0.90, 0.10],
        [0.90, 0.15, 0.90],
        [0.10, 0.90, 0.90],
        [0.95, 0.55, 0.10],
        [0.55, 0.10, 0.95],
        [0.70, 0.95, 0.30],
        [0.95, 0.40, 0.60],
    ]
)

BACKGROUND_RANGE = (0.35, 0.60)
TEXTURE_AMPLITUDE = 0.04
BODY_CONTRAST = 0.24
MARKER_SIZE_FRACTION = 0.15  # of image side, at least 3 px


@dataclass
class Sample:
    image: np.ndarray  # (3, H, W), values in [0, 1]
    label: int
    gt_box: Box


def _shape_mask(kind: str, h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    ys, xs = np.ogrid[:h, :w]
    dy, dx = ys - cy, xs - cx
    if kind == "disk":
        r = min(ry, rx)
        return dy * dy + dx * dx <= r * r
    if kind == "rectangle":
        return (np.abs(dy) <= ry) & (np.abs(dx) <= rx)
    if kind == "triangle":
        span = (dy + ry) / (2.0 * ry)  # 0 at apex, 1 at base
        return (np.abs(dy) <= ry) & (np.abs(dx) <= span * rx)
    if kind == "ring":
        r = min(ry, rx)
        d2 = dy * dy + dx * dx
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if kind == "cross":
        arm = max(1.0, 0.35 * min(ry, rx))
        vertical = (np.abs(dx) <= arm) & (np.abs(dy) <= ry)
        horizontal = (np.abs(dy) <= arm) & (np.abs(dx) <= rx)
        return vertical | horizontal
    if kind == "diamond":
        return np.abs(dy) / ry + np.abs(dx) / rx <= 1.0
    if kind == "ellipse":
        return (dy / ry) ** 2 + (dx / (0.62 * rx)) ** 2 <= 1.0
    if kind == "l_shape":
        t = max(1.0, 0.4 * min(ry, rx))
        bar = (dx <= -rx + 2 * t) & (dx >= -rx) & (np.abs(dy) <= ry)
        foot = (dy >= ry - 2 * t) & (dy <= ry) & (np.abs(dx) <= rx)
        return bar | foot
    if kind == "t_bar":
        t = max(1.0, 0.4 * min(ry, rx))
        cap = (dy <= -ry + 2 * t) & (dy >= -ry) & (np.abs(dx) <= rx)
        stem = (np.abs(dx) <= t) & (np.abs(dy) <= ry)
        return cap | stem
    if kind == "frame":
        outer = (np.abs(dy) <= ry) & (np.abs(dx) <= rx)
        inner = (np.abs(dy) <= 0.55 * ry) & (np.abs(dx) <= 0.55 * rx)
        return outer & ~inner
    raise ConfigurationError(f"unknown shape kind {kind!r}")


def _mask_box(mask: np.ndarray) -> Box:
    ys = np.flatnonzero(mask.any(axis=1))
    xs = np.flatnonzero(mask.any(axis=0))
    return Box(int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1)


def render_sample(label: int, h: int, w: int, rng: np.random.Generator,
                  body_contrast: float = BODY_CONTRAST) -> Sample:
    """Render one sample: textured background, low-contrast body, marker."""
    base = rng.uniform(*BACKGROUND_RANGE, size=(3, 1, 1))
    texture = rng.uniform(-TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE, size=(1, h, w))
    grain = rng.uniform(-0.02, 0.02, size=(3, h, w))
    image = np.clip(base + texture + grain, 0.0, 1.0)

    ry = rng.uniform(0.26, 0.34) * h
    rx = rng.uniform(0.26, 0.34) * w
    cy = rng.uniform(ry + 1.0, h - ry - 1.0)
    cx = rng.uniform(rx + 1.0, w - rx - 1.0)
    mask = _shape_mask(SHAPE_NAMES[label], h, w, cy, cx, ry, rx)

    signs = rng.choice([-1.0, 1.0], size=3)
    delta = signs * body_contrast * rng.uniform(0.75, 1.25, size=3)
    body_color = np.clip(base[:, 0, 0] + delta, 0.02, 0.98)
    for ch in range(3):
        image[ch][mask] = body_color[ch] + texture[0][mask] * 0.5

    # Marker style (color and corner) is shared by class pairs, so the
    # marker narrows the label to two candidates and only the low-contrast
    # body shape settles it: the classic partial-activation trap.
    box = _mask_box(mask)
    m = max(3, int(round(MARKER_SIZE_FRACTION * h)))
    style = label // 2
    corner = style % 4
    my = box.y0 + 1 if corner in (0, 1) else box.y1 - 1 - m
    mx = box.x0 + 1 if corner in (0, 2) else box.x1 - 1 - m
    my = int(np.clip(my, box.y0, box.y1 - m))
    mx = int(np.clip(mx, box.x0, box.x1 - m))
    marker = np.zeros((h, w), dtype=bool)
    marker[my : my + m, mx : mx + m] = True
    color = MARKER_COLORS[style]
    for ch in range(3):
        image[ch][marker] = color[ch]

    gt_box = _mask_box(mask | marker)
    image = np.clip(image, 0.0, 1.0)
    return Sample(image=image, label=label, gt_box=gt_box)


def generate_dataset(n_train: int, n_test: int, height: int, width: int,
                     num_classes: int, seed: int,
                     body_contrast: float = BODY_CONTRAST):
    """Round-robin class assignment keeps the histogram balanced within one."""
    if not 3 <= num_classes <= 10:
        raise ConfigurationError(f"num_classes must lie in 3..10, got {num_classes}")
    if height != width or height not in (32, 64):
        raise ConfigurationError(f"image size must be square 32 or 64, got {height}x{width}")
    rng = np.random.default_rng(seed)
    train = [
        render_sample(i % num_classes, height, width, rng, body_contrast)
        for i in range(n_train)
    ]
    test = [
        render_sample(i % num_classes, height, width, rng, body_contrast)
        for i in range(n_test)
    ]
    return train, test


# -- on-disk format -----------------------------------------------------------


def write_ppm(path, image: np.ndarray):
    """Binary portable pixmap (magic P6), image scaled from [0,1] to 255."""
    arr = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    pixels = np.round(arr * 255.0).astype(np.uint8)
    _, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary pixmap (magic {fields[0]!r})")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1
    pixels = np.frombuffer(raw[pos : pos + 3 * w * h], dtype=np.uint8)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(float) / float(maxval)


def save_dataset(directory, samples):
    """Write img_<id>.ppm plus labels.csv and boxes.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", newline="") as lf, open(
        directory / "boxes.csv", "w", newline=""
    ) as bf:
        labels = csv.writer(lf)
        boxes = csv.writer(bf)
        labels.writerow(["id", "class"])
        boxes.writerow(["id", "x0", "y0", "x1", "y1"])
        for i, sample in enumerate(samples):
            write_ppm(directory / f"img_{i}.ppm", sample.image)
            labels.writerow([i, sample.label])
            boxes.writerow([i, *sample.gt_box.as_tuple()])


def load_dataset(directory):
    directory = Path(directory)
    with open(directory / "labels.csv", newline="") as fh:
        label_rows = list(csv.DictReader(fh))
    with open(directory / "boxes.csv", newline="") as fh:
        box_rows = {row["id"]: row for row in csv.DictReader(fh)}
    samples = []
    for row in label_rows:
        sid = row["id"]
        b = box_rows[sid]
        samples.append(
            Sample(
                image=read_ppm(directory / f"img_{sid}.ppm"),
                label=int(row["class"]),
                gt_box=Box(int(b["x0"]), int(b["y0"]), int(b["x1"]), int(b["y1"])),
            )
        )
    return samples
