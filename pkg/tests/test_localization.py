"""Fusion, upsampling, box extraction, IoU, and metric aggregation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lctr.errors import ConfigurationError, DimensionError
from lctr.localization import (
    Box,
    GroundTruth,
    MetricsReport,
    Prediction,
    bilinear_resize,
    build_localization_maps,
    evaluate,
    extract_box,
    extract_m_cdm,
    fuse_and_upsample,
    has_foreground,
    iou,
    minmax_normalize,
    predicted_class,
    write_boxes_csv,
    write_metrics_json,
    write_metrics_txt,
    write_pgm,
)


def floodfill_box_oracle(heatmap, ratio):
    """Exhaustive recursive flood fill; independent of the BFS labeling."""
    heatmap = np.asarray(heatmap, dtype=float)
    h, w = heatmap.shape
    peak = heatmap.max()
    if peak <= 0:
        return Box(0, 0, w, h)
    mask = heatmap >= ratio * peak
    seen = np.zeros_like(mask)
    best = None
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            stack = [(sy, sx)]
            seen[sy, sx] = True
            cells = []
            while stack:
                y, x = stack.pop()
                cells.append((y, x))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            if best is None or len(cells) > len(best):
                best = cells
    ys = [c[0] for c in best]
    xs = [c[1] for c in best]
    return Box(min(xs), min(ys), max(xs) + 1, max(ys) + 1)


class TestExtractChannel:
    def test_one_hot_channel(self):
        maps = np.zeros((3, 2, 2))
        maps[1] = 7.0
        assert_allclose(extract_m_cdm(maps, 1), np.full((2, 2), 7.0))

    def test_predicted_class_matches_argmax(self):
        probs = np.array([0.2, 0.5, 0.3])
        assert predicted_class(probs) == 1
        assert predicted_class(np.array([0.4, 0.4, 0.2])) == 0  # tie -> lowest index

    def test_channel_follows_favored_class(self):
        maps = np.stack([np.zeros((2, 2)), np.ones((2, 2))])
        probs = np.array([0.1, 0.9])
        assert_allclose(extract_m_cdm(maps, predicted_class(probs)), np.ones((2, 2)))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            extract_m_cdm(np.zeros((2, 2, 2)), 2)


class TestFuseAndUpsample:
    def test_ones_relation_map_is_identity_fusion(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(3, 3))
        maps = build_localization_maps(m, np.ones((3, 3)), 6, 6)
        assert_allclose(maps.m_fuse, m)
        assert_allclose(maps.upsampled, minmax_normalize(bilinear_resize(m, 6, 6)))

    def test_constant_map_normalizes_to_zero(self):
        out = fuse_and_upsample(np.full((2, 2), 3.0), np.ones((2, 2)), 4, 4)
        assert_allclose(out, np.zeros((4, 4)))

    def test_hand_interpolation_table(self):
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        src = np.array([[a, b], [c, d]])
        # Half-pixel centers map output rows to source fractions
        # (clamped, 0.25, 0.75, clamped); same for columns.
        expected = np.array(
            [
                [a, 0.75 * a + 0.25 * b, 0.25 * a + 0.75 * b, b],
                [
                    0.75 * a + 0.25 * c,
                    (9 * a + 3 * b + 3 * c + d) / 16,
                    (3 * a + 9 * b + c + 3 * d) / 16,
                    0.75 * b + 0.25 * d,
                ],
                [
                    0.25 * a + 0.75 * c,
                    (3 * a + b + 9 * c + 3 * d) / 16,
                    (a + 3 * b + 3 * c + 9 * d) / 16,
                    0.25 * b + 0.75 * d,
                ],
                [c, 0.75 * c + 0.25 * d, 0.25 * c + 0.75 * d, d],
            ]
        )
        assert_allclose(bilinear_resize(src, 4, 4), expected, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            fuse_and_upsample(np.zeros((2, 2)), np.zeros((3, 3)), 4, 4)

    def test_fusion_commutative_with_zero_union(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 4))
        y = rng.normal(size=(4, 4))
        x[0, 0] = 0.0
        y[2, 3] = 0.0
        assert_allclose(x * y, y * x)
        zeros = (x * y) == 0
        assert zeros[0, 0] and zeros[2, 3]


class TestExtractBox:
    def test_isolated_square(self):
        h = np.zeros((8, 8))
        h[2:4, 5:7] = 1.0
        assert extract_box(h, 0.35) == Box(5, 2, 7, 4)

    def test_largest_component_wins(self):
        h = np.zeros((8, 8))
        h[0, 0:5] = 1.0  # area 5
        h[6, 0:3] = 1.0  # area 3
        assert extract_box(h, 0.5) == Box(0, 0, 5, 1)

    def test_empty_heatmap_flags_full_image(self):
        h = np.zeros((6, 9))
        assert not has_foreground(h)
        assert extract_box(h, 0.35) == Box(0, 0, 9, 6)

    def test_matches_floodfill_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            h = minmax_normalize(rng.uniform(size=(8, 8)))
            ratio = float(rng.uniform(0.2, 0.8))
            assert extract_box(h, ratio) == floodfill_box_oracle(h, ratio)

    def test_affine_invariance_through_normalization(self):
        rng = np.random.default_rng(3)
        h = rng.uniform(size=(10, 10))
        alpha, beta = 3.7, -1.2
        base = extract_box(minmax_normalize(h), 0.4)
        scaled = extract_box(minmax_normalize(alpha * h + beta), 0.4)
        assert base == scaled

    def test_bad_ratio(self):
        with pytest.raises(ConfigurationError):
            extract_box(np.ones((4, 4)), 1.5)


class TestIoU:
    def test_identical(self):
        b = Box(1, 2, 5, 6)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 2, 2), Box(5, 5, 7, 7)) == 0.0

    def test_offset_unit_squares(self):
        assert iou(Box(0, 0, 2, 2), Box(1, 1, 3, 3)) == pytest.approx(1.0 / 7.0)


def _pred(probs, box, flagged=False):
    return Prediction(probs=np.asarray(probs, float), loc_box=box, flagged=flagged)


class TestEvaluate:
    def test_all_perfect(self):
        box = Box(0, 0, 4, 4)
        preds = [_pred([0.9, 0.1], box)] * 3
        gts = [GroundTruth(0, box)] * 3
        report = evaluate(preds, gts)
        assert report.top1_cls == report.top5_cls == 1.0
        assert report.top1_loc == report.top5_loc == report.gt_known == 1.0
        assert report.n_samples == 3

    def test_low_iou_counts_classification_only(self):
        gt_box = Box(0, 0, 10, 10)
        pred_box = Box(0, 0, 10, 4)  # IoU 0.4
        assert iou(pred_box, gt_box) == pytest.approx(0.4)
        report = evaluate([_pred([0.8, 0.2], pred_box)], [GroundTruth(0, gt_box)])
        assert report.top1_cls == 1.0
        assert report.gt_known == 0.0
        assert report.top1_loc == 0.0

    def test_manual_tally(self):
        good = Box(0, 0, 8, 8)
        bad = Box(0, 0, 8, 3)  # IoU 0.375 vs good
        gts = [GroundTruth(i % 3, good) for i in range(10)]
        preds = []
        for i, gt in enumerate(gts):
            probs = np.full(3, 0.1)
            if i < 6:
                probs[gt.label] = 0.8  # top-1 correct
            else:
                probs[(gt.label + 1) % 3] = 0.8  # top-1 wrong, label still in top-5
            preds.append(_pred(probs, good if i % 2 == 0 else bad))
        report = evaluate(preds, gts)
        # Hand tally: top1 for i<6 (6), top5 all (C=3 <= 5) (10),
        # gt-known for even i (5), top1&known i in {0,2,4} (3), top5&known (5).
        assert report.top1_cls == 0.6
        assert report.top5_cls == 1.0
        assert report.gt_known == 0.5
        assert report.top1_loc == 0.3
        assert report.top5_loc == 0.5

    def test_report_invariants(self):
        rng = np.random.default_rng(4)
        preds, gts = [], []
        for i in range(40):
            probs = rng.dirichlet(np.ones(5))
            x0, y0 = rng.integers(0, 5, size=2)
            w, h = rng.integers(2, 6, size=2)
            preds.append(_pred(probs, Box(int(x0), int(y0), int(x0 + w), int(y0 + h))))
            gx0, gy0 = rng.integers(0, 5, size=2)
            gw, gh = rng.integers(2, 6, size=2)
            gts.append(GroundTruth(int(rng.integers(0, 5)),
                                   Box(int(gx0), int(gy0), int(gx0 + gw), int(gy0 + gh))))
        r = evaluate(preds, gts)
        assert r.top1_loc <= min(r.top1_cls, r.gt_known)
        assert r.top1_loc <= r.top5_loc
        assert r.top1_cls <= r.top5_cls

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([_pred([1.0, 0.0], Box(0, 0, 1, 1))], [])


class TestWriters:
    def test_pgm_format(self, tmp_path):
        path = tmp_path / "heat.pgm"
        write_pgm(path, np.array([[0.0, 0.5], [1.0, 0.25]]))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        assert raw[-4:] == bytes([0, 128, 255, 64])

    def test_boxes_csv(self, tmp_path):
        path = tmp_path / "boxes.csv"
        write_boxes_csv(path, [(0, Box(1, 2, 3, 4), 0.5)])
        lines = path.read_text().splitlines()
        assert lines[0] == "image_id,x0,y0,x1,y1,score"
        assert lines[1] == "0,1,2,3,4,0.5"

    def test_metrics_outputs(self, tmp_path):
        report = MetricsReport(0.5, 1.0, 0.25, 0.5, 0.5, 4)
        write_metrics_txt(tmp_path / "metrics.txt", report, extras={"n_flagged": 0})
        write_metrics_json(tmp_path / "metrics.json", report)
        text = (tmp_path / "metrics.txt").read_text()
        assert "top1_cls = 0.5" in text
        assert "n_flagged = 0" in text
        import json

        blob = json.loads((tmp_path / "metrics.json").read_text())
        assert blob["gt_known"] == 0.5
        assert blob["n_samples"] == 4
