import json
from itertools import permutations

import numpy as np
import pytest

from edgesched.errors import InvalidBoxError, NoGroundTruthError
from edgesched.geometry import (
    Box,
    boxes_to_record,
    giou,
    greedy_match,
    iou,
    iou_matrix,
    load_detections,
    load_ground_truth,
    make_box,
    mean_iou,
)


def best_mean_iou(preds, gts):
    """Mean IoU of the best one-to-one assignment, by enumeration."""
    if not preds:
        return 0.0
    ious = iou_matrix([g.box for g in gts], [p.box for p in preds])
    n_gt, n_pred = ious.shape
    if n_gt <= n_pred:
        best = max(sum(ious[g, p] for g, p in enumerate(perm)) for perm in permutations(range(n_pred), n_gt))
    else:
        best = max(sum(ious[g, p] for p, g in enumerate(perm)) for perm in permutations(range(n_gt), n_pred))
    return best / n_gt


class TestBox:
    def test_corners(self):
        box = make_box(0.5, 0.5, 0.2, 0.4)
        assert box.corners() == pytest.approx((0.4, 0.3, 0.6, 0.7))
        assert box.area() == pytest.approx(0.08)

    def test_corners_are_clipped(self):
        box = make_box(0.05, 0.95, 0.2, 0.2)
        x1, y1, x2, y2 = box.corners()
        assert x1 == 0.0
        assert y2 == 1.0
        assert x2 == pytest.approx(0.15)

    def test_from_corners(self):
        box = Box.from_corners(0.1, 0.2, 0.3, 0.6)
        assert (box.cx, box.cy, box.w, box.h) == pytest.approx((0.2, 0.4, 0.2, 0.4))

    @pytest.mark.parametrize(
        "cx, cy, w, h",
        [(0.5, 0.5, 0.0, 0.1), (1.2, 0.5, 0.1, 0.1), (0.5, -0.1, 0.1, 0.1), (0.5, 0.5, 0.1, 1.5)],
    )
    def test_invalid_boxes(self, cx, cy, w, h):
        with pytest.raises(InvalidBoxError):
            make_box(cx, cy, w, h)


class TestIou:
    def test_identical(self):
        box = make_box(0.3, 0.4, 0.2, 0.1)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        # (0,0,2,2) and (3,3,4,4) on a 4x4 canvas
        a = Box.from_corners(0.0, 0.0, 0.5, 0.5)
        b = Box.from_corners(0.75, 0.75, 1.0, 1.0)
        assert iou(a, b) == 0.0

    def test_third(self):
        a = Box.from_corners(0.0, 0.0, 0.2, 0.2)
        b = Box.from_corners(0.1, 0.0, 0.3, 0.2)
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_symmetric_and_bounded(self):
        a = make_box(0.4, 0.4, 0.3, 0.2)
        b = make_box(0.5, 0.45, 0.2, 0.3)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0

    def test_matrix(self):
        a = make_box(0.5, 0.5, 0.2, 0.2)
        b = make_box(0.1, 0.1, 0.1, 0.1)
        m = iou_matrix([a, b], [a])
        assert m.shape == (2, 1)
        assert m[0, 0] == 1.0
        assert m[1, 0] == 0.0


class TestGiou:
    def test_equals_iou_when_union_fills_enclosing_box(self):
        a = Box.from_corners(0.0, 0.0, 0.2, 0.2)
        b = Box.from_corners(0.1, 0.0, 0.3, 0.2)
        assert giou(a, b) == pytest.approx(1.0 / 3.0)

    def test_negative_for_disjoint(self):
        a = Box.from_corners(0.0, 0.0, 0.1, 0.1)
        b = Box.from_corners(0.2, 0.0, 0.3, 0.1)
        assert giou(a, b) == pytest.approx(-1.0 / 3.0)


class TestMeanIou:
    def test_exact_predictions(self, det, gt):
        gts = [gt(0.3, 0.3, 0.2, 0.2), gt(0.7, 0.7, 0.2, 0.2)]
        preds = [det(0.7, 0.7, 0.2, 0.2), det(0.3, 0.3, 0.2, 0.2)]
        assert mean_iou(preds, gts) == pytest.approx(1.0)

    def test_no_predictions(self, gt):
        assert mean_iou([], [gt(0.5, 0.5, 0.2, 0.2)]) == 0.0

    def test_one_of_two_matched(self, det, gt):
        gts = [gt(0.1, 0.1, 0.2, 0.2), gt(0.8, 0.8, 0.1, 0.1)]
        preds = [det(0.2, 0.1, 0.2, 0.2)]
        assert mean_iou(preds, gts) == pytest.approx(1.0 / 6.0)

    def test_empty_ground_truth(self, det):
        with pytest.raises(NoGroundTruthError, match="no ground truth"):
            mean_iou([det(0.5, 0.5, 0.1, 0.1)], [])

    def test_greedy_ties_prefer_lower_indices(self, det, gt):
        gts = [gt(0.5, 0.5, 0.2, 0.2)]
        preds = [det(0.5, 0.5, 0.2, 0.2), det(0.5, 0.5, 0.2, 0.2)]
        assert greedy_match(preds, gts) == [(0, 0, 1.0)]

    def test_class_aware(self, det, gt):
        gts = [gt(0.5, 0.5, 0.2, 0.2, class_id=1)]
        preds = [det(0.5, 0.5, 0.2, 0.2, class_id=2)]
        assert mean_iou(preds, gts) == 1.0
        assert mean_iou(preds, gts, class_aware=True) == 0.0

    def test_greedy_never_beats_best_assignment(self, det, gt):
        rng = np.random.default_rng(0)
        for _ in range(300):
            gts = [gt(*rng.uniform(0.3, 0.7, 2), *rng.uniform(0.1, 0.4, 2)) for _ in range(int(rng.integers(1, 5)))]
            preds = [det(*rng.uniform(0.3, 0.7, 2), *rng.uniform(0.1, 0.4, 2)) for _ in range(int(rng.integers(0, 5)))]
            assert mean_iou(preds, gts) <= best_mean_iou(preds, gts) + 1e-12

    def test_greedy_is_optimal_with_dominant_diagonal(self, det, gt):
        centers = [0.2, 0.5, 0.8]
        gts = [gt(c, c, 0.15, 0.15) for c in centers]
        preds = [det(c + 0.01, c, 0.15, 0.15) for c in reversed(centers)]
        assert mean_iou(preds, gts) == pytest.approx(best_mean_iou(preds, gts))
        assert mean_iou(preds, gts) == pytest.approx(0.14 / 0.16)


class TestBoxFiles:
    def test_load(self, tmp_path, det):
        path = tmp_path / "dets.jsonl"
        lines = [
            boxes_to_record("a", [det(0.5, 0.5, 0.2, 0.2, score=0.7)]),
            {"image_id": "b", "boxes": []},
        ]
        path.write_text("\n".join(json.dumps(line) for line in lines) + "\n")
        loaded = load_detections(path)
        assert list(loaded) == ["a", "b"]
        assert loaded["a"][0].score == 0.7
        assert loaded["b"] == []

    def test_duplicate_image_id(self, tmp_path):
        path = tmp_path / "gt.jsonl"
        line = json.dumps({"image_id": "a", "boxes": []})
        path.write_text(f"{line}\n{line}\n")
        with pytest.raises(InvalidBoxError, match="duplicate"):
            load_ground_truth(path)

    def test_score_out_of_range(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        box = {"cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1, "class_id": 0, "score": 1.5}
        path.write_text(json.dumps({"image_id": "a", "boxes": [box]}) + "\n")
        with pytest.raises(InvalidBoxError):
            load_detections(path)
