import json
from pathlib import Path

import cv2
import numpy as np
import pytest

from edgesched.geometry import Detection, GroundTruthBox, make_box
from edgesched.profiles import load_reference_profiles

GT_BOX = (0.5, 0.5, 0.4, 0.4)


@pytest.fixture
def reference_table():
    return load_reference_profiles()


@pytest.fixture
def det():
    def _det(cx, cy, w, h, score=1.0, class_id=0):
        return Detection(box=make_box(cx, cy, w, h), class_id=class_id, score=score)

    return _det


@pytest.fixture
def gt():
    def _gt(cx, cy, w, h, class_id=0):
        return GroundTruthBox(box=make_box(cx, cy, w, h), class_id=class_id)

    return _gt


def _box_record(cx, cy, w, h, score=None):
    record = {"cx": cx, "cy": cy, "w": w, "h": h, "class_id": 0}
    if score is not None:
        record["score"] = score
    return record


@pytest.fixture
def synthetic_workspace(tmp_path) -> Path:
    """
    20 tasks: task00-09 are flat images where MobileNetV3 matches the ground
    truth exactly, task10-19 are noise images where YOLOv4 does.
    """
    images = tmp_path / "images"
    detections = tmp_path / "detections"
    images.mkdir()
    detections.mkdir()
    rng = np.random.default_rng(7)

    gt_lines, mob_lines, yolo_lines = [], [], []
    for k in range(20):
        image_id = f"task{k:02d}"
        if k < 10:
            raster = np.full((32, 32, 3), 60 + 10 * k, dtype=np.uint8)
            mob_shift, yolo_shift = 0.0, 0.05
        else:
            raster = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
            mob_shift, yolo_shift = 0.1, 0.0
        cv2.imwrite(str(images / f"{image_id}.png"), raster)

        cx, cy, w, h = GT_BOX
        gt_lines.append({"image_id": image_id, "boxes": [_box_record(cx, cy, w, h)]})
        mob_lines.append({"image_id": image_id, "boxes": [_box_record(cx + mob_shift, cy, w, h, 0.9)]})
        yolo_lines.append({"image_id": image_id, "boxes": [_box_record(cx + yolo_shift, cy, w, h, 0.9)]})

    for path, lines in (
        (tmp_path / "gt.jsonl", gt_lines),
        (detections / "MobileNetV3.jsonl", mob_lines),
        (detections / "YOLOv4.jsonl", yolo_lines),
    ):
        path.write_text("".join(json.dumps(line) + "\n" for line in lines), encoding="utf-8")
    return tmp_path
