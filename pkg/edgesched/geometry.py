"""Bounding boxes, IoU and the greedy mean-IoU matcher used for label generation."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InvalidBoxError, NoGroundTruthError
from .utils.json_utils import read_jsonl

logger = logging.getLogger(__name__)


class Box(BaseModel):
    """
    Axis-aligned box in normalized center form.

    The corner form is a derived view, clipped to the unit square. Boxes whose
    clipped width or height collapses to zero are rejected on construction.
    """

    model_config = ConfigDict(frozen=True)

    cx: float = Field(ge=0.0, le=1.0)
    cy: float = Field(ge=0.0, le=1.0)
    w: float = Field(gt=0.0, le=1.0)
    h: float = Field(gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _reject_degenerate(self):
        x1, y1, x2, y2 = self.corners()
        if x2 <= x1 or y2 <= y1:
            raise ValueError(f"degenerate box after clipping: {self.corners()}")
        return self

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return make_box((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def corners(self) -> Tuple[float, float, float, float]:
        half_w, half_h = self.w / 2.0, self.h / 2.0
        return (
            min(max(self.cx - half_w, 0.0), 1.0),
            min(max(self.cy - half_h, 0.0), 1.0),
            min(max(self.cx + half_w, 0.0), 1.0),
            min(max(self.cy + half_h, 0.0), 1.0),
        )

    def area(self) -> float:
        """Box area w*h in normalized units."""
        return self.w * self.h

    def as_vector(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: Box
    class_id: int
    score: float = Field(default=1.0, ge=0.0, le=1.0)


class GroundTruthBox(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: Box
    class_id: int = Field(ge=0)


def make_box(cx: float, cy: float, w: float, h: float) -> Box:
    """Build a Box, raising InvalidBoxError instead of a pydantic ValidationError."""
    try:
        return Box(cx=cx, cy=cy, w=w, h=h)
    except ValidationError as e:
        raise InvalidBoxError(
            f"invalid box cx={cx} cy={cy} w={w} h={h}",
            payload={"errors": e.errors(include_url=False, include_context=False)},
        ) from e


def _clipped_area(corners: Tuple[float, float, float, float]) -> float:
    x1, y1, x2, y2 = corners
    return max(x2 - x1, 0.0) * max(y2 - y1, 0.0)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of the clipped corner forms; 0 for disjoint boxes."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = _clipped_area(a.corners()) + _clipped_area(b.corners()) - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def giou(a: Box, b: Box) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the empty share of the enclosing box."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    inter = max(min(ax2, bx2) - max(ax1, bx1), 0.0) * max(min(ay2, by2) - max(ay1, by1), 0.0)
    union = _clipped_area(a.corners()) + _clipped_area(b.corners()) - inter
    enclosing = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    if union <= 0.0 or enclosing <= 0.0:
        return 0.0
    return inter / union - (enclosing - union) / enclosing


def iou_matrix(rows: Sequence[Box], cols: Sequence[Box]) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)), dtype=np.float64)
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = iou(a, b)
    return out


def greedy_match(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    class_aware: bool = False,
) -> List[Tuple[int, int, float]]:
    """
    One-to-one GT/prediction pairs taken greedily in descending IoU order.

    Ties are broken by (gt index, prediction index). Every pair is eligible
    regardless of its IoU; with class_aware set, pairs of different classes
    are never matched.

    Returns:
        List of (gt_index, pred_index, iou) tuples.
    """
    ious = iou_matrix([g.box for g in gts], [p.box for p in preds])
    pairs = []
    for gi, gt in enumerate(gts):
        for pi, pred in enumerate(preds):
            if class_aware and gt.class_id != pred.class_id:
                continue
            pairs.append((-ious[gi, pi], gi, pi))
    pairs.sort()

    used_gt, used_pred, matches = set(), set(), []
    for neg_iou, gi, pi in pairs:
        if gi in used_gt or pi in used_pred:
            continue
        used_gt.add(gi)
        used_pred.add(pi)
        matches.append((gi, pi, -neg_iou))
    return matches


def mean_iou(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    class_aware: bool = False,
) -> float:
    """Mean over ground-truth boxes of the greedily matched IoU; unmatched GTs count 0."""
    if not gts:
        raise NoGroundTruthError()
    matches = greedy_match(preds, gts, class_aware=class_aware)
    return sum(m[2] for m in matches) / len(gts)


def _parse_box_record(record: dict, with_score: bool):
    box = make_box(record["cx"], record["cy"], record["w"], record["h"])
    class_id = int(record.get("class_id", 0))
    if with_score:
        score = float(record.get("score", 1.0))
        if not 0.0 <= score <= 1.0:
            raise InvalidBoxError(f"confidence {score} outside [0,1]")
        return Detection(box=box, class_id=class_id, score=score)
    if class_id < 0:
        raise InvalidBoxError(f"negative class id {class_id}")
    return GroundTruthBox(box=box, class_id=class_id)


def load_boxes(path: Union[str, Path], with_score: bool) -> Dict[str, list]:
    """
    Read a detection or ground-truth JSON-lines file.

    Each line is {"image_id": ..., "boxes": [{"cx", "cy", "w", "h", "class_id", "score"?}]}.
    """
    out: Dict[str, list] = {}
    for record in read_jsonl(path):
        image_id = str(record["image_id"])
        if image_id in out:
            raise InvalidBoxError(f"duplicate image_id '{image_id}' in {path}")
        out[image_id] = [_parse_box_record(b, with_score) for b in record.get("boxes", [])]
    logger.debug(f"Loaded boxes for {len(out)} images from {path}")
    return out


def load_detections(path: Union[str, Path]) -> Dict[str, List[Detection]]:
    return load_boxes(path, with_score=True)


def load_ground_truth(path: Union[str, Path]) -> Dict[str, List[GroundTruthBox]]:
    return load_boxes(path, with_score=False)


def boxes_to_record(image_id: str, boxes: Sequence[Union[Detection, GroundTruthBox]]) -> dict:
    """Inverse of one line of load_boxes."""
    out = []
    for b in boxes:
        item = {"cx": b.box.cx, "cy": b.box.cy, "w": b.box.w, "h": b.box.h, "class_id": b.class_id}
        score: Optional[float] = getattr(b, "score", None)
        if score is not None:
            item["score"] = score
        out.append(item)
    return {"image_id": image_id, "boxes": out}


def load_detections_dir(detections_dir: Union[str, Path]) -> Dict[str, Dict[str, List[Detection]]]:
    """One `<model>.jsonl` detection file per model; returns {model: {image_id: detections}}."""
    detections_dir = Path(detections_dir)
    files = sorted(detections_dir.glob("*.jsonl"))
    if not files:
        raise InvalidBoxError(f"no <model>.jsonl detection files in {detections_dir}")
    return {f.stem: load_detections(f) for f in files}
