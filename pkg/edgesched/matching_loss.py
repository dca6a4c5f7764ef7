"""
Bipartite matching loss between a detector's predictions and the ground truth.

The loss has three parts:

- matched pairs pay ``lambda_iou * (1 - IoU) + lambda_l2 * ||(cx, cy, w, h) - (cx', cy', w', h')||``;
- every prediction left without a partner pays ``2**c - 1`` for its confidence ``c``;
- every ground-truth box left without a partner pays its area relative to the
  mean area of all ground-truth boxes.

Pairs come from a minimum-cost one-to-one assignment (Hungarian algorithm) on
the matched-pair cost.
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import linear_sum_assignment

from .errors import InvalidBoxError, NoGroundTruthError
from .geometry import Box, Detection, GroundTruthBox, giou, iou

logger = logging.getLogger(__name__)

# relative tolerance used when comparing assignment costs for tie-breaking
_COST_RTOL = 1e-9


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_iou: float = Field(default=2.0, ge=0.0)
    lambda_l2: float = Field(default=5.0, ge=0.0)

    @model_validator(mode="after")
    def _not_both_zero(self):
        if self.lambda_iou == 0.0 and self.lambda_l2 == 0.0:
            raise ValueError("lambda_iou and lambda_l2 cannot both be 0")
        return self

    def scaled(self, k: float) -> "LossWeights":
        return LossWeights(lambda_iou=self.lambda_iou * k, lambda_l2=self.lambda_l2 * k)


class LossBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    box_term: float = Field(ge=0.0)
    conf_term: float = Field(ge=0.0)
    area_term: float = Field(ge=0.0)
    total: float = Field(ge=0.0)
    assignment: List[Tuple[int, int]] = Field(default_factory=list)

    @classmethod
    def zero(cls) -> "LossBreakdown":
        return cls(box_term=0.0, conf_term=0.0, area_term=0.0, total=0.0, assignment=[])


def _min_cost(cost: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> float:
    if not rows or not cols:
        return 0.0
    sub = cost[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub)
    return float(sub[r, c].sum())


def _same_cost(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_COST_RTOL, abs_tol=_COST_RTOL)


def hungarian(cost) -> List[Tuple[int, int]]:
    """
    Minimum-cost one-to-one assignment of min(n_rows, n_cols) pairs.

    Among all optimal assignments the one whose row-sorted (row, col) sequence
    is lexicographically smallest is returned, so the result does not depend on
    the solver's internal pivoting order.

    Args:
        cost: finite 2-D array-like, rectangular allowed.

    Returns:
        List of (row, col) pairs sorted by row.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix must be finite")

    n_rows, n_cols = c.shape
    k = min(n_rows, n_cols)
    best = _min_cost(c, list(range(n_rows)), list(range(n_cols)))

    pairs: List[Tuple[int, int]] = []
    spent = 0.0
    free_cols = list(range(n_cols))
    for r in range(n_rows):
        need = k - len(pairs)
        if need == 0:
            break
        rest_rows = list(range(r + 1, n_rows))
        for col in free_cols:
            rest_cols = [x for x in free_cols if x != col]
            if min(len(rest_rows), len(rest_cols)) != need - 1:
                continue
            if _same_cost(spent + c[r, col] + _min_cost(c, rest_rows, rest_cols), best):
                pairs.append((r, col))
                spent += float(c[r, col])
                free_cols = rest_cols
                break
        # no column fits: row r stays unassigned (only possible when n_rows > n_cols)
    return pairs


def assignment_cost(cost, pairs: Sequence[Tuple[int, int]]) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[r, col] for r, col in pairs))


def loss_box(b: Box, bhat: Box, w: LossWeights, use_giou: bool = False) -> float:
    overlap = giou(b, bhat) if use_giou else iou(b, bhat)
    displacement = float(np.linalg.norm(b.as_vector() - bhat.as_vector()))
    return w.lambda_iou * (1.0 - overlap) + w.lambda_l2 * displacement


def loss_conf(c: float) -> float:
    """Confidence penalty 2**c - 1 of an unmatched prediction."""
    if not 0.0 <= c <= 1.0:
        raise InvalidBoxError(f"confidence {c} outside [0,1]")
    return 2.0**c - 1.0


def loss_area(unmatched_gt: Box, all_gts: Sequence[Box]) -> float:
    """Area of an unmatched ground-truth box over the mean ground-truth area."""
    if not all_gts:
        raise NoGroundTruthError()
    mean_area = sum(b.area() for b in all_gts) / len(all_gts)
    if mean_area <= 0.0:
        raise InvalidBoxError("mean ground-truth area is 0")
    return unmatched_gt.area() / mean_area


def total_loss(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    w: LossWeights = LossWeights(),
    class_aware: bool = False,
    use_giou: bool = False,
) -> LossBreakdown:
    """
    Match predictions to ground truth and sum the three loss terms.

    With class_aware set, pairs of different classes are never kept: they get a
    cost larger than any admissible matching, so the solver first maximizes the
    number of same-class pairs and any forced cross-class pair is dropped back
    into the unmatched sets.
    """
    if not preds and not gts:
        return LossBreakdown.zero()

    cost = np.zeros((len(preds), len(gts)), dtype=np.float64)
    allowed = np.ones_like(cost, dtype=bool)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            cost[i, j] = loss_box(g.box, p.box, w, use_giou=use_giou)
            if class_aware and p.class_id != g.class_id:
                allowed[i, j] = False

    if not allowed.all():
        penalty = 1.0 + float(cost[allowed].sum()) * 2.0
        cost = np.where(allowed, cost, penalty)

    assignment = [(i, j) for i, j in hungarian(cost) if allowed[i, j]]
    matched_preds = {i for i, _ in assignment}
    matched_gts = {j for _, j in assignment}

    box_term = float(sum(cost[i, j] for i, j in assignment))
    conf_term = float(sum(loss_conf(p.score) for i, p in enumerate(preds) if i not in matched_preds))
    gt_boxes = [g.box for g in gts]
    area_term = float(
        sum(loss_area(g.box, gt_boxes) for j, g in enumerate(gts) if j not in matched_gts)
    )
    return LossBreakdown(
        box_term=box_term,
        conf_term=conf_term,
        area_term=area_term,
        total=box_term + conf_term + area_term,
        assignment=assignment,
    )
