"""
Weighted score fusion, constraint filtering and model deployment.

Each cost (total time, total energy, loss) is min-max normalized over the
candidate set and turned into a higher-is-better term:

    score = alpha * (1 - T_norm) + beta * (1 - E_norm) + gamma * (1 - Loss_norm)

A cost that is equal for every candidate normalizes to 0 and so does not
influence the choice.
"""

import logging
import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InfeasibleError, NoProfileError, ScoringError
from .profiles import ProfileTable
from .utils.json_utils import read_json, write_json

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-9

Fallback = Literal["error", "best-effort"]


class ScoreWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(ge=0.0)
    beta: float = Field(ge=0.0)
    gamma: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _sum_to_one(self):
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"alpha + beta + gamma must equal 1, got {total}")
        return self

    @classmethod
    def of(cls, alpha: float, beta: float, gamma: float) -> "ScoreWeights":
        try:
            return cls(alpha=alpha, beta=beta, gamma=gamma)
        except ValidationError as e:
            raise ScoringError(f"invalid weights ({alpha}, {beta}, {gamma}): {e.errors()[0]['msg']}") from e

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


class Constraints(BaseModel):
    """Upper bounds on time, energy and loss; a candidate must be strictly below each."""

    model_config = ConfigDict(frozen=True)

    t_max_s: float = Field(default=math.inf, ge=0.0)
    e_max_j: float = Field(default=math.inf, ge=0.0)
    loss_max: float = Field(default=math.inf, ge=0.0)


class Candidate(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    platform: str
    total_time_s: float = Field(ge=0.0)
    total_energy_j: float = Field(ge=0.0)
    loss: float = Field(ge=0.0)
    transmit_time_s: float = Field(default=0.0, ge=0.0)
    transmit_energy_j: float = Field(default=0.0, ge=0.0)


class Decision(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    platform: str
    score: float = Field(ge=0.0, le=1.0)
    total_time_s: float
    total_energy_j: float
    loss: float
    feasible: bool = True
    candidate: Optional[Candidate] = None


def _min_max(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_costs(cands: Sequence[Candidate]) -> np.ndarray:
    """
    Min-max normalized (time, energy, loss) columns over the whole candidate set.

    This is the single place that decides the normalization scope.
    """
    costs = np.array([[c.total_time_s, c.total_energy_j, c.loss] for c in cands], dtype=np.float64)
    return np.column_stack([_min_max(costs[:, k]) for k in range(3)])


def score_candidates(cands: Sequence[Candidate], w: ScoreWeights) -> List[Tuple[Candidate, float]]:
    if not cands:
        raise ScoringError("cannot score an empty candidate list")
    norm = normalize_costs(cands)
    terms = np.column_stack(
        [w.alpha * (1.0 - norm[:, 0]), w.beta * (1.0 - norm[:, 1]), w.gamma * (1.0 - norm[:, 2])]
    )
    scores = np.clip(terms.sum(axis=1), 0.0, 1.0)
    return [(c, float(s)) for c, s in zip(cands, scores)]


def filter_feasible(cands: Sequence[Candidate], c: Constraints) -> List[Candidate]:
    return [
        cand
        for cand in cands
        if cand.total_time_s < c.t_max_s and cand.total_energy_j < c.e_max_j and cand.loss < c.loss_max
    ]


def _rank_key(item):
    index, (cand, score) = item
    return (-score, cand.total_time_s, cand.total_energy_j, cand.model, index)


def best_of(scored: Sequence[Tuple[Candidate, float]]) -> Tuple[Candidate, float]:
    """Highest score; ties go to lower time, then lower energy, then model name, then list order."""
    return min(enumerate(scored), key=_rank_key)[1]


def select(
    cands: Sequence[Candidate],
    w: ScoreWeights,
    c: Constraints = Constraints(),
    fallback: Fallback = "error",
) -> Decision:
    """
    Pick the best feasible candidate.

    When nothing is feasible, fallback "error" raises InfeasibleError and
    "best-effort" scores the unfiltered list and returns a decision flagged
    infeasible.
    """
    if not cands:
        raise ScoringError("cannot select from an empty candidate list")
    feasible = filter_feasible(cands, c)
    is_feasible = bool(feasible)
    if not feasible:
        if fallback == "error":
            raise InfeasibleError(
                f"none of {len(cands)} candidates satisfies {c.model_dump()}",
                payload={"constraints": c.model_dump(mode="json")},
            )
        if fallback != "best-effort":
            raise ScoringError(f"unknown fallback policy '{fallback}'")
        logger.debug(f"No feasible candidate among {len(cands)}, scoring the unfiltered set")
        feasible = list(cands)

    best, score = best_of(score_candidates(feasible, w))
    return Decision(
        model=best.model,
        platform=best.platform,
        score=score,
        total_time_s=best.total_time_s,
        total_energy_j=best.total_energy_j,
        loss=best.loss,
        feasible=is_feasible,
        candidate=best,
    )


def deploy(
    models: Sequence[str],
    platforms: Sequence[str],
    table: ProfileTable,
    w: ScoreWeights,
) -> Dict[str, str]:
    """
    Choose a hosting platform for every model independently.

    Each model's candidates are its measured platforms among `platforms`, with
    inference-only costs and the model's (100 - mAP)/100 loss surrogate, which
    is constant across platforms and therefore neutral.

    Returns:
        The pair-list, {model: platform}, in the order of `models`.
    """
    pair_list: Dict[str, str] = {}
    allowed = set(platforms)
    for model in models:
        loss = table.model_info(model).map_loss() if model in table.models else 0.0
        cands = []
        for platform in table.platforms_for(model):
            if platform not in allowed:
                continue
            m = table.query(model, platform)
            cands.append(
                Candidate(
                    model=model,
                    platform=platform,
                    total_time_s=m.infer_time_s,
                    total_energy_j=m.infer_energy_j,
                    loss=loss,
                )
            )
        if not cands:
            raise NoProfileError(
                f"no profile: model '{model}' has no measurements on {sorted(allowed)}",
                payload={"model": model},
            )
        decision = select(cands, w, fallback="best-effort")
        pair_list[model] = decision.platform
        logger.debug(f"Deploying {model} on {decision.platform} (score {decision.score:.4f})")
    return pair_list


def write_pair_list(path, pair_list: Dict[str, str]):
    return write_json(path, dict(pair_list))


def read_pair_list(path) -> Dict[str, str]:
    data = read_json(path)
    if not isinstance(data, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise ScoringError(f"{path}: a pair-list maps model names to platform names")
    return data
