"""Training labels for the pre-classifier and the train/test split."""

import logging
import math
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import EdgeSchedError, LabelingError
from ..features import FeatureVector, NormStats, fit_normalizer, normalize_matrix
from ..geometry import Detection, GroundTruthBox, mean_iou
from ..matching_loss import LossWeights, total_loss
from ..profiles import Cluster, ProfileTable, transmission_cost
from ..scoring import Candidate, ScoreWeights, score_candidates

logger = logging.getLogger(__name__)

LabelStrategy = Literal["iou", "score"]
LABEL_STRATEGIES = ("iou", "score")


class LabeledSet:
    """Normalized feature matrix, integer labels and a fixed train/test split."""

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        train: np.ndarray,
        test: np.ndarray,
        norm_stats: NormStats,
        labels: Sequence[str],
        image_ids: Sequence[str],
    ):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.train = np.asarray(train, dtype=np.int64)
        self.test = np.asarray(test, dtype=np.int64)
        self.norm_stats = norm_stats
        self.labels = list(labels)
        self.image_ids = list(image_ids)

        if self.X.shape[0] != len(self.y) or len(self.y) != len(self.image_ids):
            raise LabelingError("features, labels and image ids differ in length")
        if set(self.train.tolist()) & set(self.test.tolist()):
            raise LabelingError("train and test splits overlap")
        if len(self.train) + len(self.test) != len(self.y):
            raise LabelingError("train and test splits do not cover the set")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.labels)):
            raise LabelingError("label index outside the model list")

    def __len__(self):
        return len(self.y)

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.y, minlength=len(self.labels))
        return {name: int(n) for name, n in zip(self.labels, counts)}


def split(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Uniform random train/test split of range(n).

    The test side gets ceil(n * test_fraction) rows. Both sides must end up
    non-empty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise LabelingError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = math.ceil(n * test_fraction - 1e-9)
    if n < 2 or n_test == 0 or n_test == n:
        raise LabelingError(
            f"cannot split {n} rows with test fraction {test_fraction}: one side would be empty"
        )
    order = np.random.default_rng(seed).permutation(n)
    return order[n_test:], order[:n_test]


def _detections_for(detections, model: str, task: str) -> List[Detection]:
    try:
        return detections[model][task]
    except KeyError:
        raise LabelingError(f"no detections of model '{model}' for task '{task}'")


def _task_candidates(
    task: str,
    models: Sequence[str],
    detections: Mapping[str, Mapping[str, Sequence[Detection]]],
    gts: Sequence[GroundTruthBox],
    table: ProfileTable,
    pair_list: Optional[Mapping[str, str]],
    cluster: Optional[Cluster],
    size_bytes: Optional[int],
    loss_weights: LossWeights,
    class_aware: bool,
) -> List[Tuple[int, Candidate]]:
    out = []
    for index, model in enumerate(models):
        loss = total_loss(_detections_for(detections, model, task), gts, loss_weights, class_aware).total
        if pair_list is not None and model not in pair_list:
            raise LabelingError(f"model '{model}' is missing from the pair-list")
        platforms = [pair_list[model]] if pair_list is not None else table.platforms_for(model)
        for platform in platforms:
            m = table.query(model, platform)
            tx_time, tx_energy = 0.0, 0.0
            if cluster is not None and size_bytes is not None:
                tx_time, tx_energy = transmission_cost(size_bytes, cluster.get(platform).link)
            out.append(
                (
                    index,
                    Candidate(
                        model=model,
                        platform=platform,
                        total_time_s=tx_time + m.infer_time_s,
                        total_energy_j=tx_energy + m.infer_energy_j,
                        loss=loss,
                        transmit_time_s=tx_time,
                        transmit_energy_j=tx_energy,
                    ),
                )
            )
    return out


def label_tasks(
    task_ids: Sequence[str],
    detections: Mapping[str, Mapping[str, Sequence[Detection]]],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    models: Sequence[str],
    strategy: LabelStrategy = "score",
    table: Optional[ProfileTable] = None,
    w: Optional[ScoreWeights] = None,
    pair_list: Optional[Mapping[str, str]] = None,
    cluster: Optional[Cluster] = None,
    task_sizes: Optional[Mapping[str, int]] = None,
    loss_weights: LossWeights = LossWeights(),
    class_aware: bool = False,
) -> List[int]:
    """
    Label every task with the index (into `models`) of its best model.

    Strategy "iou" takes the model with the highest mean IoU against the
    ground truth. Strategy "score" builds one candidate per (model, platform)
    from the pair-list (or every measured platform without one), with the
    matching loss as loss, and takes the model of the highest-scoring
    candidate. Ties go to the earlier model in `models`.
    """
    if strategy not in LABEL_STRATEGIES:
        raise LabelingError(f"unknown label strategy '{strategy}'")
    if not models:
        raise LabelingError("no models to label with")
    if strategy == "score" and (table is None or w is None):
        raise LabelingError("the score strategy needs a profile table and weights")

    labels = []
    for task in task_ids:
        try:
            truth = gts[task]
        except KeyError:
            raise LabelingError(f"no ground truth for task '{task}'")

        if strategy == "iou":
            try:
                quality = [mean_iou(_detections_for(detections, m, task), truth, class_aware) for m in models]
            except EdgeSchedError as e:
                if isinstance(e, LabelingError):
                    raise
                raise LabelingError(f"task '{task}': {e}") from e
            labels.append(int(np.argmax(quality)))
            continue

        size = task_sizes.get(task) if task_sizes is not None else None
        indexed = _task_candidates(
            task, models, detections, truth, table, pair_list, cluster, size, loss_weights, class_aware
        )
        scored = score_candidates([c for _, c in indexed], w)
        best = min(range(len(indexed)), key=lambda k: (-scored[k][1], indexed[k][0], k))
        labels.append(indexed[best][0])
    return labels


def build_labeled_set(
    task_ids: Sequence[str],
    features: Mapping[str, FeatureVector],
    labels: Sequence[int],
    models: Sequence[str],
    test_fraction: float = 0.2,
    seed: int = 0,
) -> LabeledSet:
    """Split, fit the normalizer on the train rows only and normalize every row with it."""
    missing = [t for t in task_ids if t not in features]
    if missing:
        raise LabelingError(f"no features for tasks {missing[:5]}")
    rows = [features[t] for t in task_ids]
    y = np.asarray(labels, dtype=np.int64)

    train, test = split(len(rows), test_fraction, seed)
    absent = sorted(set(range(len(models))) - set(y[train].tolist()))
    if absent:
        raise LabelingError(
            f"classes {[models[k] for k in absent]} missing from the train split",
            payload={"classes": [models[k] for k in absent]},
        )
    stats = fit_normalizer([rows[i] for i in train])
    X = normalize_matrix(np.vstack([r.values for r in rows]), stats)
    data = LabeledSet(X, y, train, test, stats, models, task_ids)
    logger.info(f"Labeled {len(data)} tasks ({len(train)} train / {len(test)} test): {data.class_counts()}")
    return data


def gen_labels(
    task_ids: Sequence[str],
    features: Mapping[str, FeatureVector],
    detections: Mapping[str, Mapping[str, Sequence[Detection]]],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    models: Sequence[str],
    strategy: LabelStrategy = "score",
    table: Optional[ProfileTable] = None,
    w: Optional[ScoreWeights] = None,
    pair_list: Optional[Mapping[str, str]] = None,
    cluster: Optional[Cluster] = None,
    task_sizes: Optional[Mapping[str, int]] = None,
    loss_weights: LossWeights = LossWeights(),
    class_aware: bool = False,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> LabeledSet:
    labels = label_tasks(
        task_ids,
        detections,
        gts,
        models,
        strategy=strategy,
        table=table,
        w=w,
        pair_list=pair_list,
        cluster=cluster,
        task_sizes=task_sizes,
        loss_weights=loss_weights,
        class_aware=class_aware,
    )
    return build_labeled_set(task_ids, features, labels, models, test_fraction, seed)
