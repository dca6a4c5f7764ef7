import numpy as np
import pytest

from edgesched.classifier.labels import build_labeled_set, gen_labels, label_tasks, split
from edgesched.errors import LabelingError
from edgesched.features import FeatureVector
from edgesched.scoring import ScoreWeights

MODELS = ["YOLOv4", "MobileNetV3"]
LOCAL_PAIRS = {"YOLOv4": "Raspberry 3B+", "MobileNetV3": "Raspberry 3B+"}


@pytest.fixture
def one_task(det, gt):
    # YOLOv4 is off by 0.004, MobileNetV3 by 0.008
    gts = {"t": [gt(0.5, 0.5, 0.4, 0.4)]}
    detections = {
        "YOLOv4": {"t": [det(0.504, 0.5, 0.4, 0.4, score=0.9)]},
        "MobileNetV3": {"t": [det(0.508, 0.5, 0.4, 0.4, score=0.9)]},
    }
    return gts, detections


class TestSplit:
    def test_sizes(self):
        train, test = split(10, 0.2, seed=0)
        assert (len(train), len(test)) == (8, 2)
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))

    def test_rounds_test_side_up(self):
        train, test = split(9, 0.1, seed=0)
        assert (len(train), len(test)) == (8, 1)

    def test_seeded(self):
        assert np.array_equal(split(50, 0.3, seed=4)[1], split(50, 0.3, seed=4)[1])
        assert not np.array_equal(split(50, 0.3, seed=4)[1], split(50, 0.3, seed=5)[1])

    @pytest.mark.parametrize("n, fraction", [(1, 0.5), (10, 0.0), (10, 1.0), (3, 0.99)])
    def test_empty_side(self, n, fraction):
        with pytest.raises(LabelingError):
            split(n, fraction, seed=0)


class TestLabelTasks:
    def test_iou_strategy(self, one_task):
        gts, detections = one_task
        assert label_tasks(["t"], detections, gts, MODELS, strategy="iou") == [0]

    def test_cheap_model_wins_when_time_dominates(self, one_task, reference_table):
        gts, detections = one_task
        labels = label_tasks(
            ["t"], detections, gts, MODELS, table=reference_table, w=ScoreWeights.of(0.9, 0.0, 0.1), pair_list=LOCAL_PAIRS
        )
        assert labels == [1]

    def test_accurate_model_wins_when_loss_dominates(self, one_task, reference_table):
        gts, detections = one_task
        labels = label_tasks(
            ["t"], detections, gts, MODELS, table=reference_table, w=ScoreWeights.of(0.0, 0.0, 1.0), pair_list=LOCAL_PAIRS
        )
        assert labels == [0]

    def test_every_platform_without_pair_list(self, one_task, reference_table):
        gts, detections = one_task
        labels = label_tasks(["t"], detections, gts, MODELS, table=reference_table, w=ScoreWeights.of(0, 1, 0))
        assert labels == [1]  # MobileNetV3 on Zynq 7020 is the cheapest in energy

    def test_ties_go_to_first_model(self, gt, det):
        gts = {"t": [gt(0.5, 0.5, 0.2, 0.2)]}
        same = {"t": [det(0.5, 0.5, 0.2, 0.2)]}
        assert label_tasks(["t"], {"a": same, "b": same}, gts, ["a", "b"], strategy="iou") == [0]

    def test_missing_detections(self, one_task):
        gts, detections = one_task
        with pytest.raises(LabelingError, match="no detections"):
            label_tasks(["t"], {"YOLOv4": detections["YOLOv4"]}, gts, MODELS, strategy="iou")

    def test_model_missing_from_pair_list(self, one_task, reference_table):
        gts, detections = one_task
        with pytest.raises(LabelingError, match="pair-list"):
            label_tasks(
                ["t"], detections, gts, MODELS, table=reference_table, w=ScoreWeights.of(1, 0, 0), pair_list={"YOLOv4": "TX2"}
            )

    def test_score_needs_table(self, one_task):
        gts, detections = one_task
        with pytest.raises(LabelingError):
            label_tasks(["t"], detections, gts, MODELS, strategy="score")


class TestLabeledSet:
    def features(self, n):
        rng = np.random.default_rng(0)
        return {f"t{i}": FeatureVector(rng.normal(3.0, 2.0, size=29)) for i in range(n)}

    def test_train_rows_are_standardized(self):
        features = self.features(40)
        ids = list(features)
        data = build_labeled_set(ids, features, [i % 2 for i in range(40)], ["a", "b"], test_fraction=0.25, seed=1)
        train = data.X[data.train]
        assert np.allclose(train.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(train.std(axis=0), 1.0)
        assert len(data.test) == 10
        assert data.class_counts() == {"a": 20, "b": 20}

    def test_class_only_in_test_split(self):
        features = self.features(10)
        ids = list(features)
        _, test = split(10, 0.2, seed=0)
        labels = [0] * 10
        labels[int(test[0])] = 1
        with pytest.raises(LabelingError, match="missing from the train split"):
            build_labeled_set(ids, features, labels, ["a", "b"], test_fraction=0.2, seed=0)

    def test_model_never_labeled(self):
        features = self.features(10)
        with pytest.raises(LabelingError, match="missing from the train split") as info:
            build_labeled_set(list(features), features, [0, 1] * 5, ["a", "b", "c"], test_fraction=0.2, seed=0)
        assert info.value.payload == {"classes": ["c"]}

    def test_missing_features(self):
        with pytest.raises(LabelingError):
            build_labeled_set(["x", "y"], {}, [0, 1], ["a", "b"])

    def test_gen_labels_is_deterministic(self, det, gt):
        features = self.features(10)
        ids = list(features)
        gts = {t: [gt(0.5, 0.5, 0.2, 0.2)] for t in ids}
        detections = {
            "a": {t: [det(0.5, 0.5, 0.2, 0.2)] if i % 2 else [] for i, t in enumerate(ids)},
            "b": {t: [det(0.5, 0.5, 0.2, 0.2)] for t in ids},
        }
        first = gen_labels(ids, features, detections, gts, ["a", "b"], strategy="iou", test_fraction=0.3)
        second = gen_labels(ids, features, detections, gts, ["a", "b"], strategy="iou", test_fraction=0.3)
        assert first.y.tolist() == [1, 0] * 5
        assert np.array_equal(first.X, second.X)
        assert np.array_equal(first.test, second.test)
