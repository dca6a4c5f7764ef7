import json

import numpy as np
import pytest

from edgesched.classifier.mlp import MLPModel, TrainConfig
from edgesched.errors import ConfigError, FeatureExtractionError, ScoringError
from edgesched.features import FEATURE_NAMES, FeatureVector, NormStats
from edgesched.profiles import LossMode
from edgesched.scoring import Constraints, ScoreWeights
from edgesched.simulator import (
    BASELINE_PRESET,
    Outcome,
    RunReport,
    Scheduler,
    Task,
    baseline_scheduler,
    build_tasks,
    check_claims,
    default_baseline_model,
    load_strategy_reference,
    load_task_meta,
    preset,
    reduction,
    reduction_pct,
    run,
    write_report,
)


def make_tasks(sizes):
    return [Task(image_id=f"t{i}", encoded_size_bytes=int(s)) for i, s in enumerate(sizes)]


def constant_classifier(labels, pick):
    """A classifier that answers `pick` whatever the features."""
    model = MLPModel.initialize(29, labels, TrainConfig(hidden_width=4, depth=2), np.random.default_rng(0))
    model.weights[-1][:] = 0.0
    model.biases[-1][pick] = 10.0
    model.norm_stats = NormStats(names=FEATURE_NAMES, mean=(0.0,) * 29, std=(1.0,) * 29)
    return model


class TestPresets:
    def test_named(self):
        assert preset("time-oriented").as_tuple() == (1.0, 0.0, 0.0)
        assert preset("energy-oriented").as_tuple() == (0.0, 1.0, 0.0)
        assert preset("balance").as_tuple() == (0.5, 0.5, 0.0)

    def test_mixed_loss_weight(self):
        assert preset("balance", gamma=0.2).as_tuple() == pytest.approx((0.4, 0.4, 0.2))

    def test_unknown(self):
        with pytest.raises(ConfigError):
            preset("fastest")


class TestRun:
    def test_forced_local(self, reference_table):
        scheduler = Scheduler(reference_table, mode="forced", forced=("YOLOv4", "Raspberry 3B+"))
        report = run(make_tasks([1000, 2000, 3000]), scheduler, reference_table.cluster, preset("balance"))
        assert report.n_failed == 0
        assert report.total_time_s == 752.8 + 752.8 + 752.8
        assert report.selections == {"YOLOv4@Raspberry 3B+": 3}
        assert all(o.transmit_time_s == 0.0 for o in report.outcomes)

    def test_transmission_is_charged(self, reference_table):
        scheduler = Scheduler(reference_table, mode="forced", forced=("MobileNetV3", "TX2"))
        report = run(make_tasks([250_000]), scheduler, reference_table.cluster, preset("balance"))
        outcome = report.outcomes[0]
        assert outcome.transmit_time_s == pytest.approx(0.12)
        assert outcome.transmit_energy_j == pytest.approx(0.12)
        assert outcome.total_time_s == pytest.approx(0.12 + 0.1693)

    def test_accounting_identity(self, reference_table):
        sizes = np.random.default_rng(0).integers(1_000, 5_000_000, size=30)
        scheduler = Scheduler(reference_table, mode="exhaustive")
        report = run(make_tasks(sizes), scheduler, reference_table.cluster, preset("balance"))

        total_time, total_energy = 0.0, 0.0
        for o in report.outcomes:
            total_time += o.transmit_time_s + o.infer_time_s
            total_energy += o.transmit_energy_j + o.infer_energy_j
        assert report.total_time_s == total_time
        assert report.total_energy_j == total_energy
        assert sum(report.selections.values()) == 30

    def test_empty(self, reference_table):
        report = run([], Scheduler(reference_table, mode="exhaustive"), reference_table.cluster, preset("balance"))
        assert report.n_tasks == 0
        assert report.total_time_s == 0.0
        assert report.mean_loss is None

    def test_undecidable_tasks_are_recorded(self, reference_table):
        scheduler = Scheduler(reference_table, mode="forced", forced=("DETR", "TX2"))
        report = run(make_tasks([100, 200]), scheduler, reference_table.cluster, preset("balance"))
        assert report.n_failed == 2
        assert not report.all_decided
        assert "no profile" in report.outcomes[0].error
        assert report.total_time_s == 0.0

    def test_infeasible_task_fails_without_fallback(self, reference_table):
        scheduler = Scheduler(reference_table, mode="exhaustive")
        tasks = make_tasks([100])
        report = run(tasks, scheduler, reference_table.cluster, preset("balance"), Constraints(t_max_s=0.01))
        assert report.n_failed == 1
        relaxed = run(tasks, scheduler, reference_table.cluster, preset("balance"), Constraints(t_max_s=0.01), "best-effort")
        assert relaxed.n_failed == 0
        assert not relaxed.outcomes[0].feasible

    def test_time_oriented_never_slower_than_balance(self, reference_table):
        sizes = np.random.default_rng(1).integers(1_000, 20_000_000, size=25)
        tasks = make_tasks(sizes)
        scheduler = Scheduler(reference_table, mode="exhaustive")
        fast = run(tasks, scheduler, reference_table.cluster, preset("time-oriented"))
        balanced = run(tasks, scheduler, reference_table.cluster, preset("balance"))
        assert fast.total_time_s <= balanced.total_time_s

    def test_preclassified(self, reference_table):
        classifier = constant_classifier(["YOLOv4", "MobileNetV3"], pick=1)
        scheduler = Scheduler(reference_table, classifier=classifier, pair_list={"YOLOv4": "TX2", "MobileNetV3": "Zynq 7020"})
        task = Task(image_id="t", encoded_size_bytes=500, features=FeatureVector(np.zeros(29)))
        decision = scheduler.decide(task, reference_table.cluster, preset("time-oriented"))
        assert (decision.model, decision.platform) == ("MobileNetV3", "Zynq 7020")

    def test_preclassified_needs_features(self, reference_table):
        scheduler = Scheduler(reference_table, classifier=constant_classifier(["YOLOv4"], 0))
        report = run(make_tasks([10]), scheduler, reference_table.cluster, preset("balance"))
        assert report.n_failed == 1

    def test_per_task_loss_from_detections(self, reference_table, det, gt):
        task = Task(
            image_id="t",
            encoded_size_bytes=100,
            gts=[gt(0.5, 0.5, 0.2, 0.2)],
            detections={"YOLOv4": [det(0.5, 0.5, 0.2, 0.2)], "MobileNetV3": []},
        )
        scheduler = Scheduler(reference_table, mode="exhaustive", loss_mode=LossMode.PER_TASK)
        decision = scheduler.decide(task, reference_table.cluster, ScoreWeights.of(0, 0, 1))
        assert decision.model == "YOLOv4"
        assert decision.loss == 0.0

    def test_class_constant_loss(self, reference_table):
        task = Task(image_id="t", encoded_size_bytes=100, task_class="complex")
        scheduler = Scheduler(reference_table, mode="exhaustive", loss_mode="class-constant")
        losses = {(c.model, c.loss) for c in scheduler.candidates(task, reference_table.cluster)}
        assert losses == {("YOLOv4", 0.237), ("MobileNetV3", 0.828)}

    def test_unknown_mode(self, reference_table):
        with pytest.raises(ConfigError):
            Scheduler(reference_table, mode="random")


class TestBaseline:
    def test_default_model(self, reference_table):
        assert default_baseline_model(reference_table, reference_table.cluster) == "YOLOv4"

    def test_runs_everything_locally(self, reference_table):
        scheduler = baseline_scheduler(reference_table, reference_table.cluster)
        report = run(make_tasks([10, 20]), scheduler, reference_table.cluster, preset("balance"), preset_name=BASELINE_PRESET)
        assert report.selections == {"YOLOv4@Raspberry 3B+": 2}
        assert report.preset == BASELINE_PRESET


class TestReductions:
    def test_time_oriented_against_local(self):
        assert reduction_pct(1.025, 818.165) == pytest.approx(99.87, abs=0.01)
        assert reduction_pct(6.197, 136.263) == pytest.approx(95.45, abs=0.01)

    def test_zero_baseline(self):
        with pytest.raises(ScoringError):
            reduction_pct(1.0, 0.0)

    def test_from_reports(self):
        base = RunReport.from_outcomes([Outcome(image_id="a", infer_time_s=818.165, infer_energy_j=136.263)])
        treated = RunReport.from_outcomes([Outcome(image_id="a", infer_time_s=1.025, infer_energy_j=6.197)])
        result = reduction(treated, base)
        assert result["time"] == pytest.approx(99.87, abs=0.01)
        assert result["energy"] == pytest.approx(95.45, abs=0.01)

    def test_claims(self):
        checks = check_claims(load_strategy_reference())
        assert len(checks) == 6
        flagged = {(c.name, c.metric) for c in checks if not c.consistent}
        assert flagged == {("Balance with Serve", "time"), ("Balance with Serve", "energy")}
        by_key = {(c.name, c.metric): c for c in checks}
        assert by_key[("Time-Oriented", "energy")].tolerance == pytest.approx(0.05)
        assert by_key[("Balance with Serve", "time")].computed == pytest.approx(99.605, abs=0.001)

    def test_unknown_baseline(self, tmp_path):
        path = tmp_path / "ref.json"
        path.write_text(json.dumps({"baseline": "x", "rows": [{"name": "y", "energy_j": 1, "time_s": 1}]}))
        with pytest.raises(ValueError):
            load_strategy_reference(path)


class TestTaskFiles:
    def test_sizes_default_to_feature(self):
        values = np.zeros(29)
        values[FEATURE_NAMES.index("size")] = 1234
        tasks = build_tasks({"a": FeatureVector(values)})
        assert tasks[0].encoded_size_bytes == 1234
        assert build_tasks({"a": FeatureVector(values)}, sizes={"a": 99})[0].encoded_size_bytes == 99

    def test_zero_size(self):
        with pytest.raises(FeatureExtractionError):
            build_tasks({"a": FeatureVector(np.zeros(29))})

    def test_task_meta(self, tmp_path):
        path = tmp_path / "tasks.jsonl"
        path.write_text(
            '{"image_id": "a", "encoded_size_bytes": 10, "task_class": "easy"}\n{"image_id": "b"}\n'
        )
        assert load_task_meta(path) == ({"a": 10}, {"a": "easy"})

    def test_reports_are_reproducible(self, reference_table, tmp_path):
        sizes = np.random.default_rng(2).integers(1_000, 5_000_000, size=10)
        scheduler = Scheduler(reference_table, mode="exhaustive")
        for out in ("one", "two"):
            report = run(make_tasks(sizes), scheduler, reference_table.cluster, preset("balance"))
            write_report(report, tmp_path / out, "balance")
        for suffix in ("json", "csv", "jsonl"):
            first = (tmp_path / "one" / f"balance.{suffix}").read_bytes()
            assert first == (tmp_path / "two" / f"balance.{suffix}").read_bytes()

        document = json.loads((tmp_path / "one" / "balance.json").read_text())
        assert document["n_tasks"] == 10
        assert len(document["outcomes"]) == 10
        header = (tmp_path / "one" / "balance.csv").read_text().splitlines()[0]
        assert header.startswith("image_id,model,platform,score")
