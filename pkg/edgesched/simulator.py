"""
Deterministic replay of scheduled tasks against a modeled edge cluster.

Costs come from the profile table and the link model, never from the host
clock. Tasks are independent: there is no queueing or link contention, and
aggregates are summed in task order.
"""

import logging
from importlib import resources
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .classifier.mlp import MLPModel, predict_raw
from .errors import ConfigError, EdgeSchedError, FeatureExtractionError, NoProfileError, ScoringError
from .features import FeatureVector
from .geometry import Detection, GroundTruthBox
from .matching_loss import LossWeights, total_loss
from .profiles import Cluster, LossMode, ProfileTable, transmission_cost
from .scoring import Candidate, Constraints, Decision, Fallback, ScoreWeights, select
from .utils.json_utils import read_json, read_jsonl, write_json, write_jsonl

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Tuple[float, float]] = {
    "time-oriented": (1.0, 0.0),
    "energy-oriented": (0.0, 1.0),
    "balance": (0.5, 0.5),
}
BASELINE_PRESET = "balance-natively"

SchedulerMode = Literal["preclassified", "exhaustive", "forced"]

REPORT_CSV_COLUMNS = (
    "image_id",
    "model",
    "platform",
    "score",
    "transmit_time_s",
    "infer_time_s",
    "total_time_s",
    "transmit_energy_j",
    "infer_energy_j",
    "total_energy_j",
    "loss",
    "feasible",
    "failed",
    "error",
)


class Task(BaseModel):
    """One image to be detected, with what the simulator knows about it."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    image_id: str
    encoded_size_bytes: int = Field(gt=0)
    features: Optional[FeatureVector] = None
    task_class: Optional[str] = None
    gts: Optional[List[GroundTruthBox]] = None
    detections: Dict[str, List[Detection]] = Field(default_factory=dict)


class Outcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    model: Optional[str] = None
    platform: Optional[str] = None
    score: Optional[float] = None
    transmit_time_s: float = 0.0
    infer_time_s: float = 0.0
    transmit_energy_j: float = 0.0
    infer_energy_j: float = 0.0
    loss: Optional[float] = None
    feasible: bool = False
    failed: bool = False
    error: Optional[str] = None

    @property
    def total_time_s(self) -> float:
        return self.transmit_time_s + self.infer_time_s

    @property
    def total_energy_j(self) -> float:
        return self.transmit_energy_j + self.infer_energy_j

    def as_record(self) -> dict:
        record = self.model_dump(mode="json")
        record["total_time_s"] = self.total_time_s
        record["total_energy_j"] = self.total_energy_j
        return record


class RunReport(BaseModel):
    preset: Optional[str] = None
    weights: Optional[Tuple[float, float, float]] = None
    n_tasks: int = 0
    n_failed: int = 0
    total_time_s: float = 0.0
    total_energy_j: float = 0.0
    mean_time_s: float = 0.0
    mean_energy_j: float = 0.0
    mean_loss: Optional[float] = None
    selections: Dict[str, int] = Field(default_factory=dict)
    baseline: Optional[str] = None
    reduction_pct: Optional[Dict[str, float]] = None
    outcomes: List[Outcome] = Field(default_factory=list)

    @classmethod
    def from_outcomes(
        cls,
        outcomes: Sequence[Outcome],
        preset: Optional[str] = None,
        weights: Optional[ScoreWeights] = None,
    ) -> "RunReport":
        """Aggregate over the successful outcomes, summing in task order."""
        done = [o for o in outcomes if not o.failed]
        total_time = sum(o.transmit_time_s + o.infer_time_s for o in done)
        total_energy = sum(o.transmit_energy_j + o.infer_energy_j for o in done)
        losses = [o.loss for o in done if o.loss is not None]
        selections: Dict[str, int] = {}
        for o in done:
            key = f"{o.model}@{o.platform}"
            selections[key] = selections.get(key, 0) + 1
        return cls(
            preset=preset,
            weights=weights.as_tuple() if weights is not None else None,
            n_tasks=len(outcomes),
            n_failed=len(outcomes) - len(done),
            total_time_s=total_time,
            total_energy_j=total_energy,
            mean_time_s=total_time / len(done) if done else 0.0,
            mean_energy_j=total_energy / len(done) if done else 0.0,
            mean_loss=sum(losses) / len(losses) if losses else None,
            selections=selections,
            outcomes=list(outcomes),
        )

    @property
    def all_decided(self) -> bool:
        return self.n_failed == 0

    def summary(self) -> dict:
        """Everything except the per-task outcomes."""
        return self.model_dump(mode="json", exclude={"outcomes"})


def task_loss(
    task: Task,
    model: str,
    table: ProfileTable,
    mode: LossMode,
    loss_weights: LossWeights = LossWeights(),
    class_aware: bool = False,
) -> float:
    """
    Loss of running `model` on `task`.

    In per-task mode the matching loss against the task's own ground truth is
    used when the task carries detections of that model, else the table's
    recorded per-task loss.
    """
    mode = LossMode(mode)
    if mode is LossMode.PER_TASK and task.gts is not None and model in task.detections:
        return total_loss(task.detections[model], task.gts, loss_weights, class_aware).total
    return table.loss_for(model, task.image_id, mode, task.task_class)


class Scheduler:
    """
    Turns a task into candidates.

    - preclassified: the pre-classifier picks the model, the pair-list (or
      every measured platform of that model) gives the platforms;
    - exhaustive: every measured model on every cluster platform;
    - forced: one fixed (model, platform).
    """

    def __init__(
        self,
        table: ProfileTable,
        mode: SchedulerMode = "preclassified",
        classifier: Optional[MLPModel] = None,
        pair_list: Optional[Mapping[str, str]] = None,
        forced: Optional[Tuple[str, str]] = None,
        loss_mode: LossMode = LossMode.MAP,
        loss_weights: LossWeights = LossWeights(),
        class_aware: bool = False,
    ):
        if mode == "preclassified" and classifier is None:
            raise ConfigError("the preclassified scheduler needs a trained classifier")
        if mode == "forced" and forced is None:
            raise ConfigError("the forced scheduler needs a (model, platform) pair")
        if mode not in ("preclassified", "exhaustive", "forced"):
            raise ConfigError(f"unknown scheduler mode '{mode}'")
        self.table = table
        self.mode = mode
        self.classifier = classifier
        self.pair_list = dict(pair_list) if pair_list is not None else None
        self.forced = forced
        self.loss_mode = LossMode(loss_mode)
        self.loss_weights = loss_weights
        self.class_aware = class_aware

    def _pairs(self, task: Task, cluster: Cluster) -> List[Tuple[str, str]]:
        if self.mode == "forced":
            return [self.forced]
        if self.mode == "exhaustive":
            models = self.table.measured_models()
        else:
            if task.features is None:
                raise ScoringError(f"task '{task.image_id}' has no features to classify")
            label, _ = predict_raw(self.classifier, task.features)
            models = [self.classifier.labels[label]]
        pairs = []
        for model in models:
            if self.pair_list is not None and self.mode == "preclassified":
                if model not in self.pair_list:
                    raise NoProfileError(f"no profile: model '{model}' is not deployed in the pair-list")
                platforms = [self.pair_list[model]]
            else:
                platforms = [p for p in self.table.platforms_for(model) if p in cluster]
            pairs.extend((model, p) for p in platforms)
        if not pairs:
            raise NoProfileError(f"no profile: no (model, platform) pair for task '{task.image_id}'")
        return pairs

    def candidates(self, task: Task, cluster: Cluster) -> List[Candidate]:
        out = []
        for model, platform in self._pairs(task, cluster):
            m = self.table.query(model, platform)
            tx_time, tx_energy = transmission_cost(task.encoded_size_bytes, cluster.get(platform).link)
            out.append(
                Candidate(
                    model=model,
                    platform=platform,
                    total_time_s=tx_time + m.infer_time_s,
                    total_energy_j=tx_energy + m.infer_energy_j,
                    loss=task_loss(task, model, self.table, self.loss_mode, self.loss_weights, self.class_aware),
                    transmit_time_s=tx_time,
                    transmit_energy_j=tx_energy,
                )
            )
        return out

    def decide(
        self,
        task: Task,
        cluster: Cluster,
        w: ScoreWeights,
        c: Constraints = Constraints(),
        fallback: Fallback = "error",
    ) -> Decision:
        return select(self.candidates(task, cluster), w, c, fallback)


def _outcome(task: Task, decision: Decision, table: ProfileTable) -> Outcome:
    cand = decision.candidate
    m = table.query(cand.model, cand.platform)
    return Outcome(
        image_id=task.image_id,
        model=cand.model,
        platform=cand.platform,
        score=decision.score,
        transmit_time_s=cand.transmit_time_s,
        infer_time_s=m.infer_time_s,
        transmit_energy_j=cand.transmit_energy_j,
        infer_energy_j=m.infer_energy_j,
        loss=cand.loss,
        feasible=decision.feasible,
    )


def run(
    tasks: Sequence[Task],
    scheduler: Scheduler,
    cluster: Cluster,
    w: ScoreWeights,
    c: Constraints = Constraints(),
    fallback: Fallback = "error",
    preset_name: Optional[str] = None,
) -> RunReport:
    """
    Schedule every task in order and account its transmission and inference costs.

    A task that cannot be decided (missing profile, nothing feasible) is
    recorded as a failed outcome and the run goes on.
    """
    outcomes = []
    for task in tasks:
        try:
            decision = scheduler.decide(task, cluster, w, c, fallback)
            outcomes.append(_outcome(task, decision, scheduler.table))
        except EdgeSchedError as e:
            logger.warning(f"Task '{task.image_id}' is undecidable: {e}")
            outcomes.append(Outcome(image_id=task.image_id, failed=True, error=str(e)))
    report = RunReport.from_outcomes(outcomes, preset=preset_name, weights=w)
    logger.info(
        f"Ran {report.n_tasks} tasks ({report.n_failed} failed): "
        f"total {report.total_time_s:.4f} s, {report.total_energy_j:.4f} J"
    )
    return report


def preset(name: str, gamma: float = 0.0) -> ScoreWeights:
    """
    Weights of a named strategy.

    The strategy's (alpha, beta) are scaled by 1 - gamma so that a nonzero
    loss weight can be mixed in.
    """
    try:
        alpha, beta = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")
    return ScoreWeights.of(alpha * (1.0 - gamma), beta * (1.0 - gamma), gamma)


def default_baseline_model(table: ProfileTable, cluster: Cluster) -> str:
    """Most accurate (highest mAP) model measured on the local platform; ties go to the name."""
    if cluster.local is None:
        raise ConfigError("the cluster has no local platform to run the baseline on")
    measured = [m for m in table.measured_models() if (m, cluster.local) in table.measurements]
    if not measured:
        raise NoProfileError(f"no profile: nothing is measured on local platform '{cluster.local}'")
    return min(measured, key=lambda m: (-table.model_info(m).map_score if m in table.models else 0.0, m))


def baseline_scheduler(
    table: ProfileTable,
    cluster: Cluster,
    model: Optional[str] = None,
    loss_mode: LossMode = LossMode.MAP,
) -> Scheduler:
    """Everything on the local platform with a single model."""
    model = model or default_baseline_model(table, cluster)
    if cluster.local is None:
        raise ConfigError("the cluster has no local platform to run the baseline on")
    return Scheduler(table, mode="forced", forced=(model, cluster.local), loss_mode=loss_mode)


def reduction_pct(treatment: float, baseline: float) -> float:
    if baseline <= 0.0:
        raise ScoringError(f"baseline value must be positive, got {baseline}")
    return (1.0 - treatment / baseline) * 100.0


def reduction(treatment: RunReport, baseline: RunReport) -> Dict[str, float]:
    """Percent reduction of mean time and mean energy, recomputed from the raw sums."""
    done_t = treatment.n_tasks - treatment.n_failed
    done_b = baseline.n_tasks - baseline.n_failed
    if done_t == 0 or done_b == 0:
        raise ScoringError("cannot compare runs without decided tasks")
    return {
        "time": reduction_pct(treatment.total_time_s / done_t, baseline.total_time_s / done_b),
        "energy": reduction_pct(treatment.total_energy_j / done_t, baseline.total_energy_j / done_b),
    }


# --- reference strategy comparison ------------------------------------------------


class StrategyRow(BaseModel):
    name: str
    energy_j: float = Field(gt=0.0)
    time_s: float = Field(gt=0.0)


class Claim(BaseModel):
    name: str
    metric: Literal["time", "energy"]
    quoted: str

    @property
    def decimals(self) -> int:
        return len(self.quoted.split(".", 1)[1]) if "." in self.quoted else 0


class StrategyReference(BaseModel):
    baseline: str
    rows: List[StrategyRow]
    claims: List[Claim] = Field(default_factory=list)

    @model_validator(mode="after")
    def _baseline_present(self):
        names = {r.name for r in self.rows}
        if self.baseline not in names:
            raise ValueError(f"baseline '{self.baseline}' has no row")
        missing = sorted({c.name for c in self.claims} - names)
        if missing:
            raise ValueError(f"claims reference unknown strategies {missing}")
        return self

    def row(self, name: str) -> StrategyRow:
        return next(r for r in self.rows if r.name == name)


class ClaimCheck(BaseModel):
    name: str
    metric: str
    quoted: float
    computed: float
    tolerance: float
    consistent: bool


def strategy_reference_path() -> Path:
    return Path(str(resources.files("edgesched") / "data" / "strategy_reference.json"))


def load_strategy_reference(path: Optional[Union[str, Path]] = None) -> StrategyReference:
    return StrategyReference.model_validate(read_json(path or strategy_reference_path()))


def check_claims(reference: StrategyReference) -> List[ClaimCheck]:
    """
    Recompute every quoted reduction from the strategy rows.

    A quote is consistent when it is within half a unit of its last quoted
    decimal (at least 0.01 percentage points) of the recomputed value.
    """
    base = reference.row(reference.baseline)
    checks = []
    for claim in reference.claims:
        row = reference.row(claim.name)
        if claim.metric == "time":
            computed = reduction_pct(row.time_s, base.time_s)
        else:
            computed = reduction_pct(row.energy_j, base.energy_j)
        tolerance = max(0.01, 0.5 * 10.0 ** (-claim.decimals))
        quoted = float(claim.quoted)
        consistent = abs(computed - quoted) <= tolerance
        if not consistent:
            logger.warning(
                f"{claim.name} {claim.metric} reduction is quoted as {claim.quoted}% "
                f"but the table gives {computed:.2f}%"
            )
        checks.append(
            ClaimCheck(
                name=claim.name,
                metric=claim.metric,
                quoted=quoted,
                computed=computed,
                tolerance=tolerance,
                consistent=consistent,
            )
        )
    return checks


# --- task assembly and report files --------------------------------------------------


def build_tasks(
    features: Mapping[str, FeatureVector],
    gts: Optional[Mapping[str, Sequence[GroundTruthBox]]] = None,
    detections: Optional[Mapping[str, Mapping[str, Sequence[Detection]]]] = None,
    task_classes: Optional[Mapping[str, str]] = None,
    sizes: Optional[Mapping[str, int]] = None,
) -> List[Task]:
    """
    One task per feature row, in row order.

    The encoded size defaults to the row's `size` feature.
    """
    tasks = []
    for image_id, fv in features.items():
        size = sizes[image_id] if sizes is not None and image_id in sizes else int(fv["size"])
        if size <= 0:
            raise FeatureExtractionError(f"task '{image_id}' has no positive encoded size")
        tasks.append(
            Task(
                image_id=image_id,
                encoded_size_bytes=size,
                features=fv,
                task_class=task_classes.get(image_id) if task_classes else None,
                gts=list(gts[image_id]) if gts is not None and image_id in gts else None,
                detections={
                    model: list(per_task[image_id])
                    for model, per_task in (detections or {}).items()
                    if image_id in per_task
                },
            )
        )
    return tasks


def load_task_meta(path: Union[str, Path]) -> Tuple[Dict[str, int], Dict[str, str]]:
    """
    Read a task list, one JSON object per line:
    {"image_id": ..., "encoded_size_bytes": ..., "task_class": ...}; the last two are optional.

    Returns:
        (sizes, task_classes) keyed by image id.
    """
    sizes, classes = {}, {}
    for record in read_jsonl(path):
        image_id = str(record["image_id"])
        if "encoded_size_bytes" in record:
            sizes[image_id] = int(record["encoded_size_bytes"])
        if record.get("task_class") is not None:
            classes[image_id] = str(record["task_class"])
    return sizes, classes


def write_report(report: RunReport, out_dir: Union[str, Path], name: str) -> List[Path]:
    """Write <name>.json (summary + outcomes), <name>.csv and the <name>.jsonl decision log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = [o.as_record() for o in report.outcomes]

    json_path = write_json(out_dir / f"{name}.json", {**report.summary(), "outcomes": records})

    csv_path = out_dir / f"{name}.csv"
    frame = pd.DataFrame(records, columns=list(REPORT_CSV_COLUMNS))
    frame.to_csv(csv_path, index=False, lineterminator="\n")

    log_path = write_jsonl(
        out_dir / f"{name}.jsonl",
        (
            {
                "image_id": o.image_id,
                "model": o.model,
                "platform": o.platform,
                "score": o.score,
                "times": {"transmit": o.transmit_time_s, "infer": o.infer_time_s, "total": o.total_time_s},
                "energies": {
                    "transmit": o.transmit_energy_j,
                    "infer": o.infer_energy_j,
                    "total": o.total_energy_j,
                },
                "feasible": o.feasible,
            }
            for o in report.outcomes
        ),
    )
    return [json_path, csv_path, log_path]
