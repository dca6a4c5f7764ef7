"""Measured (model, platform) costs, per-task losses and the cluster description."""

import logging
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import NoProfileError, ProfileError
from .utils.json_utils import read_json, write_json

logger = logging.getLogger(__name__)

REQUIRED_CSV_COLUMNS = ("model", "platform", "time_ms", "energy_j")


class LossMode(str, Enum):
    """How the per-task loss of a (model, task) pair is obtained."""

    PER_TASK = "per-task"
    CLASS_CONSTANT = "class-constant"
    MAP = "map"


class ModelInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    backbone: str = ""
    map_score: float = Field(ge=0.0, le=100.0)

    def map_loss(self) -> float:
        """Loss surrogate (100 - mAP) / 100."""
        return (100.0 - self.map_score) / 100.0


class LinkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    bandwidth_bytes_per_s: float = Field(gt=0.0)
    rtt_s: float = Field(default=0.0, ge=0.0)
    tx_power_w: float = Field(default=0.0, ge=0.0)


def transmission_cost(size_bytes: int, link: Optional[LinkSpec]) -> Tuple[float, float]:
    """
    Time and energy to ship a task of `size_bytes` over `link`.

    A local platform (no link) costs nothing; otherwise time is
    size / bandwidth + rtt and energy is tx_power * time.
    """
    if size_bytes < 0:
        raise ProfileError(f"task size must be non-negative, got {size_bytes}")
    if link is None:
        return 0.0, 0.0
    time_s = size_bytes / link.bandwidth_bytes_per_s + link.rtt_s
    return time_s, link.tx_power_w * time_s


class PlatformInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    is_local: bool = False
    link: Optional[LinkSpec] = None

    @model_validator(mode="after")
    def _link_iff_remote(self):
        if self.is_local and self.link is not None:
            raise ValueError(f"local platform '{self.name}' cannot have a link")
        if not self.is_local and self.link is None:
            raise ValueError(f"remote platform '{self.name}' needs a link")
        return self


class Measurement(BaseModel):
    """Inference cost of one model on one platform, as measured."""

    model_config = ConfigDict(frozen=True)

    time_ms: float = Field(gt=0.0)
    energy_j: float = Field(gt=0.0)

    @property
    def infer_time_s(self) -> float:
        return self.time_ms / 1000.0

    @property
    def infer_energy_j(self) -> float:
        return self.energy_j


class MeasurementRow(Measurement):
    model: str
    platform: str


class TaskLossRow(BaseModel):
    model: str
    task: str
    loss: float = Field(ge=0.0)


class LossSurrogateRow(BaseModel):
    model: str
    task_class: str
    loss: float = Field(ge=0.0)


class ProfilesDocument(BaseModel):
    """On-disk schema of profiles.json."""

    models: List[ModelInfo] = Field(default_factory=list)
    platforms: List[PlatformInfo] = Field(default_factory=list)
    measurements: List[MeasurementRow] = Field(default_factory=list)
    task_loss: List[TaskLossRow] = Field(default_factory=list)
    loss_surrogates: List[LossSurrogateRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _single_local(self):
        local = [p.name for p in self.platforms if p.is_local]
        if len(local) > 1:
            raise ValueError(f"only one platform may be local, got {local}")
        return self


class Cluster:
    """Platforms available to the scheduler, keyed by name."""

    def __init__(self, platforms: Iterable[PlatformInfo]):
        self._platforms: Dict[str, PlatformInfo] = {}
        for p in platforms:
            if p.name in self._platforms:
                raise ProfileError(f"duplicate platform '{p.name}'")
            self._platforms[p.name] = p
        local = [p.name for p in self._platforms.values() if p.is_local]
        if len(local) > 1:
            raise ProfileError(f"only one platform may be local, got {local}")
        self.local: Optional[str] = local[0] if local else None

    @property
    def platforms(self) -> Mapping[str, PlatformInfo]:
        return MappingProxyType(self._platforms)

    def __contains__(self, name: str) -> bool:
        return name in self._platforms

    def get(self, name: str) -> PlatformInfo:
        try:
            return self._platforms[name]
        except KeyError:
            raise NoProfileError(f"no profile: platform '{name}' is not part of the cluster")

    def with_links(self, overrides: Mapping[str, LinkSpec]) -> "Cluster":
        """Copy with the links of the named remote platforms replaced."""
        updated = []
        for p in self._platforms.values():
            if p.name in overrides:
                if p.is_local:
                    raise ProfileError(f"cannot set a link on local platform '{p.name}'")
                p = p.model_copy(update={"link": overrides[p.name]})
            updated.append(p)
        unknown = set(overrides) - set(self._platforms)
        if unknown:
            raise ProfileError(f"link override for unknown platforms {sorted(unknown)}")
        return Cluster(updated)


class ProfileTable:
    """
    Read-only store of measured costs.

    Holds T and E per (model, platform), optional per-(model, task) losses and
    per-(model, task class) loss surrogates.
    """

    def __init__(self, document: ProfilesDocument):
        measurements: Dict[Tuple[str, str], Measurement] = {}
        for row in document.measurements:
            key = (row.model, row.platform)
            if key in measurements:
                raise ProfileError(f"duplicate measurement for model '{row.model}' on '{row.platform}'")
            measurements[key] = Measurement(time_ms=row.time_ms, energy_j=row.energy_j)

        task_loss: Dict[Tuple[str, str], float] = {}
        for row in document.task_loss:
            key = (row.model, row.task)
            if key in task_loss:
                raise ProfileError(f"duplicate task loss for model '{row.model}' on task '{row.task}'")
            task_loss[key] = row.loss

        self._document = document
        self._models = {m.name: m for m in document.models}
        self._measurements = measurements
        self._task_loss = task_loss
        self._surrogates = {(r.model, r.task_class): r.loss for r in document.loss_surrogates}
        self.cluster = Cluster(document.platforms)

    @property
    def models(self) -> Mapping[str, ModelInfo]:
        return MappingProxyType(self._models)

    @property
    def measurements(self) -> Mapping[Tuple[str, str], Measurement]:
        return MappingProxyType(self._measurements)

    def __len__(self):
        return len(self._measurements)

    def measured_models(self) -> List[str]:
        """Models with at least one measurement, in first-seen order."""
        return list(dict.fromkeys(m for m, _ in self._measurements))

    def platforms_for(self, model: str) -> List[str]:
        return [p for m, p in self._measurements if m == model]

    def query(self, model: str, platform: str) -> Measurement:
        try:
            return self._measurements[(model, platform)]
        except KeyError:
            raise NoProfileError(
                f"no profile for model '{model}' on platform '{platform}'",
                payload={"model": model, "platform": platform},
            )

    def model_info(self, model: str) -> ModelInfo:
        try:
            return self._models[model]
        except KeyError:
            raise NoProfileError(f"no profile: model '{model}' has no ModelInfo entry")

    def task_loss(self, model: str, task: str) -> Optional[float]:
        return self._task_loss.get((model, task))

    def loss_for(self, model: str, task: str, mode: LossMode, task_class: Optional[str] = None) -> float:
        """Per-task loss of `model` on `task` under the given loss mode."""
        mode = LossMode(mode)
        if mode is LossMode.PER_TASK:
            value = self.task_loss(model, task)
            if value is None:
                raise NoProfileError(f"no profile: task loss for model '{model}' on task '{task}'")
            return value
        if mode is LossMode.CLASS_CONSTANT:
            try:
                return self._surrogates[(model, task_class)]
            except KeyError:
                raise NoProfileError(
                    f"no profile: loss surrogate for model '{model}' and task class '{task_class}'"
                )
        return self.model_info(model).map_loss()

    def restrict(self, models: Optional[Iterable[str]] = None, platforms: Optional[Iterable[str]] = None):
        """Sub-table keeping only the given models and/or platforms."""
        keep_m = set(models) if models is not None else None
        keep_p = set(platforms) if platforms is not None else None
        doc = self._document
        return ProfileTable(
            doc.model_copy(
                update={
                    "measurements": [
                        r
                        for r in doc.measurements
                        if (keep_m is None or r.model in keep_m) and (keep_p is None or r.platform in keep_p)
                    ]
                }
            )
        )

    def to_document(self) -> ProfilesDocument:
        return self._document

    def to_json(self) -> dict:
        return self._document.model_dump(mode="json")

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_json())


def _document_from_csv(path: Path) -> ProfilesDocument:
    if path.stat().st_size == 0:
        return ProfilesDocument()
    frame = pd.read_csv(path, dtype={"model": str, "platform": str}, float_precision="round_trip")
    missing = [c for c in REQUIRED_CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ProfileError(f"{path}: missing columns {missing}")
    rows = frame[list(REQUIRED_CSV_COLUMNS)].to_dict(orient="records")
    return ProfilesDocument(measurements=[MeasurementRow(**r) for r in rows])


def ingest_measurements(path: Union[str, Path]) -> ProfileTable:
    """
    Load a measurement file (profiles.json schema or a CSV with model, platform,
    time_ms, energy_j columns) into a ProfileTable.

    Raises:
        ProfileError: malformed file, duplicate (model, platform) rows or
            nonpositive time/energy.
    """
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            document = _document_from_csv(path)
        elif path.stat().st_size == 0:
            document = ProfilesDocument()
        else:
            document = ProfilesDocument.model_validate(read_json(path))
    except ValidationError as e:
        raise ProfileError(
            f"{path}: invalid profile data",
            payload={"errors": e.errors(include_url=False, include_context=False)},
        ) from e
    except (OSError, ValueError) as e:
        if isinstance(e, ProfileError):
            raise
        raise ProfileError(f"{path}: cannot read profile data: {e}") from e

    table = ProfileTable(document)
    logger.info(f"Loaded {len(table)} measurements for {len(table.measured_models())} models from {path}")
    return table


def reference_profiles_path() -> Path:
    """Shipped reference measurements for the three-platform cluster."""
    return Path(str(resources.files("edgesched") / "data" / "reference_profiles.json"))


def load_reference_profiles() -> ProfileTable:
    return ingest_measurements(reference_profiles_path())
