import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import click
import tomlkit as toml
from tomlkit.exceptions import ParseError
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .classifier.labels import LabelStrategy
from .errors import ConfigError
from .profiles import LinkSpec, LossMode
from .scoring import Constraints, Fallback, ScoreWeights
from .simulator import BASELINE_PRESET, PRESETS, SchedulerMode, preset
from .utils.json_utils import read_structured

logger = logging.getLogger(__name__)

PATH_FIELDS = (
    "profiles_path",
    "model_path",
    "features_path",
    "labels_path",
    "detections_dir",
    "gt_path",
    "images_dir",
    "tasks_path",
    "pair_list_path",
    "output_dir",
)

# score labels weigh time, energy and detection loss equally unless told otherwise
LABEL_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


def _plain(value):
    """tomlkit containers to plain python values."""
    return value.unwrap() if hasattr(value, "unwrap") else value


class EdgeSchedConfigManager:
    """
    Project settings kept in a `.edgesched.toml` file.

    The file is looked up from the current directory upwards; values missing
    there fall back to the global file in ~/.edgesched/.
    """

    CFG_FILE = ".edgesched.toml"

    def __init__(self, cfg_file_path: Optional[str] = None):
        self.cfg_file_path = cfg_file_path
        self.load_config_file = cfg_file_path
        self.global_config_file = EdgeSchedConfigManager._get_global_config_path()
        self.config = {}
        self.global_config = {}
        self._is_loaded = False
        self.load_config()

    def _find_file_in_parent_tree(self):
        if self.cfg_file_path is not None:
            self.load_config_file = os.path.abspath(self.cfg_file_path)
            return self.load_config_file

        dir = os.path.abspath(os.getcwd())
        root_dir = os.path.abspath(os.sep)
        while dir != root_dir:
            file_path = os.path.join(dir, EdgeSchedConfigManager.CFG_FILE)
            if os.path.exists(file_path):
                self.load_config_file = file_path
                return file_path
            dir = os.path.dirname(dir)

        self.load_config_file = self._get_global_config_path()
        return self.load_config_file

    @staticmethod
    def _get_global_config_path():
        home_directory = os.path.abspath(os.path.expanduser("~"))
        return os.path.join(home_directory, ".edgesched", EdgeSchedConfigManager.CFG_FILE)

    def _load_config(self, file_path):
        if not os.path.exists(file_path):
            return {}
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                return toml.load(f)
        except ParseError as e:
            raise ConfigError(f"Error decoding TOML file '{file_path}': {e}")
        except OSError as e:
            raise ConfigError(f"Cannot read config from '{file_path}': {e}")

    def load_config(self):
        file_path = self._find_file_in_parent_tree()
        self.config = self._load_config(file_path)
        self.global_config = self._load_config(EdgeSchedConfigManager._get_global_config_path())
        self._is_loaded = True

    @property
    def base_dir(self) -> Path:
        """Directory relative paths in the loaded file are resolved against."""
        return Path(self.load_config_file).parent

    def save_config(self, is_global=False):
        file_path = self._get_global_config_path() if is_global else self._find_file_in_parent_tree()
        cfg = self.config if not is_global else self.global_config
        os.makedirs(os.path.dirname(file_path), exist_ok=True)
        try:
            with open(file_path, "w", encoding="utf-8") as f:
                toml.dump(copy.deepcopy(cfg), f)
        except OSError as e:
            raise ConfigError(f"Error saving TOML file '{file_path}': {e}")
        logger.info(f"Configuration saved to '{file_path}'")
        return file_path

    def _get_value(self, key_path, config, default=None):
        current = config
        for key in key_path.split("."):
            if isinstance(current, dict) and key in current:
                current = current[key]
            else:
                return default
        return current

    def get(self, key_path: str, default=None):
        """
        Value at a dot-separated path (e.g. "run.seed").

        The local file wins over the global one.
        """
        value = self._get_value(key_path, self.config, default=None)
        if value is not None:
            return _plain(value)
        return _plain(self._get_value(key_path, self.global_config, default=default))

    def set(self, key_path: str, value, is_global=False):
        """Set a dot-separated path; string values that parse as JSON are stored parsed."""
        keys = key_path.split(".")
        try:
            value = json.loads(value) if isinstance(value, str) else value
        except json.JSONDecodeError:
            pass
        current = self.config if not is_global else self.global_config
        for i, key in enumerate(keys):
            if i == len(keys) - 1:
                current[key] = value
            else:
                if key not in current or not isinstance(current[key], dict):
                    current[key] = {}
                current = current[key]
        self._is_loaded = True
        return value

    def delete(self, key_path: str, is_global=False) -> bool:
        keys = key_path.split(".")
        current = self.config if not is_global else self.global_config
        for key in keys[:-1]:
            if not isinstance(current, dict) or key not in current:
                return False
            current = current[key]
        if not isinstance(current, dict) or keys[-1] not in current:
            return False
        del current[keys[-1]]
        return True

    def __str__(self):
        return toml.dumps(self.config)


# --- run configuration -----------------------------------------------------------


class RunConfig(BaseModel):
    """Everything a pipeline command may need, validated once."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    profiles_path: Optional[Path] = None
    model_path: Optional[Path] = None
    features_path: Optional[Path] = None
    labels_path: Optional[Path] = None
    detections_dir: Optional[Path] = None
    gt_path: Optional[Path] = None
    images_dir: Optional[Path] = None
    tasks_path: Optional[Path] = None
    pair_list_path: Optional[Path] = None
    output_dir: Path = Path("out")

    weights: Optional[Tuple[float, float, float]] = None
    preset: Optional[str] = None
    gamma: float = Field(default=0.0, ge=0.0, le=1.0)
    constraints: Constraints = Field(default_factory=Constraints)
    fallback: Fallback = "error"
    link: Dict[str, LinkSpec] = Field(default_factory=dict)

    scheduler_mode: SchedulerMode = "preclassified"
    label_strategy: LabelStrategy = "score"
    loss_mode: LossMode = LossMode.MAP
    class_aware: bool = False
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    hidden_width: int = Field(default=128, gt=0)
    epochs: int = Field(default=300, ge=0)
    seed: int = 0
    baseline_model: Optional[str] = None
    presets: List[str] = Field(default_factory=lambda: list(PRESETS))

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value):
        if value is not None and value not in PRESETS:
            raise ValueError(f"unknown preset '{value}', expected one of {sorted(PRESETS)}")
        return value

    @field_validator("presets")
    @classmethod
    def _known_presets(cls, value):
        unknown = [p for p in value if p not in PRESETS and p != BASELINE_PRESET]
        if unknown:
            raise ValueError(f"unknown presets {unknown}")
        return value

    @model_validator(mode="after")
    def _weights_or_preset(self):
        if self.weights is not None and self.preset is not None:
            raise ValueError("give either weights or a preset, not both")
        if self.weights is not None:
            ScoreWeights(alpha=self.weights[0], beta=self.weights[1], gamma=self.weights[2])
        return self

    def score_weights(self) -> ScoreWeights:
        """Explicit weights, else the named preset, else the balance preset."""
        if self.weights is not None:
            return ScoreWeights.of(*self.weights)
        return preset(self.preset or "balance", self.gamma)

    def label_weights(self) -> ScoreWeights:
        """Weights for score labels: explicit weights or preset, else equal thirds."""
        if self.weights is None and self.preset is None:
            return ScoreWeights.of(*LABEL_WEIGHTS)
        return self.score_weights()

    def strategy_name(self) -> str:
        return "custom" if self.weights is not None else (self.preset or "balance")


def _resolve_paths(data: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    out = dict(data)
    for key in PATH_FIELDS:
        value = out.get(key)
        if value is not None and not Path(value).is_absolute():
            out[key] = str(base_dir / value)
    return out


def _merge(base: Dict[str, Any], layer: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    if "weights" in layer:
        merged.pop("preset", None)
    if "preset" in layer:
        merged.pop("weights", None)
    merged.update(layer)
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    manager: Optional[EdgeSchedConfigManager] = None,
) -> RunConfig:
    """
    Build the RunConfig of a command.

    Precedence, lowest first: built-in defaults, the `[run]` table of
    `.edgesched.toml`, the --config file (TOML or JSON by suffix), command
    line flags (`overrides`, None values ignored). Relative paths resolve
    against the file they came from; flag paths against the working directory.

    Raises:
        ConfigError: unreadable file or invalid values.
    """
    manager = manager or EdgeSchedConfigManager()
    data: Dict[str, Any] = {}
    project = manager.get("run", {}) or {}
    if project:
        data = _merge(data, _resolve_paths(project, manager.base_dir))

    if path is not None:
        path = Path(path)
        try:
            file_data = read_structured(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read run config {path}: {e}") from e
        if not isinstance(file_data, dict):
            raise ConfigError(f"run config {path} must be a table/object")
        data = _merge(data, _resolve_paths(file_data, path.resolve().parent))

    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"invalid run config: {where}: {first['msg']}") from e


# --- `edgesched config` command group ----------------------------------------------


@click.group()
def config():
    """Manage edgesched project configuration."""
    pass


@config.command("set")
@click.argument("key", required=True, nargs=1)
@click.argument("value", required=True, nargs=1)
@click.option("--global", "-g", "is_global", is_flag=True, default=False, help="Set the configuration globally.")
def set_value(key, value, is_global):
    """Set a configuration value.

    \b
    Arguments:
        key: Dot-separated key path (e.g. "run.seed").
        value: The value to set; JSON literals are parsed.
    """
    manager = EdgeSchedConfigManager()
    stored = manager.set(key, value, is_global=is_global)
    file_path = manager.save_config(is_global=is_global)
    click.echo(f"Set '{key}' to '{stored}' in {file_path}.")


@config.command("get")
@click.argument("key", required=True, nargs=1)
def get_value(key):
    """Get a configuration value by its dot-separated key path."""
    value = EdgeSchedConfigManager().get(key)
    if value is not None:
        click.echo(f"{key} = {value}")
    else:
        click.echo(f"Key '{key}' not found in configuration.")


@config.command("delete")
@click.option("--global", "-g", "is_global", is_flag=True, default=False, help="Delete from the global configuration.")
@click.argument("key", required=True, nargs=1)
def delete_value(key, is_global):
    """Delete a configuration entry."""
    manager = EdgeSchedConfigManager()
    if manager.delete(key, is_global=is_global):
        manager.save_config(is_global=is_global)
        click.echo(f"Deleted key '{key}'.")
    else:
        click.echo(f"Key '{key}' not found in configuration.")


@config.command("init")
def init_config():
    """Create an empty .edgesched.toml in the current directory."""
    file_path = os.path.join(os.path.abspath(os.getcwd()), EdgeSchedConfigManager.CFG_FILE)
    if os.path.exists(file_path):
        click.echo("Configuration file already exists. Use 'set' to modify values.")
        return
    with open(file_path, "w", encoding="utf-8") as f:
        toml.dump({"run": {"seed": 0}}, f)
    click.echo("Initialized new configuration file in the current directory.")


@config.command("show")
@click.option("--global", "-g", "is_global", is_flag=True, default=False, help="Show the global configuration.")
def show_config(is_global):
    """Display the current configuration."""
    manager = EdgeSchedConfigManager()
    if is_global:
        click.echo(f"Global Configuration: {manager.global_config_file}")
        click.echo(toml.dumps(manager.global_config))
    else:
        click.echo(f"Local Configuration: {manager.load_config_file}")
        click.echo(str(manager))
