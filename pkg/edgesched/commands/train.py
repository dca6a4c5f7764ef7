import logging
import pathlib
from typing import List, Optional

import click
import pandas as pd

from ..classifier.labels import build_labeled_set
from ..classifier.mlp import TrainConfig, train
from ..errors import LabelingError
from ..features import read_features_csv
from ..profiles import ingest_measurements
from ..utils.json_utils import read_json
from .cli_utils import config_option, console, error_boundary, out_option, print_table, require, run_config, seed_option
from .labels import model_list_path

logger = logging.getLogger(__name__)


def read_labels_csv(path: pathlib.Path):
    """(image ids, model names) in file order."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != ["image_id", "model"]:
        raise LabelingError(f"{path}: expected columns image_id,model")
    return frame["image_id"].tolist(), frame["model"].tolist()


def read_model_list(labels_path: pathlib.Path, profiles_path: Optional[pathlib.Path] = None) -> List[str]:
    """
    The classifier's classes, in label-index order.

    Taken from the sidecar gen-labels writes next to the label CSV, else from
    the measured models of a profile table.
    """
    sidecar = model_list_path(labels_path)
    if sidecar.exists():
        models = read_json(sidecar).get("models")
        if not isinstance(models, list) or not models:
            raise LabelingError(f"{sidecar}: expected a non-empty 'models' list")
        return [str(m) for m in models]
    if profiles_path is not None:
        return ingest_measurements(profiles_path).measured_models()
    raise LabelingError(f"no model list for {labels_path}: rerun gen-labels or pass --profiles")


@click.command("train")
@config_option
@click.option("--features", "features_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Feature CSV written by extract.")
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Label CSV written by gen-labels.")
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Profile table whose models are the classes, when the labels carry no model list.")
@click.option(
    "--test-fraction",
    type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
    default=None,
    help="Share of rows held out for evaluation (default 0.2).",
)
@click.option("--epochs", type=click.IntRange(min=0), default=None, help="Training epochs (default 300).")
@click.option("--hidden-width", type=click.IntRange(min=1), default=None, help="Units per hidden layer (default 128).")
@seed_option
@out_option
@error_boundary
def train_model(config_path, features_path, labels_path, profiles_path, test_fraction, epochs, hidden_width, seed, out):
    """Train the pre-classifier and write it, with its normalizer, to a model file.

    The output layer has one unit per model of the label set's model list;
    every model must label at least one training row.
    """
    cfg = run_config(
        config_path,
        features_path=features_path,
        labels_path=labels_path,
        profiles_path=profiles_path,
        test_fraction=test_fraction,
        epochs=epochs,
        hidden_width=hidden_width,
        seed=seed,
        model_path=out,
    )
    require(cfg, "features_path", "labels_path")
    if cfg.model_path is None:
        raise click.UsageError("missing output: pass --out or set model_path in the run config")

    features = read_features_csv(cfg.features_path)
    task_ids, names = read_labels_csv(cfg.labels_path)
    models = read_model_list(cfg.labels_path, cfg.profiles_path)
    index = {m: k for k, m in enumerate(models)}
    unknown = sorted(set(names) - set(index))
    if unknown:
        raise LabelingError(f"labels {unknown} are not in the model list {models}")
    data = build_labeled_set(
        task_ids, features, [index[n] for n in names], models, test_fraction=cfg.test_fraction, seed=cfg.seed
    )

    model = train(data, TrainConfig(epochs=cfg.epochs, hidden_width=cfg.hidden_width, seed=cfg.seed))
    model.save(cfg.model_path)

    ev = model.evaluation
    print_table(
        "Held-out split",
        ["model", "true", "predicted"],
        [(m, ev["test_true_counts"][m], ev["test_predicted_counts"][m]) for m in models],
    )
    console.print(f"train accuracy: {ev['train_accuracy']:.4f}")
    console.print(f"test accuracy: {ev['test_accuracy']:.4f}")
    console.print(f"[green]Wrote model to[/green] {cfg.model_path}")
