import logging
import pathlib
from collections import Counter

import click
import pandas as pd

from ..classifier.labels import LABEL_STRATEGIES, label_tasks
from ..geometry import load_detections_dir, load_ground_truth
from ..matching_loss import LossWeights
from ..profiles import ingest_measurements
from ..scoring import read_pair_list
from ..simulator import load_task_meta
from ..utils.json_utils import write_json
from .cli_utils import (
    config_option,
    console,
    error_boundary,
    out_option,
    print_table,
    require,
    run_config,
    weights_options,
)

logger = logging.getLogger(__name__)


def model_list_path(labels_path: pathlib.Path) -> pathlib.Path:
    """Sidecar next to a label CSV holding the full model list, in label-index order."""
    return labels_path.with_name(f"{labels_path.stem}.models.json")


def write_labels_csv(path: pathlib.Path, task_ids, models, labels):
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"image_id": list(task_ids), "model": [models[k] for k in labels]})
    frame.to_csv(path, index=False, lineterminator="\n")
    write_json(model_list_path(path), {"models": list(models)})
    return path


@click.command("gen-labels")
@config_option
@click.option("--detections", "detections_dir", type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path), default=None, help="Directory of <model>.jsonl detection files.")
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Ground-truth JSONL file.")
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Profile table (JSON or CSV).")
@click.option("--pair-list", "pair_list_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Deployed model -> platform map.")
@click.option("--tasks", "tasks_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Task list with encoded sizes (adds transmission costs).")
@click.option("--label-strategy", type=click.Choice(LABEL_STRATEGIES), default=None, help="iou: best mean IoU; score: best weighted score.")
@weights_options
@out_option
@error_boundary
def gen_labels(
    config_path, detections_dir, gt_path, profiles_path, pair_list_path, tasks_path, label_strategy, weights, preset, out
):
    """Label every ground-truth image with the model that suits it best.

    Writes a CSV with image_id and model columns, in ground-truth file order,
    and <name>.models.json next to it with every candidate model. Score labels
    default to equal time, energy and loss weights; the loss weight must be
    nonzero. Labeling draws no random numbers, so there is no --seed.
    """
    cfg = run_config(
        config_path,
        detections_dir=detections_dir,
        gt_path=gt_path,
        profiles_path=profiles_path,
        pair_list_path=pair_list_path,
        tasks_path=tasks_path,
        label_strategy=label_strategy,
        weights=weights,
        preset=preset,
        labels_path=out,
    )
    require(cfg, "detections_dir", "gt_path")
    if cfg.labels_path is None:
        raise click.UsageError("missing output: pass --out or set labels_path in the run config")

    w = cfg.label_weights()
    if cfg.label_strategy == "score" and w.gamma == 0.0:
        raise click.UsageError(
            "score labels need a nonzero loss weight, otherwise every image gets the same model: "
            "raise gamma in --weights or use --label-strategy iou"
        )

    detections = load_detections_dir(cfg.detections_dir)
    gts = load_ground_truth(cfg.gt_path)
    table = ingest_measurements(cfg.profiles_path) if cfg.profiles_path else None
    if cfg.label_strategy == "score" and table is None:
        raise click.UsageError("the score strategy needs --profiles")

    if table is not None:
        models = [m for m in table.measured_models() if m in detections]
    else:
        models = sorted(detections)
    if not models:
        raise click.ClickException("no model has both detections and measurements")

    pair_list = read_pair_list(cfg.pair_list_path) if cfg.pair_list_path else None
    sizes = load_task_meta(cfg.tasks_path)[0] if cfg.tasks_path else None
    task_ids = list(gts)
    labels = label_tasks(
        task_ids,
        detections,
        gts,
        models,
        strategy=cfg.label_strategy,
        table=table,
        w=w,
        pair_list=pair_list,
        cluster=table.cluster.with_links(cfg.link) if table is not None and sizes else None,
        task_sizes=sizes,
        loss_weights=LossWeights(),
        class_aware=cfg.class_aware,
    )
    write_labels_csv(cfg.labels_path, task_ids, models, labels)

    counts = Counter(models[k] for k in labels)
    print_table(f"Labels ({cfg.label_strategy})", ["model", "tasks"], [(m, counts.get(m, 0)) for m in models])
    unused = [m for m in models if not counts.get(m)]
    if unused:
        logger.warning(f"No image was labeled with {unused}; train will refuse this label set")
    console.print(f"[green]Wrote {len(labels)} labels to[/green] {cfg.labels_path}")
