import logging
import math
import pathlib

import click

from ..features import SATURATION_FEATURE, extract_file
from ..profiles import ingest_measurements, load_reference_profiles
from ..scoring import Constraints, read_pair_list
from ..simulator import Scheduler, Task
from ..utils.json_utils import dumps
from .cli_utils import config_option, error_boundary, load_classifier, require, run_config, weights_options

logger = logging.getLogger(__name__)


@click.command("schedule")
@click.argument("image", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path))
@config_option
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Profile table (default: the shipped reference profiles).")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Trained pre-classifier.")
@click.option("--pair-list", "pair_list_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Deployed model -> platform map.")
@click.option("--mode", "scheduler_mode", type=click.Choice(["preclassified", "exhaustive"]), default=None, help="Let the classifier pick the model, or score every model.")
@click.option("--t-max", type=float, default=None, help="Time bound in seconds.")
@click.option("--e-max", type=float, default=None, help="Energy bound in joules.")
@click.option("--loss-max", type=float, default=None, help="Loss bound.")
@click.option("--fallback", type=click.Choice(["error", "best-effort"]), default=None, help="What to do when nothing meets the bounds.")
@weights_options
@error_boundary
def schedule_task(
    image, config_path, profiles_path, model_path, pair_list_path, scheduler_mode, t_max, e_max, loss_max, fallback, weights, preset
):
    """Decide model and platform for a single image and print the decision as JSON."""
    cfg = run_config(
        config_path,
        profiles_path=profiles_path,
        model_path=model_path,
        pair_list_path=pair_list_path,
        scheduler_mode=scheduler_mode,
        fallback=fallback,
        weights=weights,
        preset=preset,
    )
    bounds = cfg.constraints.model_dump()
    for key, value in (("t_max_s", t_max), ("e_max_j", e_max), ("loss_max", loss_max)):
        if value is not None:
            bounds[key] = value
    constraints = Constraints(**bounds)

    table = ingest_measurements(cfg.profiles_path) if cfg.profiles_path else load_reference_profiles()
    cluster = table.cluster.with_links(cfg.link)
    classifier = None
    if cfg.scheduler_mode == "preclassified":
        require(cfg, "model_path")
        classifier = load_classifier(cfg.model_path)

    saturation = classifier is not None and SATURATION_FEATURE in classifier.norm_stats.names
    features = extract_file(image, include_saturation=saturation)
    task = Task(image_id=image.stem, encoded_size_bytes=image.stat().st_size, features=features)

    scheduler = Scheduler(
        table,
        mode=cfg.scheduler_mode,
        classifier=classifier,
        pair_list=read_pair_list(cfg.pair_list_path) if cfg.pair_list_path else None,
        loss_mode=cfg.loss_mode,
        class_aware=cfg.class_aware,
    )
    decision = scheduler.decide(task, cluster, cfg.score_weights(), constraints, cfg.fallback)
    logger.debug(f"{task.image_id}: {decision.model} on {decision.platform}")

    record = decision.model_dump(mode="json", exclude={"candidate"})
    record["image_id"] = task.image_id
    record["transmit_time_s"] = decision.candidate.transmit_time_s
    record["transmit_energy_j"] = decision.candidate.transmit_energy_j
    record["constraints"] = {k: v for k, v in bounds.items() if not math.isinf(v)}
    click.echo(dumps(record))
