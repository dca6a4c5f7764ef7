import logging
import pathlib

import click

from ..features import read_features_csv
from ..geometry import load_detections_dir, load_ground_truth
from ..profiles import ingest_measurements, load_reference_profiles
from ..scoring import Constraints, read_pair_list
from ..simulator import (
    BASELINE_PRESET,
    Scheduler,
    baseline_scheduler,
    build_tasks,
    load_task_meta,
    preset as preset_weights,
    reduction,
    run,
    write_report,
)
from ..utils.json_utils import write_json
from .cli_utils import (
    config_option,
    console,
    error_boundary,
    load_classifier,
    out_option,
    print_table,
    require,
    run_config,
    weights_options,
)

logger = logging.getLogger(__name__)


@click.command("simulate")
@config_option
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Profile table (default: the shipped reference profiles).")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Trained pre-classifier.")
@click.option("--features", "features_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Feature CSV of the tasks.")
@click.option("--tasks", "tasks_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Task list with encoded sizes and task classes.")
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Ground truth, for per-task losses.")
@click.option("--detections", "detections_dir", type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path), default=None, help="Detections, for per-task losses.")
@click.option("--pair-list", "pair_list_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Deployed model -> platform map.")
@click.option("--mode", "scheduler_mode", type=click.Choice(["preclassified", "exhaustive"]), default=None, help="Let the classifier pick the model, or score every model.")
@click.option("--loss-mode", type=click.Choice(["per-task", "class-constant", "map"]), default=None, help="Where candidate losses come from.")
@click.option("--baseline-model", default=None, help="Model of the local-only baseline (default: most accurate local model).")
@weights_options
@out_option
@error_boundary
def simulate(
    config_path,
    profiles_path,
    model_path,
    features_path,
    tasks_path,
    gt_path,
    detections_dir,
    pair_list_path,
    scheduler_mode,
    loss_mode,
    baseline_model,
    weights,
    preset,
    out,
):
    """Replay every task under each strategy and the local-only baseline.

    Writes <strategy>.json/.csv/.jsonl per run plus summary.json into the
    output directory. Exits nonzero when any task could not be decided.
    Replays draw no random numbers: tasks run in feature-file order and ties
    break on fixed keys, so there is no --seed.
    """
    cfg = run_config(
        config_path,
        profiles_path=profiles_path,
        model_path=model_path,
        features_path=features_path,
        tasks_path=tasks_path,
        gt_path=gt_path,
        detections_dir=detections_dir,
        pair_list_path=pair_list_path,
        scheduler_mode=scheduler_mode,
        loss_mode=loss_mode,
        baseline_model=baseline_model,
        weights=weights,
        preset=preset,
        output_dir=out,
    )
    require(cfg, "features_path")

    table = ingest_measurements(cfg.profiles_path) if cfg.profiles_path else load_reference_profiles()
    cluster = table.cluster.with_links(cfg.link)
    classifier = None
    if cfg.scheduler_mode == "preclassified":
        require(cfg, "model_path")
        classifier = load_classifier(cfg.model_path)

    sizes, classes = load_task_meta(cfg.tasks_path) if cfg.tasks_path else (None, None)
    tasks = build_tasks(
        read_features_csv(cfg.features_path),
        gts=load_ground_truth(cfg.gt_path) if cfg.gt_path else None,
        detections=load_detections_dir(cfg.detections_dir) if cfg.detections_dir else None,
        task_classes=classes,
        sizes=sizes,
    )
    scheduler = Scheduler(
        table,
        mode=cfg.scheduler_mode,
        classifier=classifier,
        pair_list=read_pair_list(cfg.pair_list_path) if cfg.pair_list_path else None,
        loss_mode=cfg.loss_mode,
        class_aware=cfg.class_aware,
    )

    if cfg.weights is not None or cfg.preset is not None:
        strategies = [(cfg.strategy_name(), cfg.score_weights())]
    else:
        strategies = [(name, preset_weights(name, cfg.gamma)) for name in cfg.presets if name != BASELINE_PRESET]

    reports = {}
    for name, w in strategies:
        reports[name] = run(tasks, scheduler, cluster, w, cfg.constraints, cfg.fallback, preset_name=name)

    if cluster.local is not None:
        base = run(
            tasks,
            baseline_scheduler(table, cluster, cfg.baseline_model, cfg.loss_mode),
            cluster,
            preset_weights("balance"),
            Constraints(),
            "best-effort",
            preset_name=BASELINE_PRESET,
        )
        if base.n_tasks > base.n_failed:
            for name, report in reports.items():
                if report.n_tasks > report.n_failed:
                    reports[name] = report.model_copy(
                        update={"baseline": BASELINE_PRESET, "reduction_pct": reduction(report, base)}
                    )
        reports[BASELINE_PRESET] = base

    for name, report in reports.items():
        write_report(report, cfg.output_dir, name)
    write_json(cfg.output_dir / "summary.json", {name: r.summary() for name, r in reports.items()})

    print_table(
        "Simulation",
        ["strategy", "tasks", "failed", "mean time (s)", "mean energy (J)", "time -%", "energy -%"],
        [
            (
                name,
                r.n_tasks,
                r.n_failed,
                r.mean_time_s,
                r.mean_energy_j,
                r.reduction_pct["time"] if r.reduction_pct else None,
                r.reduction_pct["energy"] if r.reduction_pct else None,
            )
            for name, r in reports.items()
        ],
    )
    console.print(f"[green]Reports written to[/green] {cfg.output_dir}")

    failed = sum(r.n_failed for r in reports.values())
    if failed:
        raise click.ClickException(f"{failed} task runs could not be decided")
