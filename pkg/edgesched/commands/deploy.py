import logging
import pathlib

import click

from ..profiles import ingest_measurements, load_reference_profiles
from ..scoring import deploy, write_pair_list
from .cli_utils import config_option, console, error_boundary, out_option, print_table, run_config, weights_options

logger = logging.getLogger(__name__)


def _split_names(value):
    return [v.strip() for v in value.split(",") if v.strip()] if value else None


@click.command("deploy")
@config_option
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path), default=None, help="Profile table (default: the shipped reference profiles).")
@click.option("--models", default=None, help="Comma-separated models to deploy (default: every measured model).")
@click.option("--platforms", default=None, help="Comma-separated platforms to consider (default: the whole cluster).")
@weights_options
@out_option
@error_boundary
def deploy_models(config_path, profiles_path, models, platforms, weights, preset, out):
    """Pick a hosting platform for every model and write the pair-list."""
    cfg = run_config(config_path, profiles_path=profiles_path, weights=weights, preset=preset, pair_list_path=out)
    table = ingest_measurements(cfg.profiles_path) if cfg.profiles_path else load_reference_profiles()

    model_names = _split_names(models) or table.measured_models()
    platform_names = _split_names(platforms) or list(table.cluster.platforms)
    pair_list = deploy(model_names, platform_names, table, cfg.score_weights())

    print_table("Pair-list", ["model", "platform"], list(pair_list.items()))
    if cfg.pair_list_path is not None:
        write_pair_list(cfg.pair_list_path, pair_list)
        console.print(f"[green]Wrote pair-list to[/green] {cfg.pair_list_path}")
