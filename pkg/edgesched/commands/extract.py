import logging
import pathlib

import click

from ..features import KEYPOINT_DETECTORS, extract_batch, list_images, write_features_csv
from .cli_utils import config_option, console, err_console, error_boundary, out_option, require, run_config

logger = logging.getLogger(__name__)


@click.command()
@config_option
@click.option(
    "--images",
    "-i",
    "images_dir",
    type=click.Path(exists=True, path_type=pathlib.Path),
    default=None,
    help="Image directory, or a text file listing one image path per line.",
)
@out_option
@click.option("--workers", type=click.IntRange(min=1), default=1, help="Extraction threads.")
@click.option(
    "--keypoints",
    type=click.Choice(sorted(KEYPOINT_DETECTORS)),
    default="sift",
    help="Key point detector counted by the kpNum feature.",
)
@click.option("--saturation", is_flag=True, default=False, help="Append the saturationMean feature.")
@error_boundary
def extract(config_path, images_dir, out, workers, keypoints, saturation):
    """Extract image-complexity features of every image into a CSV.

    One row per readable image, keyed by file stem, in file-name order.
    Unreadable images are listed on stderr and make the command fail after
    the readable rows have been written.
    """
    cfg = run_config(config_path, images_dir=images_dir, features_path=out)
    require(cfg, "images_dir")
    if cfg.features_path is None:
        raise click.UsageError("missing output: pass --out or set features_path in the run config")

    paths = list_images(cfg.images_dir)
    if not paths:
        raise click.ClickException(f"no images found in {cfg.images_dir}")

    rows, failures = extract_batch(paths, workers=workers, keypoints=keypoints, include_saturation=saturation)
    if rows:
        write_features_csv(cfg.features_path, rows)
        console.print(f"[green]Wrote {len(rows)} feature rows to[/green] {cfg.features_path}")

    if failures:
        for image_id, reason in failures:
            err_console.print(f"[red]{image_id}[/red]: {reason}")
        raise click.ClickException(f"{len(failures)} of {len(paths)} images could not be read")
