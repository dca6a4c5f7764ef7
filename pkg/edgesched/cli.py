import click

from . import __version__
from .commands.cli_utils import setup_logging
from .commands.deploy import deploy_models
from .commands.extract import extract
from .commands.labels import gen_labels
from .commands.report import report
from .commands.schedule import schedule_task
from .commands.simulate import simulate
from .commands.train import train_model
from .edgesched_config import config


@click.group()
@click.version_option(__version__, prog_name="edgesched")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Log at DEBUG level.")
def cli(verbose):
    """
    Schedule object-detection tasks across an edge cluster.

    \b
    Pipeline:
      extract     image-complexity features of every image
      gen-labels  best model per image from detections and ground truth
      train       the pre-classifier on features and labels
      deploy      a hosting platform for every model (the pair-list)
      schedule    model and platform for one image
      simulate    replay all tasks under each strategy and the baseline
      report      reductions and quoted-figure checks
    """
    setup_logging(verbose)


cli.add_command(extract, "extract")
cli.add_command(gen_labels, "gen-labels")
cli.add_command(train_model, "train")
cli.add_command(deploy_models, "deploy")
cli.add_command(schedule_task, "schedule")
cli.add_command(simulate, "simulate")
cli.add_command(report, "report")
cli.add_command(config, "config")

if __name__ == "__main__":
    cli()
