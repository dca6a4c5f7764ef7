import functools
import logging
import pathlib
from typing import Any, Iterable, Optional, Sequence, Tuple

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from ..classifier.mlp import MLPModel
from ..edgesched_config import RunConfig, load_run_config
from ..errors import ConfigError, EdgeSchedError
from ..simulator import PRESETS

console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else logging.INFO
    handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=False)
    root = logging.getLogger("edgesched")
    root.handlers = [handler]
    root.setLevel(level)
    root.propagate = False


def parse_weights(ctx, param, value) -> Optional[Tuple[float, float, float]]:
    """click callback for "a,b,g" weight triples."""
    if value is None:
        return None
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise click.BadParameter("expected three comma-separated numbers: alpha,beta,gamma")
    try:
        alpha, beta, gamma = (float(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"'{value}' is not a list of numbers")
    if min(alpha, beta, gamma) < 0 or abs(alpha + beta + gamma - 1.0) > 1e-9:
        raise click.BadParameter("weights must be non-negative and sum to 1")
    return alpha, beta, gamma


def config_option(f):
    return click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
        default=None,
        help="Run configuration file (TOML or JSON).",
    )(f)


def seed_option(f):
    return click.option("--seed", type=int, default=None, help="Seed for every random choice (default 0).")(f)


def out_option(f):
    return click.option(
        "--out",
        "-o",
        "out",
        type=click.Path(path_type=pathlib.Path),
        default=None,
        help="Output file or directory.",
    )(f)


def weights_options(f):
    f = click.option(
        "--preset",
        type=click.Choice(sorted(PRESETS)),
        default=None,
        help="Named weighting strategy.",
    )(f)
    f = click.option(
        "--weights",
        "-w",
        callback=parse_weights,
        default=None,
        help="Explicit weights alpha,beta,gamma (time, energy, loss).",
    )(f)
    return f


def error_boundary(f):
    """Turn library errors into clean click failures (exit code 1)."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except EdgeSchedError as e:
            raise click.ClickException(e.message) from e

    return wrapper


def run_config(config_path: Optional[pathlib.Path], **flags: Any) -> RunConfig:
    """RunConfig from --config and the command's flags (None flags leave lower layers alone)."""
    if flags.get("weights") is not None and flags.get("preset") is not None:
        raise click.UsageError("--weights and --preset are mutually exclusive")
    return load_run_config(config_path, overrides=flags)


def require(cfg: RunConfig, *names: str):
    """Fail with a usage error when a needed path is neither flagged nor configured."""
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        flags = ", ".join(f"--{n.replace('_path', '').replace('_dir', '').replace('_', '-')}" for n in missing)
        raise click.UsageError(f"missing {', '.join(missing)}: pass {flags} or set it in the run config")
    for n in names:
        path = getattr(cfg, n)
        if n != "output_dir" and not path.exists():
            raise click.UsageError(f"{n} '{path}' does not exist")


def load_classifier(path: pathlib.Path) -> MLPModel:
    """A trained pre-classifier that can normalize raw features itself."""
    model = MLPModel.load(path)
    if model.norm_stats is None:
        raise ConfigError(f"model {path} carries no normalization statistics: retrain it with `edgesched train`")
    return model


def print_table(title: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]):
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for col in columns:
        table.add_column(col, style="cyan")
    for row in rows:
        table.add_row(*[_cell(v) for v in row])
    console.print(table)


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)