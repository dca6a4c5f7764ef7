import logging
import pathlib

import click

from ..simulator import check_claims, load_strategy_reference, reduction_pct
from ..utils.json_utils import read_json, write_json
from .cli_utils import console, error_boundary, out_option, print_table

logger = logging.getLogger(__name__)


@click.command("report")
@click.option(
    "--reference",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    default=None,
    help="Strategy table with quoted reductions (default: the shipped reference).",
)
@click.option(
    "--runs",
    type=click.Path(exists=True, file_okay=False, path_type=pathlib.Path),
    default=None,
    help="Output directory of a simulate run to summarize.",
)
@out_option
@error_boundary
def report(reference, runs, out):
    """Recompute strategy reductions and check quoted figures against them."""
    ref = load_strategy_reference(reference)
    base = ref.row(ref.baseline)
    strategies = [
        {
            "name": row.name,
            "time_s": row.time_s,
            "energy_j": row.energy_j,
            "time_reduction_pct": reduction_pct(row.time_s, base.time_s),
            "energy_reduction_pct": reduction_pct(row.energy_j, base.energy_j),
        }
        for row in ref.rows
    ]
    checks = check_claims(ref)

    print_table(
        f"Strategies vs {ref.baseline}",
        ["strategy", "time (s)", "energy (J)", "time -%", "energy -%"],
        [
            (s["name"], s["time_s"], s["energy_j"], s["time_reduction_pct"], s["energy_reduction_pct"])
            for s in strategies
        ],
    )
    print_table(
        "Quoted reductions",
        ["strategy", "metric", "quoted %", "recomputed %", "status"],
        [(c.name, c.metric, c.quoted, c.computed, "ok" if c.consistent else "FLAGGED") for c in checks],
    )

    document = {
        "baseline": ref.baseline,
        "strategies": strategies,
        "claims": [c.model_dump(mode="json") for c in checks],
    }
    if runs is not None:
        summary = read_json(runs / "summary.json")
        print_table(
            f"Simulated runs in {runs}",
            ["strategy", "tasks", "failed", "mean time (s)", "mean energy (J)", "time -%", "energy -%"],
            [
                (
                    name,
                    s["n_tasks"],
                    s["n_failed"],
                    s["mean_time_s"],
                    s["mean_energy_j"],
                    (s.get("reduction_pct") or {}).get("time"),
                    (s.get("reduction_pct") or {}).get("energy"),
                )
                for name, s in summary.items()
            ],
        )
        document["runs"] = summary

    if out is not None:
        write_json(out, document)
        console.print(f"[green]Wrote report to[/green] {out}")
