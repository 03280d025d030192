"""Rich console rendering for the semica CLI."""
from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np
from rich.console import Console, Group
from rich.json import JSON
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .experiments import summarize
from .types import SweepRow, ValidationReport


def render_json_or_text(value: Any) -> JSON | Text:
    """Render value as Rich JSON or Text with fallback for edge cases."""
    if isinstance(value, str):
        return Text(value)
    try:
        return JSON.from_data(value)
    except (TypeError, ValueError):
        return Text(repr(value), style="dim")


def matrix_table(title: str, matrix: np.ndarray, *, row_prefix: str = "x") -> Table:
    table = Table(title=title, show_header=True, header_style="bold")
    table.add_column("")
    for j in range(matrix.shape[1]):
        table.add_column(str(j), justify="right")
    for i, row in enumerate(matrix):
        table.add_row(f"{row_prefix}{i}", *(f"{v: .4f}" for v in row))
    return table


def display_validation(console: Console, report: ValidationReport, *, title: str = "Model") -> None:
    if report.valid:
        body: Text | Group = Text("valid", style="green")
        style = "green"
    else:
        body = Group(*(Text(f"- {v}", style="red") for v in report.violations))
        style = "red"
    console.print(Panel(body, title=f"[bold]{title} validation[/bold]", border_style=style))


def display_result(console: Console, result: Any) -> None:
    """Estimated matrices, order, diagnostics and (if present) metrics."""
    console.print(matrix_table("B_hat", result.B_hat))
    console.print(matrix_table("A_hat", result.A_hat))
    details = {
        "causal_order": list(result.causal_order),
        "route": result.route,
        "targets": list(result.targets),
        "rank1_ratios": {str(k): v for k, v in result.rank1_ratios.items()},
        "objective_final": result.objective_final,
    }
    if result.metrics is not None:
        details["metrics"] = result.metrics.model_dump()
    console.print(Panel(render_json_or_text(details), title="[bold green]Recovery[/bold green]", border_style="green"))
    if result.flags:
        console.print(
            Panel(
                Group(*(Text(f"- {f}") for f in result.flags)),
                title="[bold yellow]Flags[/bold yellow]",
                border_style="yellow",
            )
        )


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.3g}"
    return str(value)


def display_summary(console: Console, rows: Sequence[SweepRow], *, title: str) -> None:
    """Median mse_B / mse_A per grid key, plus a count of failed cells."""
    summary = summarize(rows)
    table = Table(title=title, show_header=True, header_style="bold")
    for column in summary.columns:
        table.add_column(str(column), justify="right")
    for record in summary.itertuples(index=False):
        table.add_row(*(_fmt(v) for v in record))
    console.print(table)
    failed = sum(1 for row in rows if row.error)
    if failed:
        console.print(f"[yellow]{failed} of {len(rows)} cells failed; see the error column[/yellow]")
