"""
Rich terminal rendering for hogscan: settings, detections, reports, sweeps
and phase timings.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Sequence, Tuple

from rich import box
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from hogscan.detect import Detection
from hogscan.evaluation import EvalReport, SweepTable, percent

# Per-frame time of the real-time operating point the presets are modelled on.
REFERENCE_FRAME_MS = 135.0


def render_pairs(pairs: Iterable[Tuple[str, str]], title: str = "Configuration") -> Panel:
    """Render key-value pairs as a panel of ``key = value`` lines."""
    lines = [f"[cyan]{key}[/cyan] = {value}" for key, value in pairs]
    return Panel("\n".join(lines), title=f"[bold]{title}[/bold]", border_style="blue", expand=False)


def render_detections(detections: Sequence[Detection], image: str = "") -> Table:
    table = Table(
        title=f"[bold]Detections[/bold] {image}".rstrip(),
        box=box.ROUNDED,
        header_style="bold cyan",
    )
    table.add_column("#", justify="right", style="dim")
    table.add_column("x", justify="right")
    table.add_column("y", justify="right")
    table.add_column("w", justify="right")
    table.add_column("h", justify="right")
    table.add_column("Score", justify="right", style="magenta")
    table.add_column("Scale", justify="right", style="dim")
    for index, d in enumerate(detections):
        table.add_row(
            str(index), str(d.x), str(d.y), str(d.width), str(d.height), f"{d.score:.4f}", f"{d.scale:.3f}"
        )
    return table


def _report_row(report: EvalReport) -> List[str]:
    rate = percent(report.detection_rate)
    rate_style = "green" if rate >= 80 else "yellow" if rate >= 50 else "red"
    return [
        report.name or "-",
        str(report.images),
        str(report.targets),
        f"{report.detected_targets} [{rate_style}]({rate}%)[/{rate_style}]",
        f"{report.false_detections} ({percent(report.false_rate)}%)",
        f"{report.mean_ms_per_image:.1f}",
    ]


def render_reports(reports: Sequence[EvalReport], title: str = "Evaluation") -> Table:
    """Tabulate reports with the columns of a detection-rate table."""
    table = Table(title=f"[bold]{title}[/bold]", box=box.ROUNDED, header_style="bold cyan")
    table.add_column("Dataset")
    table.add_column("Images", justify="right")
    table.add_column("Targets", justify="right")
    table.add_column("Detected", justify="right")
    table.add_column("False detection", justify="right")
    table.add_column("ms / image", justify="right", style="dim")
    for report in reports:
        table.add_row(*_report_row(report))
    return table


def render_sweep(sweep: SweepTable) -> Table:
    table = Table(title=f"[bold]Sweep: {sweep.axis}[/bold]", box=box.ROUNDED, header_style="bold cyan")
    table.add_column(sweep.axis)
    table.add_column("Detection", justify="right")
    table.add_column("False positive", justify="right")
    table.add_column("Processing time (ms)", justify="right")
    for row in sweep.rows:
        r = row.report
        if r is None:
            table.add_row(row.value, f"[red]{escape(row.error or '')}[/red]", "", "")
            continue
        table.add_row(
            row.value,
            f"{r.detected_targets} ({percent(r.detection_rate)}%)",
            f"{r.false_detections} ({percent(r.false_rate)}%)",
            f"{r.mean_ms_per_image:.1f}",
        )
    return table


def render_phases(phases: Dict[str, float], title: str = "Timing (median ms)") -> Table:
    """Per-phase medians with the end-to-end total next to the reference frame time."""
    table = Table(title=f"[bold]{title}[/bold]", box=box.ROUNDED, header_style="bold cyan")
    table.add_column("Phase")
    table.add_column("ms", justify="right", style="magenta")
    for phase, ms in phases.items():
        if phase != "total":
            table.add_row(phase, f"{ms:.2f}")
    total = phases.get("total", sum(phases.values()))
    table.add_row("[bold]total[/bold]", f"[bold]{total:.2f}[/bold]")
    table.add_row("[dim]reference[/dim]", f"[dim]{REFERENCE_FRAME_MS:.0f}[/dim]")
    return table
