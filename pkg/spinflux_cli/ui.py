import logging

import rich.box as box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

console = Console()
err_console = Console(stderr=True)


def setup_logging(level: str) -> None:
    """Route library logging through Rich; numba stays quiet below WARNING."""
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, rich_tracebacks=False, show_path=False)],
        force=True,
    )
    logging.getLogger("numba").setLevel(logging.WARNING)


def format_verdict(passed: bool) -> str:
    return "[bold green]PASS[/bold green]" if passed else "[bold red]FAIL[/bold red]"


def format_value(value) -> str:
    if value is None:
        return "[dim]-[/dim]"
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


def format_witnesses(witnesses, limit: int = 3) -> str:
    if not witnesses:
        return "[dim]none[/dim]"
    lines = [f"[yellow]•[/yellow] {w}" for w in list(witnesses)[:limit]]
    if len(witnesses) > limit:
        lines.append(f"[dim]… {len(witnesses) - limit} more[/dim]")
    return "\n".join(lines)


def build_validation_table(model_name: str) -> Table:
    table = Table(
        title=f"Rate conditions: {model_name}",
        show_header=True,
        header_style="bold cyan",
        box=box.MINIMAL_DOUBLE_HEAD,
        expand=True,
    )
    table.add_column("Condition", style="dim", width=12)
    table.add_column("Verdict", justify="center", width=8)
    table.add_column("Detail", width=28)
    table.add_column("Witnesses")
    return table


def build_irreducibility_table() -> Table:
    table = Table(title="Irreducibility (finite certificates)", header_style="bold cyan",
                  box=box.MINIMAL_HEAVY_HEAD)
    table.add_column("Sites", justify="right")
    table.add_column("Classes", justify="right")
    table.add_column("Failing", justify="right", style="red")
    table.add_column("Verdict", justify="center")
    return table


def build_certification_table(model_name: str) -> Table:
    table = Table(
        title=f"Certification: {model_name}",
        show_header=True,
        header_style="bold cyan",
        box=box.MINIMAL_DOUBLE_HEAD,
        expand=True,
    )
    table.add_column("Check", width=24)
    table.add_column("Verdict", justify="center", width=8)
    table.add_column("Value", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Note")
    return table


def build_convergence_table(n_cons: int) -> Table:
    table = Table(title="Hydrodynamic convergence", header_style="bold cyan", box=box.MINIMAL_HEAVY_HEAD)
    table.add_column("N", justify="right")
    table.add_column("l", justify="right")
    table.add_column("Replicas", justify="right")
    for i in range(n_cons):
        table.add_column(f"L1 u_{i + 1}", justify="right")
    return table


def render_verdict(title: str, passed: bool, lines: list[str]) -> None:
    """Bold summary panel printed after a pipeline finishes."""
    color = "green" if passed else "red"
    label = "ALL CHECKS PASSED" if passed else "CHECKS FAILED"
    icon = "🟢" if passed else "🔴"
    body = f"[bold {color}]{icon}  VERDICT: {label}[/bold {color}]\n\n" + "\n".join(f"  {line}" for line in lines)
    console.print()
    console.print(Panel(body, title=f"[bold]{title}[/bold]", border_style=color, expand=False, padding=(1, 4)))
    console.print()


def progress_bar(disable: bool = False) -> Progress:
    """Spinner on stderr; disable it when data is streamed to stdout."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        TimeElapsedColumn(),
        console=err_console,
        transient=True,
        disable=disable,
    )
