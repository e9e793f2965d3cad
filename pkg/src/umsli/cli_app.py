import importlib
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from umsli import __version__

app = typer.Typer(
    add_completion=False,
    help="Friendly interface for the umsli benchmarks and environment checks.",
)

REQUIRED_MODULES = (
    "numpy",
    "scipy",
    "skimage",
    "sklearn",
    "PIL",
    "filterpy",
    "tomli_w",
)


@app.callback()
def _root(
    version: bool = typer.Option(False, "--version", help="Show umsli version and exit."),
):
    if version:
        print(__version__)
        raise typer.Exit(0)


@app.command("doctor")
def cmd_doctor(
    config: Optional[str] = typer.Option(None, "--config", help="Config file to validate."),
) -> None:
    """Check that the runtime stack imports and the configuration validates."""
    from umsli.config import load_config
    from umsli.errors import UmsliError
    from umsli.pipeline import PipelineConfig

    console = Console()
    table = Table(title="umsli doctor")
    table.add_column("check")
    table.add_column("status")
    table.add_column("detail")
    failed = False
    for name in REQUIRED_MODULES:
        try:
            module = importlib.import_module(name)
        except ImportError as exc:
            failed = True
            table.add_row(name, "[red]missing[/red]", str(exc))
            continue
        table.add_row(name, "[green]ok[/green]", str(getattr(module, "__version__", "")))
    try:
        cfg = load_config(Path.cwd(), config)
        PipelineConfig.from_mapping(cfg).validate()
        table.add_row("config", "[green]ok[/green]", cfg.get("_path", "built-in defaults"))
    except UmsliError as exc:
        failed = True
        table.add_row("config", "[red]invalid[/red]", str(exc))
    console.print(table)
    raise typer.Exit(1 if failed else 0)


bench_app = typer.Typer(help="Run synthetic benchmarks")
app.add_typer(bench_app, name="bench")


@bench_app.command("detect")
def bench_detect(
    scenes: int = typer.Option(50, "--scenes", help="Number of random scenes."),
    seed: int = typer.Option(0, "--seed"),
    alpha: float = typer.Option(4.0, "--alpha"),
) -> None:
    """Gamma-kernel detector on a generated corpus (pooled PR/ROC)."""
    from umsli.metrics import benchmark_detector

    console = Console()
    result = benchmark_detector(scenes, seed, alpha=alpha)
    report = result.report
    table = Table(title=f"detector, {scenes} scenes, seed {seed}")
    for column in ("AUC", "AUC (rank)", "F-measure", "s/image"):
        table.add_column(column, justify="right")
    table.add_row(
        f"{report.auc:.4f}",
        f"{report.auc_rank:.4f}" if report.auc_rank is not None else "",
        f"{report.f_measure:.4f}",
        f"{result.seconds_per_image:.4f}",
    )
    console.print(table)


@bench_app.command("classify")
def bench_classify(
    per_class: int = typer.Option(20, "--per-class", help="Templates per class."),
    queries: int = typer.Option(50, "--queries", help="Queries per class."),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Three-class synthetic silhouette benchmark."""
    from umsli.classify import classification_benchmark

    console = Console()
    summary = classification_benchmark(per_class, queries, seed)
    table = Table(title=f"classification, seed {seed}")
    table.add_column("class")
    table.add_column("rate", justify="right")
    for name, rate in zip(summary.confusion.classes, summary.confusion.rates):
        table.add_row(name, f"{rate:.4f}")
    table.add_row("[bold]all[/bold]", f"{summary.accuracy:.4f}")
    table.add_row("descriptor only", f"{summary.descriptor_only_accuracy:.4f}")
    console.print(table)


@bench_app.command("select")
def bench_select(
    seeds: int = typer.Option(10, "--seeds", help="Seeds 0..N-1."),
    per_class: int = typer.Option(40, "--per-class"),
    n: int = typer.Option(10, "--n", help="Templates kept per class."),
) -> None:
    """Per-seed accuracy of DTG, k-means and random template selections."""
    from scipy.stats import binomtest

    from umsli.dtg import selection_benchmark

    console = Console()
    outcomes = selection_benchmark(tuple(range(seeds)), per_class=per_class, n=n)
    table = Table(title="template selection")
    table.add_column("seed", justify="right")
    for method in ("dtg", "kmeans", "random"):
        table.add_column(method, justify="right")
    for outcome in outcomes:
        table.add_row(str(outcome.seed), *(f"{outcome.accuracy[m]:.4f}" for m in ("dtg", "kmeans", "random")))
    console.print(table)

    wins = sum(o.accuracy["dtg"] > o.accuracy["random"] for o in outcomes)
    losses = sum(o.accuracy["dtg"] < o.accuracy["random"] for o in outcomes)
    if wins + losses:
        p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
        console.print(f"[INFO] DTG beats random in {wins}/{wins + losses} untied seeds, sign test p={p:.4f}")
    beats_kmeans = sum(o.accuracy["dtg"] >= o.accuracy["kmeans"] for o in outcomes)
    console.print(f"[INFO] DTG >= k-means in {beats_kmeans}/{len(outcomes)} seeds")


def main() -> None:  # console_scripts entrypoint expects this
    app()
