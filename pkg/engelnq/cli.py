"""CLI entrypoint for engelnq."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from engelnq.config import load_config
from engelnq.schemas import InstantiationMode

app = typer.Typer(
    name="engelnq",
    help="Nilpotent quotients of groups with Engel laws, and the computations built on them.",
    add_completion=False,
)
cache_app = typer.Typer(help="Inspect or clear the checkpoint cache.", add_completion=False)
app.add_typer(cache_app, name="cache")

console = Console(stderr=True)

EXIT_INPUT = 1
EXIT_COMPUTATION = 2
EXIT_BUDGET = 3
EXIT_MISMATCH = 4


def _setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=True)],
    )


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map library errors to the documented exit codes."""
    from engelnq.experiments import ExperimentError
    from engelnq.nq import BudgetExceededError
    from engelnq.pcp import PcPresentationError
    from engelnq.words import EngelNqError, PresentationError

    try:
        yield
    except BudgetExceededError as e:
        console.print(f"[yellow]Budget exceeded: {e}[/yellow]")
        if e.checkpoint_key:
            console.print(f"  checkpoint {e.checkpoint_key} retained at class {e.last_class}")
        raise typer.Exit(EXIT_BUDGET)
    except (PresentationError, PcPresentationError, ExperimentError, ValidationError, OSError) as e:
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(EXIT_INPUT)
    except EngelNqError as e:
        console.print(f"[red]Computation failed: {e}[/red]")
        raise typer.Exit(EXIT_COMPUTATION)


def _overrides(
    cache: str | None = None,
    threads: int | None = None,
    seed: int | None = None,
    max_class: int | None = None,
    timeout: float | None = None,
    strategy: InstantiationMode | None = None,
    inverses: bool | None = None,
    output_dir: str | None = None,
) -> dict[str, Any]:
    return {
        "cache_dir": cache,
        "threads": threads,
        "seed": seed,
        "max_class": max_class,
        "timeout_seconds": timeout,
        "output_dir": output_dir,
        "strategy": {"mode": strategy.value if strategy else None, "include_inverses": inverses},
    }


def _load_pcp(path: str) -> Any:
    """A pc presentation file, or an NQ checkpoint whose presentation is used."""
    from engelnq.nq import NqState
    from engelnq.pcp import PcPresentation, PcPresentationError

    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise PcPresentationError(f"{path} is not JSON: {e}") from e
    if isinstance(raw, dict) and "currentClass" in raw:
        return NqState.from_json(text).pcp
    return PcPresentation.from_json(text)


# ---------------------------------------------------------------------------
# quotient
# ---------------------------------------------------------------------------

@app.command()
def quotient(
    file: str = typer.Argument(..., help="Presentation file in the input grammar"),
    max_class: Optional[int] = typer.Option(None, "--class", "-c", help="Maximal class"),
    strategy: Optional[InstantiationMode] = typer.Option(None, "--strategy", help="Instantiation mode"),
    inverses: Optional[bool] = typer.Option(None, "--inverses/--no-inverses", help="Also instantiate inverses"),
    threads: Optional[int] = typer.Option(None, "--threads", "-j", help="Worker processes"),
    cache: Optional[str] = typer.Option(None, "--cache", help="Checkpoint directory"),
    no_cache: bool = typer.Option(False, "--no-cache", help="Do not read or write checkpoints"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for random law checks"),
    timeout: Optional[float] = typer.Option(None, "--timeout", help="Wall-clock limit in seconds"),
    output: Optional[str] = typer.Option(None, "--output", "-o", help="Write the full pc presentation JSON here"),
    config_file: str = typer.Option(None, "--config", help="Path to config YAML"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Compute the largest nilpotent quotient of a finitely presented group."""
    _setup_logging(verbose)

    with _exit_codes():
        cfg = load_config(
            config_path=config_file,
            overrides=_overrides(cache, threads, seed, max_class, timeout, strategy, inverses),
        )

        from engelnq.nq import nilpotent_quotient
        from engelnq.render import quotient_summary
        from engelnq.store import CheckpointStore
        from engelnq.words import format_presentation, parse_presentation

        fp = parse_presentation(Path(file).read_text(encoding="utf-8"))
        store = None if no_cache else CheckpointStore(cfg.cache_dir)
        key = store.key_for(format_presentation(fp), cfg.strategy) if store else ""
        try:
            with console.status(f"Computing nilpotent quotient of {fp.name or file}..."):
                state = nilpotent_quotient(
                    fp,
                    cfg.max_class,
                    cfg.strategy,
                    store=store,
                    label=fp.name or Path(file).stem,
                    threads=cfg.threads,
                    seed=cfg.seed,
                    law_samples=cfg.random_law_samples,
                    step_budget=cfg.step_budget,
                    timeout=cfg.timeout_seconds,
                    verify=cfg.verify_consistency,
                )
        finally:
            if store is not None:
                store.close()

        violations = state.pcp.consistency_check(weighted=True) if cfg.verify_consistency else []
        summary = quotient_summary(state, not violations, key)

    table = Table(title=f"Nilpotent quotient of {fp.name or file}")
    table.add_column("Class", justify="right", style="cyan")
    table.add_column("Rank", justify="right")
    table.add_column("Invariants", style="green")
    for k, (rank, inv) in enumerate(zip(summary.layer_ranks, summary.section_invariants), start=1):
        table.add_row(str(k), str(rank), " ".join(str(d) for d in inv if d != 1) or "-")
    console.print(table)
    if state.law_check_failures:
        console.print(
            f"[yellow]Random law check failed at classes {list(state.law_check_failures)}[/yellow]"
        )

    if output:
        Path(output).write_text(state.pcp.to_json(), encoding="utf-8")
        console.print(f"[green]Presentation written to {output}[/green]")
    typer.echo(summary.model_dump_json(indent=2, by_alias=True))
    if not summary.consistency_ok:
        raise typer.Exit(EXIT_COMPUTATION)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

@app.command("eval")
def eval_(
    pcp_file: str = typer.Argument(..., help="Pc presentation JSON (or a checkpoint)"),
    expression: str = typer.Argument(..., help="Word over the generator names, e.g. '[a^-1; c, c, c]'"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Normal form, order and weight of an element."""
    _setup_logging(verbose)

    from engelnq.schemas import EvalResult
    from engelnq.words import parse_word

    with _exit_codes():
        P = _load_pcp(pcp_file)
        names = list(P.generator_names)
        w = parse_word(expression, names)
        value = P.evaluate_epimorphism(w, names)
        result = EvalResult(normal_form=list(value), order=P.order(value), weight=P.weight_of(value))
    typer.echo(result.model_dump_json(indent=2, by_alias=True))


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

@app.command()
def check(
    pcp_file: str = typer.Argument(..., help="Pc presentation JSON (or a checkpoint)"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Run the consistency test words on a pc presentation."""
    _setup_logging(verbose)

    from engelnq.schemas import CheckResult

    with _exit_codes():
        P = _load_pcp(pcp_file)
        with console.status(f"Checking {P.n} generators..."):
            violations = P.consistency_check()
    result = CheckResult(consistent=not violations, violations=[str(v) for v in violations])
    typer.echo(result.model_dump_json(indent=2, by_alias=True))
    if violations:
        raise typer.Exit(EXIT_COMPUTATION)


# ---------------------------------------------------------------------------
# repro
# ---------------------------------------------------------------------------

@app.command()
def repro(
    experiment_id: str = typer.Argument(..., help="Experiment id (see 'engelnq experiments')"),
    long: bool = typer.Option(False, "--long", help="Allow long-running experiments"),
    n: Optional[int] = typer.Option(None, "--n", help="Degree for parametrised experiments"),
    threads: Optional[int] = typer.Option(None, "--threads", "-j", help="Worker processes"),
    cache: Optional[str] = typer.Option(None, "--cache", help="Checkpoint directory"),
    no_cache: bool = typer.Option(False, "--no-cache", help="Do not read or write checkpoints"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for random checks"),
    timeout: Optional[float] = typer.Option(None, "--timeout", help="Wall-clock limit per quotient"),
    output_dir: Optional[str] = typer.Option(None, "--output-dir", "-o", help="Write Markdown + JSON report here"),
    config_file: str = typer.Option(None, "--config", help="Path to config YAML"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Run a registered experiment and compare against its expected values."""
    _setup_logging(verbose)

    with _exit_codes():
        cfg = load_config(
            config_path=config_file,
            overrides=_overrides(cache, threads, seed, timeout=timeout, output_dir=output_dir),
        )

        from engelnq.experiments import run_experiment
        from engelnq.store import CheckpointStore

        store = None if no_cache else CheckpointStore(cfg.cache_dir)
        try:
            with console.status(f"Running {experiment_id}..."):
                report = run_experiment(
                    experiment_id,
                    cfg,
                    store=store,
                    allow_long=long,
                    params={"n": n} if n is not None else None,
                )
        finally:
            if store is not None:
                store.close()

    table = Table(title=f"{report.id}: {report.title}")
    table.add_column("Value", style="cyan")
    table.add_column("Expected", justify="right")
    table.add_column("Computed", justify="right")
    table.add_column("", justify="center")
    for v in report.values:
        mark = "[green]ok[/green]" if v.passed else "[red]MISMATCH[/red]"
        table.add_row(v.name, "" if v.expected is None else str(v.expected), str(v.computed), mark)
    console.print(table)

    if output_dir:
        from engelnq.render import write_outputs

        md_path, json_path = write_outputs(report, output_dir=cfg.output_dir)
        console.print(f"[green]Report written to {md_path}[/green]")
        console.print(f"[green]JSON written to {json_path}[/green]")

    # wall-clock fields stay in the written report only
    typer.echo(
        report.model_dump_json(indent=2, by_alias=True, exclude={"generated_at", "timings"})
    )
    if not report.passed:
        raise typer.Exit(EXIT_MISMATCH)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@app.command()
def experiments() -> None:
    """List the registered experiments and their expected values."""
    from engelnq.experiments import expected_summary, list_experiments

    table = Table(title="Experiments")
    table.add_column("Id", style="cyan")
    table.add_column("Long", justify="center")
    table.add_column("Title")
    table.add_column("Expected", style="green")
    for exp in list_experiments():
        table.add_row(exp.id, "yes" if exp.long else "", exp.title, expected_summary(exp))
    console.print(table)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

@cache_app.command("list")
def cache_list(
    cache: Optional[str] = typer.Option(None, "--cache", help="Checkpoint directory"),
    config_file: str = typer.Option(None, "--config", help="Path to config YAML"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """List cached runs."""
    _setup_logging(verbose)

    from engelnq.store import CheckpointStore

    with _exit_codes():
        cfg = load_config(config_path=config_file, overrides={"cache_dir": cache})
        with CheckpointStore(cfg.cache_dir) as store:
            runs = store.list_runs()

    if not runs:
        console.print(f"[yellow]No cached runs in {cfg.cache_dir}[/yellow]")
        return
    table = Table(title=f"Cached runs ({len(runs)})")
    table.add_column("Key", style="cyan")
    table.add_column("Label")
    table.add_column("Class", justify="right")
    table.add_column("Status")
    table.add_column("Updated")
    for r in runs:
        table.add_row(r["key"], r["label"], str(r["highest_class"]), r["status"], r["updated_at"] or "")
    console.print(table)


@cache_app.command("clear")
def cache_clear(
    key: Optional[str] = typer.Argument(None, help="Run key; all runs when omitted"),
    cache: Optional[str] = typer.Option(None, "--cache", help="Checkpoint directory"),
    config_file: str = typer.Option(None, "--config", help="Path to config YAML"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    """Delete cached checkpoints."""
    _setup_logging(verbose)

    from engelnq.store import CheckpointStore

    with _exit_codes():
        cfg = load_config(config_path=config_file, overrides={"cache_dir": cache})
        with CheckpointStore(cfg.cache_dir) as store:
            removed = store.clear(key)
    console.print(f"[green]Removed {removed} run(s) from {cfg.cache_dir}[/green]")


if __name__ == "__main__":
    app()
