"""Render experiment reports and quotient summaries to Markdown and JSON."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from engelnq.nq import NqState
from engelnq.schemas import ExperimentReport, QuotientSummary
from engelnq.structure import section_invariants

logger = logging.getLogger(__name__)


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value)


def render_markdown(report: ExperimentReport) -> str:
    """Render an experiment report as a human-readable Markdown document."""
    lines: list[str] = []

    lines.append(f"# {report.id}")
    if report.title:
        lines.append(f"**{report.title}**")
    lines.append("")
    lines.append(f"Result: **{'PASSED' if report.passed else 'FAILED'}**")
    lines.append(f"Generated: {report.generated_at.strftime('%Y-%m-%d %H:%M UTC')}")
    lines.append(f"Strategy: `{report.strategy}`, seed `{report.seed}`")
    if report.inputs:
        lines.append("Inputs: " + ", ".join(f"`{k}={v}`" for k, v in report.inputs.items()))
    lines.append("")

    lines.append("## Values")
    lines.append("")
    lines.append("| value | expected | computed | status | source |")
    lines.append("|---|---|---|---|---|")
    for v in report.values:
        status = "ok" if v.passed else "MISMATCH"
        if v.expected is None and v.passed:
            status = "recorded"
        lines.append(
            f"| {v.name} | {_fmt(v.expected)} | {_fmt(v.computed)} | {status} | {v.provenance} |"
        )
    lines.append("")

    if report.timings:
        lines.append("## Timings")
        lines.append("")
        for phase, seconds in report.timings.items():
            lines.append(f"- {phase}: {seconds:.2f}s")
        lines.append("")

    if report.checkpoints_used:
        lines.append(
            "Resumed from checkpoints at class " + ", ".join(map(str, report.checkpoints_used))
        )
        lines.append("")

    if report.notes:
        lines.append("## Notes")
        for note in report.notes:
            lines.append(f"- {note}")
        lines.append("")

    return "\n".join(lines)


def render_json(report: ExperimentReport) -> str:
    return report.model_dump_json(indent=2, by_alias=True)


def write_outputs(report: ExperimentReport, output_dir: str = "./out") -> tuple[Path, Path]:
    """Write ``<id>.md`` and ``<id>.json`` to the output directory."""
    out_path = Path(output_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    md_path = out_path / f"{report.id}.md"
    json_path = out_path / f"{report.id}.json"

    md_path.write_text(render_markdown(report), encoding="utf-8")
    json_path.write_text(render_json(report), encoding="utf-8")

    logger.info("Wrote report to %s", md_path)
    logger.info("Wrote report JSON to %s", json_path)

    return md_path, json_path


def quotient_summary(state: NqState, consistency_ok: bool = True, cache_key: str = "") -> QuotientSummary:
    """Class, layer ranks and section invariants of a computed quotient."""
    P = state.pcp
    invariants = [section_invariants(P, k) for k in range(1, P.nilpotency_class + 1)]
    return QuotientSummary(
        class_=P.nilpotency_class,
        generators=P.n,
        layer_ranks=state.layer_ranks(),
        section_exponents=[None if s.free_rank else s.exponent for s in invariants],
        section_invariants=[list(s.divisors) for s in invariants],
        relative_orders=list(P.orders),
        stable=state.stable,
        consistency_ok=consistency_ok,
        cache_key=cache_key,
    )
