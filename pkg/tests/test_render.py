"""Tests for report rendering and quotient summaries."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from engelnq import library
from engelnq.nq import nilpotent_quotient
from engelnq.render import quotient_summary, render_json, render_markdown, write_outputs
from engelnq.schemas import ExperimentReport
from engelnq.words import parse_presentation


@pytest.fixture
def report() -> ExperimentReport:
    r = ExperimentReport(id="demo", title="Demo run", strategy="gens+inverses", seed=3)
    r.check("order", 4, 4, provenance="table")
    r.check("class", 7, 8)
    r.record("exponent", [2, 4])
    r.timings = {"total": 1.25}
    r.checkpoints_used = [5]
    r.notes.append("first note")
    return r


class TestMarkdown:
    def test_header(self, report: ExperimentReport) -> None:
        md = render_markdown(report)
        assert md.startswith("# demo")
        assert "**Demo run**" in md
        assert "Result: **FAILED**" in md
        assert "Strategy: `gens+inverses`, seed `3`" in md

    def test_value_statuses(self, report: ExperimentReport) -> None:
        md = render_markdown(report)
        assert "| order | 4 | 4 | ok | table |" in md
        assert "| class | 7 | 8 | MISMATCH |  |" in md
        assert "| exponent | - | [2, 4] | recorded |  |" in md

    def test_sections(self, report: ExperimentReport) -> None:
        md = render_markdown(report)
        assert "## Timings" in md
        assert "- total: 1.25s" in md
        assert "Resumed from checkpoints at class 5" in md
        assert "## Notes" in md
        assert "- first note" in md

    def test_passed_without_extras(self) -> None:
        r = ExperimentReport(id="bare")
        r.check("x", 1, 1)
        md = render_markdown(r)
        assert "Result: **PASSED**" in md
        assert "## Timings" not in md
        assert "## Notes" not in md


class TestJson:
    def test_aliases(self, report: ExperimentReport) -> None:
        data = json.loads(render_json(report))
        assert data["schema"] == 1
        assert data["checkpointsUsed"] == [5]
        assert data["passed"] is False
        assert len(data["values"]) == 3

    def test_write_outputs(self, report: ExperimentReport, tmp_path: Path) -> None:
        md_path, json_path = write_outputs(report, output_dir=str(tmp_path / "out"))
        assert md_path == tmp_path / "out" / "demo.md"
        assert json_path == tmp_path / "out" / "demo.json"
        assert md_path.read_text(encoding="utf-8").startswith("# demo")
        assert json.loads(json_path.read_text(encoding="utf-8"))["id"] == "demo"


class TestQuotientSummary:
    def test_dihedral(self) -> None:
        fp = parse_presentation("generators a, b\nrelators a^2, b^2, (a*b)^8\n")
        summary = quotient_summary(nilpotent_quotient(fp), cache_key="abc")
        assert summary.class_ == 3
        assert summary.generators == 4
        assert summary.layer_ranks == [2, 1, 1]
        assert summary.section_exponents == [2, 2, 2]
        assert summary.section_invariants[0] == [2, 2]
        assert summary.relative_orders == [2, 2, 2, 2]
        assert summary.stable
        assert summary.cache_key == "abc"

    def test_free_sections_have_no_exponent(self) -> None:
        summary = quotient_summary(nilpotent_quotient(library.get("F2"), 2), consistency_ok=False)
        assert summary.section_exponents == [None, None]
        assert summary.relative_orders == [None, None, None]
        assert not summary.stable
        data = json.loads(summary.model_dump_json(by_alias=True))
        assert data["class"] == 2
        assert data["consistencyOk"] is False
