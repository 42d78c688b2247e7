"""Tests for the command-line interface."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest
from rich.console import Console
from typer.testing import CliRunner

from engelnq import cli
from engelnq.cli import app
from engelnq.experiments import REGISTRY, Expected, Experiment, ExperimentContext
from engelnq.pcp import PcPresentation
from engelnq.schemas import ExperimentReport

runner = CliRunner()

DIHEDRAL = "group D16\ngenerators a, b\nrelators a^2, b^2, (a*b)^8\n"


def _json_text(output: str) -> str:
    """The JSON document echoed last, after any tables on stderr."""
    lines = output.splitlines()
    start = max(i for i, line in enumerate(lines) if line == "{")
    return "\n".join(lines[start:])


def _json_tail(output: str) -> Any:
    return json.loads(_json_text(output))


@pytest.fixture(autouse=True)
def wide_console(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setattr(cli, "console", Console(stderr=True, width=200))
    for var in ("ENGELNQ_CACHE", "ENGELNQ_THREADS", "ENGELNQ_SEED"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def dihedral_file(tmp_path: Path) -> Path:
    path = tmp_path / "d16.txt"
    path.write_text(DIHEDRAL, encoding="utf-8")
    return path


def _toy(ctx: ExperimentContext, report: ExperimentReport) -> None:
    report.record("answer", 42)


class TestQuotient:
    def test_summary(self, dihedral_file: Path) -> None:
        result = runner.invoke(app, ["quotient", str(dihedral_file), "--no-cache"])
        assert result.exit_code == 0, result.output
        data = _json_tail(result.output)
        assert data["class"] == 3
        assert data["layerRanks"] == [2, 1, 1]
        assert data["stable"] is True
        assert data["consistencyOk"] is True
        assert data["cacheKey"] == ""

    def test_class_cap(self, tmp_path: Path) -> None:
        path = tmp_path / "f2.txt"
        path.write_text("generators a, b\nrelators\n", encoding="utf-8")
        result = runner.invoke(app, ["quotient", str(path), "--class", "3", "--no-cache"])
        assert result.exit_code == 0, result.output
        data = _json_tail(result.output)
        assert data["layerRanks"] == [2, 1, 2]
        assert data["sectionExponents"] == [None, None, None]
        assert data["stable"] is False

    def test_parse_error(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.txt"
        path.write_text("generators a\nrelators [a b]\n", encoding="utf-8")
        result = runner.invoke(app, ["quotient", str(path), "--no-cache"])
        assert result.exit_code == 1

    def test_missing_file(self, tmp_path: Path) -> None:
        result = runner.invoke(app, ["quotient", str(tmp_path / "nope.txt"), "--no-cache"])
        assert result.exit_code == 1

    def test_budget_exit_code(self, tmp_path: Path) -> None:
        path = tmp_path / "f2.txt"
        path.write_text("generators a, b\nrelators\n", encoding="utf-8")
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("step_budget: 2\n", encoding="utf-8")
        result = runner.invoke(
            app, ["quotient", str(path), "--config", str(cfg), "--cache", str(tmp_path / "c")]
        )
        assert result.exit_code == 3
        assert "Budget exceeded" in result.output

    def test_cache_round_trip(self, dihedral_file: Path, tmp_path: Path) -> None:
        cache = str(tmp_path / "cache")
        result = runner.invoke(app, ["quotient", str(dihedral_file), "--cache", cache])
        assert result.exit_code == 0, result.output
        key = _json_tail(result.output)["cacheKey"]
        assert len(key) == 16

        listed = runner.invoke(app, ["cache", "list", "--cache", cache])
        assert listed.exit_code == 0
        assert key in listed.output
        assert "D16" in listed.output

        cleared = runner.invoke(app, ["cache", "clear", key, "--cache", cache])
        assert cleared.exit_code == 0
        assert "Removed 1 run(s)" in cleared.output
        empty = runner.invoke(app, ["cache", "list", "--cache", cache])
        assert "No cached runs" in empty.output

    def test_cache_commands_map_config_errors(self, tmp_path: Path) -> None:
        bad = tmp_path / "bad.yaml"
        bad.write_text("random_law_samples: -1\n", encoding="utf-8")
        for command in (["cache", "list"], ["cache", "clear"]):
            result = runner.invoke(app, [*command, "--config", str(bad), "-v"])
            assert result.exit_code == 1
            assert "Error" in result.output


class TestEvalAndCheck:
    @pytest.fixture
    def pcp_file(self, dihedral_file: Path, tmp_path: Path) -> Path:
        out = tmp_path / "d16.json"
        result = runner.invoke(
            app, ["quotient", str(dihedral_file), "--no-cache", "--output", str(out)]
        )
        assert result.exit_code == 0, result.output
        return out

    def test_eval(self, pcp_file: Path) -> None:
        result = runner.invoke(app, ["eval", str(pcp_file), "a*b"])
        assert result.exit_code == 0, result.output
        data = _json_tail(result.output)
        assert data["order"] == 8
        assert data["weight"] == 1
        assert len(data["normalForm"]) == 4

    def test_eval_commutator(self, pcp_file: Path) -> None:
        result = runner.invoke(app, ["eval", str(pcp_file), "[a, b, b, b]"])
        assert result.exit_code == 0, result.output
        data = _json_tail(result.output)
        assert data["normalForm"] == [0, 0, 0, 0]
        assert data["order"] == 1

    def test_eval_unknown_name(self, pcp_file: Path) -> None:
        result = runner.invoke(app, ["eval", str(pcp_file), "a*z"])
        assert result.exit_code == 1

    def test_check_consistent(self, pcp_file: Path) -> None:
        result = runner.invoke(app, ["check", str(pcp_file)])
        assert result.exit_code == 0, result.output
        assert _json_tail(result.output) == {"schema": 1, "consistent": True, "violations": []}

    def test_check_inconsistent(self, tmp_path: Path) -> None:
        bad = PcPresentation(weights=(1, 1, 2), orders=(2, None, None), conj_tails={(0, 1): ((2, 1),)})
        path = tmp_path / "bad.json"
        path.write_text(bad.to_json(), encoding="utf-8")
        result = runner.invoke(app, ["check", str(path)])
        assert result.exit_code == 2
        data = _json_tail(result.output)
        assert data["consistent"] is False
        assert data["violations"]

    def test_check_not_json(self, tmp_path: Path) -> None:
        path = tmp_path / "x.json"
        path.write_text("not json", encoding="utf-8")
        assert runner.invoke(app, ["check", str(path)]).exit_code == 1


class TestRepro:
    def test_unknown_experiment(self) -> None:
        result = runner.invoke(app, ["repro", "no-such-thing", "--no-cache"])
        assert result.exit_code == 1
        assert "unknown experiment" in result.output

    def test_passing_run_writes_report(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        exp = Experiment("toy", "Toy", _toy, {"answer": Expected(42)})
        monkeypatch.setitem(REGISTRY, exp.id, exp)
        out = tmp_path / "reports"
        result = runner.invoke(app, ["repro", "toy", "--no-cache", "--output-dir", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "toy.md").exists()
        assert json.loads((out / "toy.json").read_text(encoding="utf-8"))["passed"] is True

    def test_mismatch_exit_code(self, monkeypatch: pytest.MonkeyPatch) -> None:
        exp = Experiment("toy", "Toy", _toy, {"answer": Expected(41)})
        monkeypatch.setitem(REGISTRY, exp.id, exp)
        result = runner.invoke(app, ["repro", "toy", "--no-cache"])
        assert result.exit_code == 4
        assert _json_tail(result.output)["passed"] is False

    def test_stdout_is_reproducible(self, monkeypatch: pytest.MonkeyPatch) -> None:
        exp = Experiment("toy", "Toy", _toy, {"answer": Expected(42)})
        monkeypatch.setitem(REGISTRY, exp.id, exp)
        first = runner.invoke(app, ["repro", "toy", "--no-cache", "--seed", "3"])
        second = runner.invoke(app, ["repro", "toy", "--no-cache", "--seed", "3"])
        assert first.exit_code == 0, first.output
        assert _json_text(first.output) == _json_text(second.output)
        document = _json_tail(first.output)
        assert "timings" not in document
        assert "generatedAt" not in document
        assert "generated_at" not in document

    def test_parameter_passed(self, monkeypatch: pytest.MonkeyPatch) -> None:
        exp = Experiment("toy", "Toy", _toy)
        monkeypatch.setitem(REGISTRY, exp.id, exp)
        result = runner.invoke(app, ["repro", "toy", "--no-cache", "--n", "7"])
        assert result.exit_code == 0, result.output
        assert _json_tail(result.output)["inputs"] == {"n": 7}

    def test_long_refused(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        exp = Experiment("toy-long", "Toy", _toy, long=True)
        monkeypatch.setitem(REGISTRY, exp.id, exp)
        cache = ["--cache", str(tmp_path / "cache")]
        assert runner.invoke(app, ["repro", "toy-long", *cache]).exit_code == 1
        assert runner.invoke(app, ["repro", "toy-long", "--long", "--no-cache"]).exit_code == 1
        assert runner.invoke(app, ["repro", "toy-long", "--long", *cache]).exit_code == 0


class TestExperimentsList:
    def test_lists_registry(self) -> None:
        result = runner.invoke(app, ["experiments"])
        assert result.exit_code == 0
        assert "r3-orders" in result.output
        assert "witt-free-nilpotent" in result.output
