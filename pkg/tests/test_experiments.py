"""Tests for the experiment registry and runner."""

from __future__ import annotations

from pathlib import Path

import pytest

from engelnq import library
from engelnq.config import Config
from engelnq.experiments import (
    REGISTRY,
    WITT_RANKS_2_8,
    Expected,
    Experiment,
    ExperimentContext,
    ExperimentError,
    LongExperimentRefusedError,
    UnknownExperimentError,
    _divides,
    _mobius,
    expected_summary,
    get_experiment,
    list_experiments,
    reconcile,
    run_experiment,
    witt_rank,
)
from engelnq.schemas import ExperimentReport, InstantiationStrategy
from engelnq.store import CheckpointStore


def _free_ranks(ctx: ExperimentContext, report: ExperimentReport) -> None:
    state = ctx.quotient(library.get("F2"), 2, label="F2")
    report.record("layer ranks", state.layer_ranks())
    report.notes.append("free group of rank 2")


@pytest.fixture
def toy(monkeypatch: pytest.MonkeyPatch) -> Experiment:
    exp = Experiment(
        "toy-free", "Free nilpotent of class 2", _free_ranks,
        {"layer ranks": Expected([2, 1], "Witt formula")},
    )
    monkeypatch.setitem(REGISTRY, exp.id, exp)
    return exp


@pytest.fixture
def config(tmp_path: Path) -> Config:
    return Config(cache_dir=str(tmp_path / "cache"), output_dir=str(tmp_path / "out"))


class TestRegistry:
    def test_known_ids(self) -> None:
        ids = {e.id for e in list_experiments()}
        for expected in (
            "r3-orders", "r3-newell-invariants", "r3-two-gen", "r4-inverse-order",
            "r4-conjugates", "r4-class8-exponent", "r4-product-order", "e24-compare",
            "nickel-orders-n5", "nickel-orders-n8", "nn-theorem-n5", "q1-answer",
            "witt-free-nilpotent",
        ):
            assert expected in ids

    def test_sorted(self) -> None:
        ids = [e.id for e in list_experiments()]
        assert ids == sorted(ids)

    def test_long_flags(self) -> None:
        long_ids = {e.id for e in list_experiments() if e.long}
        assert {"r4-class8-exponent", "r4-product-order", "nickel-orders-n7", "nickel-orders-n8"} <= long_ids
        assert "r3-orders" not in long_ids
        assert "witt-free-nilpotent" not in long_ids

    def test_unknown(self) -> None:
        with pytest.raises(UnknownExperimentError, match="known:"):
            get_experiment("no-such-thing")
        assert issubclass(UnknownExperimentError, ExperimentError)

    def test_expected_summary(self, toy: Experiment) -> None:
        assert expected_summary(toy) == "layer ranks=[2, 1]"
        bare = Experiment("bare", "", _free_ranks)
        assert expected_summary(bare) == "-"


class TestHelpers:
    def test_mobius(self) -> None:
        assert [_mobius(d) for d in range(1, 11)] == [1, -1, -1, 0, -1, 1, -1, 0, 0, 1]

    def test_witt_ranks(self) -> None:
        assert [witt_rank(2, k) for k in range(1, 9)] == WITT_RANKS_2_8
        assert witt_rank(3, 2) == 3
        assert witt_rank(3, 3) == 8

    def test_divides(self) -> None:
        assert _divides(4, 8)
        assert not _divides(8, 4)
        assert not _divides(None, 8)


class TestReconcile:
    def _report(self) -> ExperimentReport:
        report = ExperimentReport(id="x")
        report.record("a", 3)
        report.record("b", 5)
        report.record("free", "anything")
        return report

    def test_match_and_mismatch(self) -> None:
        report = self._report()
        reconcile(report, {"a": Expected(3, "src"), "b": Expected(4)})
        by_name = {v.name: v for v in report.values}
        assert by_name["a"].passed and by_name["a"].provenance == "src"
        assert not by_name["b"].passed
        assert by_name["b"].expected == 4
        assert by_name["free"].passed and by_name["free"].expected is None
        assert not report.passed

    def test_missing_value_fails(self) -> None:
        report = self._report()
        reconcile(report, {"c": Expected(7)})
        missing = report.values[-1]
        assert missing.name == "c"
        assert missing.computed is None
        assert not missing.passed

    def test_order_preserved(self) -> None:
        report = self._report()
        reconcile(report, {"b": Expected(5)})
        assert [v.name for v in report.values] == ["a", "b", "free"]
        assert report.passed


class TestRunExperiment:
    def test_runs_and_reconciles(self, toy: Experiment, config: Config) -> None:
        report = run_experiment(toy.id, config)
        assert report.passed
        assert report.strategy == "gens+inverses"
        assert report.seed == config.seed
        assert "total" in report.timings
        assert "quotient F2" in report.timings
        assert report.notes == ["free group of rank 2"]
        assert report.checkpoints_used == []

    def test_params_recorded(self, toy: Experiment, config: Config) -> None:
        report = run_experiment(toy.id, config, params={"n": 6})
        assert report.inputs == {"n": 6}

    def test_resume_recorded(self, toy: Experiment, config: Config) -> None:
        with CheckpointStore(config.cache_dir) as store:
            first = run_experiment(toy.id, config, store=store)
            second = run_experiment(toy.id, config, store=store)
        assert first.checkpoints_used == []
        assert second.checkpoints_used == [2]
        assert second.passed

    def test_mismatch_reported(self, monkeypatch: pytest.MonkeyPatch, config: Config) -> None:
        wrong = Experiment("toy-wrong", "", _free_ranks, {"layer ranks": Expected([2, 2])})
        monkeypatch.setitem(REGISTRY, wrong.id, wrong)
        report = run_experiment(wrong.id, config)
        assert not report.passed
        assert report.values[0].computed == [2, 1]

    def test_law_failure_fails_report(
        self, toy: Experiment, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        monkeypatch.setattr("engelnq.nq.law_violations", lambda *args: [("relator", {})])
        config = Config(
            cache_dir=str(tmp_path / "cache"),
            strategy=InstantiationStrategy(escalate=False),
        )
        report = run_experiment(toy.id, config)
        assert not report.passed
        (law,) = [v for v in report.values if v.name == "law check on F2"]
        assert law.computed == [2]
        assert not law.passed

    def test_long_refused(self, monkeypatch: pytest.MonkeyPatch, config: Config) -> None:
        slow = Experiment("toy-long", "", _free_ranks, long=True)
        monkeypatch.setitem(REGISTRY, slow.id, slow)
        with pytest.raises(LongExperimentRefusedError):
            run_experiment(slow.id, config)
        with CheckpointStore(config.cache_dir) as store:
            with pytest.raises(LongExperimentRefusedError):
                run_experiment(slow.id, config, store=store)
            assert run_experiment(slow.id, config, store=store, allow_long=True).passed
        with pytest.raises(LongExperimentRefusedError):
            run_experiment(slow.id, config, allow_long=True)


@pytest.mark.slow
class TestRegisteredRuns:
    def test_witt(self, config: Config) -> None:
        report = run_experiment("witt-free-nilpotent", config)
        assert report.passed

    def test_right_three_engel_orders(self, config: Config) -> None:
        report = run_experiment("r3-orders", config)
        failed = [v.name for v in report.values if not v.passed]
        assert failed == []

    @pytest.mark.parametrize(
        "experiment_id",
        [
            "r3-newell-invariants",
            "r3-two-gen",
            "r4-inverse-order",
            "e24-compare",
            "q1-answer",
            "nn-theorem-n5",
        ],
    )
    def test_registered(self, experiment_id: str, config: Config) -> None:
        report = run_experiment(experiment_id, config)
        failed = [v.name for v in report.values if not v.passed]
        assert failed == []
        assert report.passed

    def test_newman_nickel_order_mod_n_not_compared(self, config: Config) -> None:
        report = run_experiment("nn-theorem-n5", config)
        (order,) = [v for v in report.values if v.name.startswith("(v)")]
        assert order.expected is None
        assert order.passed
