"""Tests for the checkpoint store."""

from __future__ import annotations

import logging
from pathlib import Path

import pytest

from engelnq.nq import NqState, extend_one_class, init_class_one
from engelnq.pcp import PcPresentation
from engelnq.schemas import InstantiationMode, InstantiationStrategy
from engelnq.store import CheckpointStore
from engelnq.words import FpPresentation, parse_presentation

GENS = InstantiationStrategy()
TEXT = "generators a, b\nrelators\n"


@pytest.fixture
def store(tmp_path: Path) -> CheckpointStore:
    """Create a fresh store in a temp directory."""
    s = CheckpointStore(tmp_path / "cache")
    yield s
    s.close()


@pytest.fixture
def fp() -> FpPresentation:
    return parse_presentation(TEXT)


@pytest.fixture
def states(fp: FpPresentation) -> list[NqState]:
    one = init_class_one(fp)
    two = extend_one_class(one, fp)
    assert two is not None
    return [one, two]


class TestSchema:
    def test_init_creates_tables(self, store: CheckpointStore) -> None:
        tables = store.conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' ORDER BY name"
        ).fetchall()
        assert {r["name"] for r in tables} == {"meta", "runs"}

    def test_schema_version(self, store: CheckpointStore) -> None:
        row = store.conn.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()
        assert int(row["value"]) == 1

    def test_idempotent_init(self, store: CheckpointStore) -> None:
        store.init_schema()
        assert store.list_runs() == []


class TestKeys:
    def test_key_is_stable(self) -> None:
        assert CheckpointStore.key_for(TEXT, GENS) == CheckpointStore.key_for(TEXT, GENS)
        assert len(CheckpointStore.key_for(TEXT, GENS)) == 16

    def test_key_depends_on_strategy_and_text(self) -> None:
        pairs = InstantiationStrategy(mode=InstantiationMode.PAIRS)
        assert CheckpointStore.key_for(TEXT, GENS) != CheckpointStore.key_for(TEXT, pairs)
        assert CheckpointStore.key_for(TEXT, GENS) != CheckpointStore.key_for(TEXT + "\n", GENS)


class TestRuns:
    def test_register_upserts(self, store: CheckpointStore) -> None:
        store.register("k1", "first", TEXT, GENS)
        store.register("k1", "", TEXT, GENS)
        run = store.get_run("k1")
        assert run is not None
        assert run["label"] == "first"
        assert run["status"] == "running"
        assert len(store.list_runs()) == 1

    def test_set_status(self, store: CheckpointStore) -> None:
        store.register("k1", "", TEXT, GENS)
        store.set_status("k1", "capped")
        assert store.get_run("k1")["status"] == "capped"
        with pytest.raises(ValueError):
            store.set_status("k1", "finished")

    def test_unknown_run(self, store: CheckpointStore) -> None:
        assert store.get_run("nope") is None

    def test_bulk_rolls_back(self, store: CheckpointStore) -> None:
        with pytest.raises(RuntimeError):
            with store.bulk():
                store.register("k1", "", TEXT, GENS)
                raise RuntimeError("boom")
        assert store.get_run("k1") is None


class TestCheckpoints:
    def test_save_and_load(self, store: CheckpointStore, states: list[NqState]) -> None:
        store.register("k1", "", TEXT, GENS)
        for s in states:
            path = store.save_state("k1", s)
            assert path.name == f"class-{s.current_class}.json"
        assert store.classes("k1") == [1, 2]
        assert store.latest_class("k1") == 2
        assert store.load_state("k1", 2).pcp == states[1].pcp
        assert store.get_run("k1")["highest_class"] == 2
        assert not list(store.run_dir("k1").glob("*.tmp"))

    def test_latest_respects_max_class(self, store: CheckpointStore, states: list[NqState]) -> None:
        store.register("k1", "", TEXT, GENS)
        for s in states:
            store.save_state("k1", s)
        latest = store.latest_state("k1", max_class=1)
        assert latest is not None
        assert latest.current_class == 1
        assert store.latest_state("missing") is None

    def test_corrupt_checkpoint_skipped(
        self, store: CheckpointStore, states: list[NqState], caplog: pytest.LogCaptureFixture
    ) -> None:
        store.register("k1", "", TEXT, GENS)
        for s in states:
            store.save_state("k1", s)
        (store.run_dir("k1") / "class-2.json").write_text("{not json", encoding="utf-8")
        with caplog.at_level(logging.WARNING, logger="engelnq.store"):
            latest = store.latest_state("k1")
        assert latest is not None
        assert latest.current_class == 1
        assert "unreadable" in caplog.text

    def test_inconsistent_checkpoint_skipped(
        self, store: CheckpointStore, states: list[NqState], caplog: pytest.LogCaptureFixture
    ) -> None:
        store.register("k1", "", TEXT, GENS)
        store.save_state("k1", states[0])
        bad = PcPresentation(weights=(1, 1, 2), orders=(2, None, None), conj_tails={(0, 1): ((2, 1),)})
        store.save_state("k1", NqState(2, bad, GENS))
        with caplog.at_level(logging.WARNING, logger="engelnq.store"):
            latest = store.latest_state("k1")
        assert latest is not None and latest.current_class == 1
        assert "inconsistent" in caplog.text
        unverified = store.latest_state("k1", verify=False)
        assert unverified is not None and unverified.current_class == 2

    def test_stable_status(self, store: CheckpointStore, states: list[NqState]) -> None:
        store.register("k1", "", TEXT, GENS)
        store.save_state("k1", NqState(1, states[0].pcp, GENS, (0,), stable=True))
        assert store.get_run("k1")["status"] == "stable"

    def test_stray_files_ignored(self, store: CheckpointStore, states: list[NqState]) -> None:
        store.register("k1", "", TEXT, GENS)
        store.save_state("k1", states[0])
        (store.run_dir("k1") / "class-x.json").write_text("{}", encoding="utf-8")
        assert store.classes("k1") == [1]


class TestClear:
    def test_clear_one(self, store: CheckpointStore, states: list[NqState]) -> None:
        for key in ("k1", "k2"):
            store.register(key, "", TEXT, GENS)
            store.save_state(key, states[0])
        assert store.clear("k1") == 1
        assert store.classes("k1") == []
        assert [r["key"] for r in store.list_runs()] == ["k2"]

    def test_clear_all(self, store: CheckpointStore, states: list[NqState]) -> None:
        for key in ("k1", "k2"):
            store.register(key, "", TEXT, GENS)
            store.save_state(key, states[0])
        store.register("k3", "", TEXT, GENS)
        assert store.clear() == 3
        assert store.list_runs() == []

    def test_clear_unknown(self, store: CheckpointStore) -> None:
        assert store.clear("nope") == 0
