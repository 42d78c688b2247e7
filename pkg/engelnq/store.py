"""Checkpoint store: a sqlite run index plus one JSON file per computed class."""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
import sqlite3
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Generator

from engelnq.nq import NqState
from engelnq.pcp import PcPresentationError
from engelnq.schemas import InstantiationStrategy

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

INDEX_NAME = "index.sqlite"

DDL = """
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT
);

CREATE TABLE IF NOT EXISTS runs (
    key           TEXT PRIMARY KEY,
    label         TEXT    DEFAULT '',
    input_text    TEXT    NOT NULL,
    strategy_json TEXT    NOT NULL,
    highest_class INTEGER DEFAULT 0,
    status        TEXT    DEFAULT 'running',
    updated_at    TEXT
);

CREATE INDEX IF NOT EXISTS idx_runs_label  ON runs(label);
CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
"""

RUN_STATUSES = ("running", "stable", "capped")


def _now() -> str:
    return datetime.now(tz=timezone.utc).isoformat(timespec="seconds")


class CheckpointStore:
    """Resumable NQ checkpoints under ``cache_dir``.

    Layout::

        <cache_dir>/index.sqlite
        <cache_dir>/<key>/class-<k>.json
    """

    def __init__(self, cache_dir: str | Path) -> None:
        self.cache_dir = Path(cache_dir).expanduser()
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(str(self.cache_dir / INDEX_NAME))
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA journal_mode=WAL")
        self.init_schema()

    # ------------------------------------------------------------------
    # Lifecycle
    # ------------------------------------------------------------------

    def init_schema(self) -> None:
        self.conn.executescript(DDL)
        self.conn.execute(
            "INSERT OR REPLACE INTO meta(key, value) VALUES (?, ?)",
            ("schema_version", str(SCHEMA_VERSION)),
        )
        self.conn.commit()

    @contextmanager
    def bulk(self) -> Generator[None, None, None]:
        """Batch several index writes into one transaction; commit on exit."""
        self._in_bulk = True
        try:
            yield
        except Exception:
            self.conn.rollback()
            raise
        else:
            self.conn.commit()
        finally:
            self._in_bulk = False

    def _maybe_commit(self) -> None:
        if not getattr(self, "_in_bulk", False):
            self.conn.commit()

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> CheckpointStore:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # ------------------------------------------------------------------
    # Keys and runs
    # ------------------------------------------------------------------

    @staticmethod
    def key_for(text: str, strategy: InstantiationStrategy) -> str:
        digest = hashlib.sha256()
        digest.update(text.encode("utf-8"))
        digest.update(b"\0")
        digest.update(strategy.model_dump_json().encode("utf-8"))
        return digest.hexdigest()[:16]

    def run_dir(self, key: str) -> Path:
        return self.cache_dir / key

    def register(self, key: str, label: str, text: str, strategy: InstantiationStrategy) -> None:
        self.conn.execute(
            """INSERT INTO runs(key, label, input_text, strategy_json, updated_at)
               VALUES (?, ?, ?, ?, ?)
               ON CONFLICT(key) DO UPDATE SET
                 label=CASE WHEN excluded.label != '' THEN excluded.label ELSE runs.label END,
                 updated_at=excluded.updated_at""",
            (key, label, text, strategy.model_dump_json(), _now()),
        )
        self._maybe_commit()

    def set_status(self, key: str, status: str) -> None:
        if status not in RUN_STATUSES:
            raise ValueError(f"unknown run status {status!r}")
        self.conn.execute(
            "UPDATE runs SET status=?, updated_at=? WHERE key=?", (status, _now(), key)
        )
        self._maybe_commit()

    def list_runs(self) -> list[dict[str, Any]]:
        rows = self.conn.execute(
            """SELECT key, label, highest_class, status, strategy_json, updated_at
               FROM runs ORDER BY updated_at DESC, key"""
        ).fetchall()
        return [dict(r) for r in rows]

    def get_run(self, key: str) -> dict[str, Any] | None:
        row = self.conn.execute("SELECT * FROM runs WHERE key=?", (key,)).fetchone()
        return dict(row) if row else None

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def _path(self, key: str, k: int) -> Path:
        return self.run_dir(key) / f"class-{k}.json"

    def save_state(self, key: str, state: NqState) -> Path:
        """Write the checkpoint for ``state.current_class`` and update the run index."""
        path = self._path(key, state.current_class)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(state.to_json(), encoding="utf-8")
        os.replace(tmp, path)
        self.conn.execute(
            """UPDATE runs SET highest_class=MAX(highest_class, ?), status=?, updated_at=?
               WHERE key=?""",
            (state.current_class, "stable" if state.stable else "running", _now(), key),
        )
        self._maybe_commit()
        logger.info("checkpoint %s class %d written", key, state.current_class)
        return path

    def classes(self, key: str) -> list[int]:
        d = self.run_dir(key)
        if not d.is_dir():
            return []
        found = []
        for p in d.glob("class-*.json"):
            suffix = p.stem.removeprefix("class-")
            if suffix.isdigit():
                found.append(int(suffix))
        return sorted(found)

    def latest_class(self, key: str) -> int | None:
        found = self.classes(key)
        return found[-1] if found else None

    def load_state(self, key: str, k: int) -> NqState:
        return NqState.from_json(self._path(key, k).read_text(encoding="utf-8"))

    def latest_state(
        self, key: str, max_class: int | None = None, verify: bool = True
    ) -> NqState | None:
        """Highest-class checkpoint (at most ``max_class``) that parses and is consistent.

        Unreadable or inconsistent files are skipped with a warning, never repaired.
        """
        for k in reversed(self.classes(key)):
            if max_class is not None and k > max_class:
                continue
            try:
                state = self.load_state(key, k)
            except (ValueError, PcPresentationError, OSError) as exc:
                logger.warning("skipping unreadable checkpoint %s class %d: %s", key, k, exc)
                continue
            if verify and state.pcp.consistency_check(weighted=True):
                logger.warning("skipping inconsistent checkpoint %s class %d", key, k)
                continue
            return state
        return None

    def clear(self, key: str | None = None) -> int:
        """Delete one run (or all runs); returns the number of runs removed."""
        with self.bulk():
            if key is None:
                keys = [r["key"] for r in self.conn.execute("SELECT key FROM runs").fetchall()]
                keys += [
                    p.name for p in self.cache_dir.iterdir() if p.is_dir() and p.name not in keys
                ]
            else:
                keys = [key]
            removed = 0
            for k in keys:
                cur = self.conn.execute("DELETE FROM runs WHERE key=?", (k,))
                d = self.run_dir(k)
                if d.is_dir():
                    shutil.rmtree(d)
                    removed += 1
                elif cur.rowcount:
                    removed += 1
        logger.info("cleared %d run(s)", removed)
        return removed
