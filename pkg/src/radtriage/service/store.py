"""Single-file sqlite store for the triage worklist, reviewer decisions,
and an append-only audit log.

Writes are serialized through one connection plus a lock; a decision on
a study that is no longer PENDING is rejected (the HTTP layer maps that
to 409).  Every status change appends an audit record, and replaying the
audit log reproduces the live status of every study.
"""

from __future__ import annotations

import datetime as _dt
import sqlite3
import threading
from pathlib import Path

PENDING = "PENDING"
TERMINAL_STATUSES = (
    "CONFIRMED_ABNORMAL",
    "OVERRIDDEN_NORMAL",
    "CONFIRMED_NORMAL",
    "OVERRIDDEN_ABNORMAL",
)
ALL_STATUSES = (PENDING,) + TERMINAL_STATUSES

_SCHEMA = """
CREATE TABLE IF NOT EXISTS worklist (
    study_id TEXT PRIMARY KEY,
    body_part TEXT NOT NULL,
    probability REAL,
    image_count INTEGER NOT NULL,
    status TEXT NOT NULL DEFAULT 'PENDING',
    scored_at TEXT,
    model_prediction TEXT,
    version INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS image_scores (
    study_id TEXT NOT NULL,
    idx INTEGER NOT NULL,
    image_path TEXT NOT NULL,
    probability REAL,
    error TEXT,
    PRIMARY KEY (study_id, idx)
);
CREATE TABLE IF NOT EXISTS decisions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    study_id TEXT NOT NULL,
    verdict TEXT NOT NULL,
    note TEXT NOT NULL DEFAULT '',
    reviewer TEXT NOT NULL DEFAULT '',
    decided_at TEXT NOT NULL,
    active INTEGER NOT NULL DEFAULT 1
);
CREATE TABLE IF NOT EXISTS audit (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    study_id TEXT NOT NULL,
    event TEXT NOT NULL,
    from_status TEXT,
    to_status TEXT NOT NULL,
    at TEXT NOT NULL,
    detail TEXT NOT NULL DEFAULT ''
);
"""


def utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat().replace("+00:00", "Z")


class ConflictError(Exception):
    """The requested transition is not allowed from the current status."""


class UnknownStudyError(KeyError):
    pass


class WorklistStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    # -- scoring -----------------------------------------------------------

    def upsert_study(
        self,
        study_id: str,
        body_part: str,
        probability: float | None,
        image_scores: list[dict],
        model_prediction: str | None,
        scored_at: str | None = None,
    ) -> None:
        """Insert or refresh a scored study.

        Re-scoring replaces probabilities and image rows but preserves the
        study's status, decisions, and version.
        """
        scored_at = scored_at or utcnow()
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT status FROM worklist WHERE study_id = ?", (study_id,)
            ).fetchone()
            status = row["status"] if row else PENDING
            self._conn.execute(
                """
                INSERT INTO worklist
                    (study_id, body_part, probability, image_count,
                     status, scored_at, model_prediction)
                VALUES (?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(study_id) DO UPDATE SET
                    body_part = excluded.body_part,
                    probability = excluded.probability,
                    image_count = excluded.image_count,
                    scored_at = excluded.scored_at,
                    model_prediction = excluded.model_prediction
                """,
                (
                    study_id,
                    body_part,
                    probability,
                    len(image_scores),
                    status,
                    scored_at,
                    model_prediction,
                ),
            )
            self._conn.execute(
                "DELETE FROM image_scores WHERE study_id = ?", (study_id,)
            )
            self._conn.executemany(
                "INSERT INTO image_scores (study_id, idx, image_path, probability, error)"
                " VALUES (?, ?, ?, ?, ?)",
                [
                    (study_id, i, s["path"], s.get("probability"), s.get("error"))
                    for i, s in enumerate(image_scores)
                ],
            )
            self._conn.execute(
                "INSERT INTO audit (study_id, event, from_status, to_status, at, detail)"
                " VALUES (?, 'scored', ?, ?, ?, ?)",
                (
                    study_id,
                    row["status"] if row else None,
                    status,
                    scored_at,
                    f"probability={probability}",
                ),
            )

    # -- queries -----------------------------------------------------------

    def get(self, study_id: str) -> dict:
        row = self._conn.execute(
            "SELECT * FROM worklist WHERE study_id = ?", (study_id,)
        ).fetchone()
        if row is None:
            raise UnknownStudyError(study_id)
        return dict(row)

    def image_scores(self, study_id: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT idx, image_path, probability, error FROM image_scores"
            " WHERE study_id = ? ORDER BY idx",
            (study_id,),
        ).fetchall()
        return [dict(r) for r in rows]

    def active_decision(self, study_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT verdict, note, reviewer, decided_at FROM decisions"
            " WHERE study_id = ? AND active = 1 ORDER BY id DESC LIMIT 1",
            (study_id,),
        ).fetchone()
        return dict(row) if row else None

    def query(
        self,
        status: str | None = None,
        body_part: str | None = None,
        sort: str = "prob_desc",
        page: int = 1,
        page_size: int = 50,
    ) -> tuple[list[dict], int]:
        """Filtered, ordered worklist page plus the total matching count.

        Default order is probability descending with study_id ascending as
        the tiebreak; unscored studies (NULL probability) sort last.
        """
        clauses, params = [], []
        if status:
            clauses.append("status = ?")
            params.append(status)
        if body_part:
            clauses.append("body_part = ?")
            params.append(body_part)
        where = ("WHERE " + " AND ".join(clauses)) if clauses else ""
        order = {
            "prob_desc": "probability IS NULL, probability DESC, study_id ASC",
            "prob_asc": "probability IS NULL, probability ASC, study_id ASC",
            "study_id_asc": "study_id ASC",
        }.get(sort)
        if order is None:
            raise ValueError(f"unknown sort mode {sort!r}")
        total = self._conn.execute(
            f"SELECT COUNT(*) AS n FROM worklist {where}", params
        ).fetchone()["n"]
        rows = self._conn.execute(
            f"SELECT * FROM worklist {where} ORDER BY {order} LIMIT ? OFFSET ?",
            params + [page_size, (page - 1) * page_size],
        ).fetchall()
        return [dict(r) for r in rows], total

    def study_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) AS n FROM worklist").fetchone()["n"]

    # -- transitions ---------------------------------------------------------

    def decide(
        self, study_id: str, verdict: str, note: str = "", reviewer: str = ""
    ) -> dict:
        """Apply a reviewer verdict to a PENDING study.

        The resulting status is CONFIRMED_<verdict> when the verdict
        matches the model's prediction, OVERRIDDEN_<verdict> otherwise.
        Raises ConflictError if the study is not PENDING.
        """
        if verdict not in ("ABNORMAL", "NORMAL"):
            raise ValueError(f"invalid verdict {verdict!r}")
        now = utcnow()
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT status, model_prediction FROM worklist WHERE study_id = ?",
                (study_id,),
            ).fetchone()
            if row is None:
                raise UnknownStudyError(study_id)
            if row["status"] != PENDING:
                raise ConflictError(
                    f"study {study_id} already has status {row['status']}; "
                    "re-open it before deciding again"
                )
            agrees = row["model_prediction"] == verdict
            new_status = ("CONFIRMED_" if agrees else "OVERRIDDEN_") + verdict
            self._conn.execute(
                "UPDATE worklist SET status = ?, version = version + 1"
                " WHERE study_id = ?",
                (new_status, study_id),
            )
            self._conn.execute(
                "INSERT INTO decisions (study_id, verdict, note, reviewer, decided_at)"
                " VALUES (?, ?, ?, ?, ?)",
                (study_id, verdict, note, reviewer, now),
            )
            self._conn.execute(
                "INSERT INTO audit (study_id, event, from_status, to_status, at, detail)"
                " VALUES (?, 'decision', ?, ?, ?, ?)",
                (study_id, PENDING, new_status, now, f"verdict={verdict}"),
            )
        return self.get(study_id)

    def reopen(self, study_id: str) -> dict:
        """Return a decided study to PENDING, deactivating its decision."""
        now = utcnow()
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT status FROM worklist WHERE study_id = ?", (study_id,)
            ).fetchone()
            if row is None:
                raise UnknownStudyError(study_id)
            if row["status"] == PENDING:
                raise ConflictError(f"study {study_id} is already PENDING")
            self._conn.execute(
                "UPDATE worklist SET status = ?, version = version + 1"
                " WHERE study_id = ?",
                (PENDING, study_id),
            )
            self._conn.execute(
                "UPDATE decisions SET active = 0 WHERE study_id = ?", (study_id,)
            )
            self._conn.execute(
                "INSERT INTO audit (study_id, event, from_status, to_status, at)"
                " VALUES (?, 'reopen', ?, ?, ?)",
                (study_id, row["status"], PENDING, now),
            )
        return self.get(study_id)

    # -- stats & audit -------------------------------------------------------

    def stats(self) -> dict:
        by_status = {s: 0 for s in ALL_STATUSES}
        for row in self._conn.execute(
            "SELECT status, COUNT(*) AS n FROM worklist GROUP BY status"
        ):
            by_status[row["status"]] = row["n"]
        by_part = {
            row["body_part"]: row["n"]
            for row in self._conn.execute(
                "SELECT body_part, COUNT(*) AS n FROM worklist GROUP BY body_part"
            )
        }
        decided = sum(by_status[s] for s in TERMINAL_STATUSES)
        confirmed = (
            by_status["CONFIRMED_ABNORMAL"] + by_status["CONFIRMED_NORMAL"]
        )
        return {
            "total": self.study_count(),
            "by_status": by_status,
            "by_body_part": by_part,
            "decided": decided,
            "agreement_rate": (confirmed / decided) if decided else None,
        }

    def audit_log(self) -> list[dict]:
        rows = self._conn.execute("SELECT * FROM audit ORDER BY id").fetchall()
        return [dict(r) for r in rows]

    def replay_audit(self) -> dict[str, str]:
        """Reconstruct each study's current status from the audit log alone."""
        state: dict[str, str] = {}
        for event in self.audit_log():
            state[event["study_id"]] = event["to_status"]
        return state
