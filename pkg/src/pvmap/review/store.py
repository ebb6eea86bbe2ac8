"""Event-sourced review sessions.

Each session is one append-only NDJSON file of events; replaying the file
reconstructs the exact session state, which is the whole crash-recovery
story. Event kinds: created, verdict, amend, missed, closed. Writes go
through a per-session lock acquired without blocking — a second concurrent
writer gets a conflict, never a corrupted log.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..errors import DataError, FormatError
from ..installations import Installation, load_installations

VERDICT_LABELS = ("correct", "false")
MISSED_MODES = ("queue", "browse")


class ConflictError(Exception):
    """Another writer holds this session."""


class SessionRuleError(Exception):
    """A domain rule rejected the write (double verdict, closed session...)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class SessionState:
    id: str
    region: str
    predictions_path: str
    tiles: dict[str, str]  # tile_id -> raster path
    candidates: list[int]  # installation ids, ascending
    crop_padding_m: float
    created_at: str
    updated_at: str
    verdicts: dict[int, dict] = field(default_factory=dict)  # id -> {label, note}
    missed: list[dict] = field(default_factory=list)
    amend_log: list[dict] = field(default_factory=list)
    status: str = "open"

    @property
    def undecided(self) -> list[int]:
        return [c for c in self.candidates if c not in self.verdicts]

    def tally(self) -> dict:
        labels = [v["label"] for v in self.verdicts.values()]
        return {
            "correct": labels.count("correct"),
            "false": labels.count("false"),
            "missed": len(self.missed),
            "undecided": len(self.undecided),
        }


class SessionStore:
    """Sessions persisted under one directory, one NDJSON event log each."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for path in sorted(self.root.glob("s-*.ndjson")):
            state = _replay(path)
            self._sessions[state.id] = state
            self._locks[state.id] = threading.Lock()

    def _log_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.ndjson"

    def _append(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with open(self._log_path(session_id), "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- creation ------------------------------------------------------------

    def create(
        self,
        region: str,
        predictions_path,
        tiles: dict[str, str],
        crop_padding_m: float = 20.0,
    ) -> SessionState:
        predictions_path = str(predictions_path)
        insts = load_installations(predictions_path)  # validates duplicate ids
        candidates = sorted(inst.id for inst in insts)
        with self._registry_lock:
            session_id = f"s-{len(self._sessions):04d}"
            now = _now()
            state = SessionState(
                id=session_id,
                region=region,
                predictions_path=predictions_path,
                tiles=dict(tiles),
                candidates=candidates,
                crop_padding_m=crop_padding_m,
                created_at=now,
                updated_at=now,
            )
            self._sessions[session_id] = state
            self._locks[session_id] = threading.Lock()
        self._append(
            session_id,
            {
                "event": "created",
                "id": session_id,
                "region": region,
                "predictions": predictions_path,
                "tiles": dict(tiles),
                "candidates": candidates,
                "crop_padding_m": crop_padding_m,
                "at": now,
            },
        )
        return state

    # -- reads ----------------------------------------------------------------

    def ids(self) -> list[str]:
        return sorted(self._sessions)

    def get(self, session_id: str) -> SessionState:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionRuleError("unknown_session", f"no session {session_id!r}") from None

    def installations(self, state: SessionState) -> dict[int, Installation]:
        return {i.id: i for i in load_installations(state.predictions_path)}

    # -- writes ----------------------------------------------------------------

    def _write(self, session_id: str, mutate) -> SessionState:
        state = self.get(session_id)
        lock = self._locks[session_id]
        if not lock.acquire(blocking=False):
            raise ConflictError(f"session {session_id} has a concurrent writer")
        try:
            if state.status == "closed":
                raise SessionRuleError("closed_session", f"session {session_id} is closed")
            event = mutate(state)
            event["at"] = state.updated_at = _now()
            self._append(session_id, event)
            return state
        finally:
            lock.release()

    def post_verdict(
        self, session_id: str, candidate_id: int, label: str,
        note: str = "", amend: bool = False,
    ) -> SessionState:
        if label not in VERDICT_LABELS:
            raise SessionRuleError("bad_label", f"label must be one of {VERDICT_LABELS}")

        def mutate(state: SessionState) -> dict:
            if candidate_id not in state.candidates:
                raise SessionRuleError(
                    "unknown_candidate", f"candidate {candidate_id} not in this session"
                )
            decided = candidate_id in state.verdicts
            if decided and not amend:
                raise SessionRuleError(
                    "double_verdict",
                    f"candidate {candidate_id} already has a verdict (amend to change it)",
                )
            if not decided and amend:
                raise SessionRuleError(
                    "nothing_to_amend", f"candidate {candidate_id} has no verdict yet"
                )
            if amend:
                prev = state.verdicts[candidate_id]
                state.amend_log.append(
                    {"candidate_id": candidate_id, "from": prev["label"], "to": label}
                )
                state.verdicts[candidate_id] = {"label": label, "note": note}
                return {
                    "event": "amend",
                    "candidate_id": candidate_id,
                    "prev_label": prev["label"],
                    "label": label,
                    "note": note,
                }
            state.verdicts[candidate_id] = {"label": label, "note": note}
            return {
                "event": "verdict",
                "candidate_id": candidate_id,
                "label": label,
                "note": note,
            }

        return self._write(session_id, mutate)

    def add_missed(
        self, session_id: str, point=None, outline=None,
        mode: str = "queue", note: str = "",
    ) -> SessionState:
        if mode not in MISSED_MODES:
            raise SessionRuleError("bad_mode", f"mode must be one of {MISSED_MODES}")
        if point is None and outline is None:
            raise SessionRuleError("bad_geometry", "missed mark needs a point or an outline")

        def mutate(state: SessionState) -> dict:
            mark = {
                "id": f"m{len(state.missed)}",
                "point": None if point is None else [float(point[0]), float(point[1])],
                "outline": None
                if outline is None
                else [[float(x), float(y)] for x, y in outline],
                "mode": mode,
                "note": note,
            }
            state.missed.append(mark)
            return {"event": "missed", **mark}

        return self._write(session_id, mutate)

    def close(self, session_id: str) -> SessionState:
        def mutate(state: SessionState) -> dict:
            state.status = "closed"
            return {"event": "closed"}

        return self._write(session_id, mutate)


def _replay(path: Path) -> SessionState:
    state: SessionState | None = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            ev = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: corrupt event: {exc}") from exc
        kind = ev.get("event")
        if kind == "created":
            state = SessionState(
                id=ev["id"],
                region=ev["region"],
                predictions_path=ev["predictions"],
                tiles=dict(ev["tiles"]),
                candidates=[int(c) for c in ev["candidates"]],
                crop_padding_m=float(ev["crop_padding_m"]),
                created_at=ev["at"],
                updated_at=ev["at"],
            )
            continue
        if state is None:
            raise FormatError(f"{path}:{lineno}: event before 'created'")
        state.updated_at = ev.get("at", state.updated_at)
        if kind == "verdict":
            state.verdicts[int(ev["candidate_id"])] = {
                "label": ev["label"],
                "note": ev.get("note", ""),
            }
        elif kind == "amend":
            cid = int(ev["candidate_id"])
            state.amend_log.append(
                {"candidate_id": cid, "from": ev["prev_label"], "to": ev["label"]}
            )
            state.verdicts[cid] = {"label": ev["label"], "note": ev.get("note", "")}
        elif kind == "missed":
            state.missed.append(
                {
                    "id": ev["id"],
                    "point": ev.get("point"),
                    "outline": ev.get("outline"),
                    "mode": ev.get("mode", "queue"),
                    "note": ev.get("note", ""),
                }
            )
        elif kind == "closed":
            state.status = "closed"
        else:
            raise FormatError(f"{path}:{lineno}: unknown event kind {kind!r}")
    if state is None:
        raise DataError(f"{path}: empty session log")
    return state
