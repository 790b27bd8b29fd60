"""Coarse-graining of raw dialogue into episodic units (segmentation, then synthesis)."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

from rgmem.backend import Backend, BackendRequest
from rgmem.errors import EmptySession, ParseError, SchemaViolation, ValidationError
from rgmem.hashing import fnv16
from rgmem.store import ConclusionItem, EpisodicUnit, MemoryStore


@dataclass
class Turn:
    speaker: str
    utterance: str
    turn_index: int

    def render(self) -> str:
        return f"{self.speaker}: {self.utterance}"


@dataclass
class RawSession:
    session_id: str
    turns: list[Turn] = field(default_factory=list)
    session_timestamp: Optional[str] = None

    def validate(self) -> None:
        if not self.turns:
            raise EmptySession(f"session {self.session_id} has no turns")
        for i, t in enumerate(self.turns):
            if t.turn_index != i:
                raise ValidationError(
                    f"session {self.session_id}: turn_index must run 0,1,2,... (got {t.turn_index} at {i})"
                )
            if not t.utterance.strip():
                raise ValidationError(f"session {self.session_id}: empty utterance at turn {i}")

    def transcript(self) -> str:
        return "\n".join(t.render() for t in self.turns)


@dataclass
class EpisodicWindow:
    session_id: str
    turn_span: tuple[int, int]
    text: str
    timestamp: Optional[str] = None

    @property
    def digest(self) -> str:
        return fnv16(self.text)


def segment_dialogue(session: RawSession, max_window_turns: int = 10) -> list[EpisodicWindow]:
    """Split a session into contiguous windows of at most ``max_window_turns`` turns.

    A boundary that would separate two consecutive turns by the same speaker is
    pulled back by one turn when the window keeps at least one turn.
    """
    if max_window_turns < 1:
        raise ValidationError("max_window_turns must be >= 1")
    session.validate()
    turns = session.turns
    windows = []
    start = 0
    while start < len(turns):
        end = min(start + max_window_turns, len(turns))  # exclusive
        if (
            end < len(turns)
            and end - 1 > start
            and turns[end - 1].speaker == turns[end].speaker
        ):
            end -= 1
        chunk = turns[start:end]
        windows.append(
            EpisodicWindow(
                session_id=session.session_id,
                turn_span=(chunk[0].turn_index, chunk[-1].turn_index),
                text="\n".join(t.render() for t in chunk),
                timestamp=session.session_timestamp,
            )
        )
        start = end
    return windows


def synthesize_unit(window: EpisodicWindow, backend: Backend) -> EpisodicUnit:
    """Ask the backend for the fact/conclusion record of one window."""
    if not window.text.strip():
        raise ValidationError("window is empty")
    request = BackendRequest(
        "synthesize",
        {
            "session_id": window.session_id,
            "turn_span": list(window.turn_span),
            "text": window.text,
            "timestamp": window.timestamp,
        },
    )
    try:
        out = backend.call(request)
    except SchemaViolation as exc:
        raise SchemaViolation(str(exc), window=window) from None
    digest = window.digest
    unit_id = f"u{digest}"
    base, rel = [], []
    for item in out["conclusions"]:
        bucket = rel if item["relevance"] == "rel" else base
        tag = "r" if item["relevance"] == "rel" else "b"
        bucket.append(
            ConclusionItem(
                id=f"{unit_id}:{tag}{len(bucket)}",
                text=item["text"].strip(),
                relevance_class=item["relevance"],
                evidence_unit=unit_id,
            )
        )
    speakers = []
    for line in window.text.split("\n"):
        speaker = line.partition(": ")[0]
        if speaker not in speakers:
            speakers.append(speaker)
    unit = EpisodicUnit(
        id=unit_id,
        session_id=window.session_id,
        turn_span=window.turn_span,
        speaker_set=speakers,
        lambda_fact=out["lambda_fact"].strip(),
        conclusions_base=base,
        conclusions_rel=rel,
        source_digest=digest,
    )
    if not unit.lambda_fact:
        raise SchemaViolation("synthesize: empty lambda_fact", window=window)
    unit.validate()
    return unit


def coarse_grain(
    session: RawSession,
    backend: Backend,
    store: Optional[MemoryStore] = None,
    max_window_turns: int = 10,
    parallelism: int = 4,
) -> list[EpisodicUnit]:
    """Segment then synthesise; windows already known to ``store`` are skipped.

    New units are committed to ``store`` in window order. If a window fails, the
    units before it stay committed and the error propagates; re-running the same
    session retries only the windows that are still missing.
    """
    windows = segment_dialogue(session, max_window_turns)
    seen: set[str] = set()
    todo = []
    for w in windows:
        d = w.digest
        if d in seen or (store is not None and store.has_digest(d)):
            continue
        seen.add(d)
        todo.append(w)
    if not todo:
        return []

    workers = max(1, min(parallelism, len(todo)))
    units: list[EpisodicUnit] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(synthesize_unit, w, backend) for w in todo]
        for fut in futures:
            unit = fut.result()
            if store is not None:
                store.add_episodic_unit(unit)
                unit = store.get_unit(unit.id)
            units.append(unit)
    return units


def parse_transcript(lines: Iterable[str]) -> list[RawSession]:
    """Read the JSON Lines transcript format (one turn per line) into sessions."""
    sessions: dict[str, RawSession] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise ParseError(f"line {lineno}: expected an object")
        for key in ("session_id", "turn_index", "speaker", "text"):
            if key not in rec:
                raise ParseError(f"line {lineno}: missing field {key!r}")
        if not isinstance(rec["turn_index"], int):
            raise ParseError(f"line {lineno}: turn_index must be an integer")
        sid = str(rec["session_id"])
        session = sessions.setdefault(sid, RawSession(session_id=sid))
        if rec.get("timestamp") and session.session_timestamp is None:
            session.session_timestamp = str(rec["timestamp"])
        session.turns.append(Turn(str(rec["speaker"]), str(rec["text"]), rec["turn_index"]))
    for session in sessions.values():
        try:
            session.validate()
        except ValidationError as exc:
            raise ParseError(str(exc)) from None
    return list(sessions.values())


def session_to_jsonl(session: RawSession) -> str:
    lines = []
    for t in session.turns:
        rec = {"session_id": session.session_id, "turn_index": t.turn_index, "speaker": t.speaker, "text": t.utterance}
        if session.session_timestamp:
            rec["timestamp"] = session.session_timestamp
        lines.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(lines) + "\n"
