"""Append-only operation log, snapshots and crash recovery for one profile directory.

Layout::

    <data_dir>/<profile_id>/log.jsonl
    <data_dir>/<profile_id>/snapshots/<seq>.json[.gz]

Log records carry operator *outputs*, so replay never calls a backend.
"""

from __future__ import annotations

import gzip
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from rgmem.errors import CorruptLog, CorruptSnapshot, IoFailure, ValidationError
from rgmem.hashing import canonical_json, fnv16
from rgmem.store import EpisodicUnit, MemoryStore, decode_snapshot

log = logging.getLogger(__name__)

OPS = ("add_unit", "apply_proposal", "rk1_commit", "rk2_commit", "rk3_commit", "config_change")
LOG_NAME = "log.jsonl"
SNAPSHOT_DIR = "snapshots"
SNAPSHOT_EVERY = 500


@dataclass
class LogRecord:
    seq: int
    op: str
    payload: dict
    checksum: str = ""

    def __post_init__(self) -> None:
        if self.op not in OPS:
            raise ValidationError(f"unknown log op {self.op!r}")
        if not self.checksum:
            self.checksum = fnv16(canonical_json(self.payload))

    def verify(self) -> bool:
        return self.checksum == fnv16(canonical_json(self.payload))

    def to_line(self) -> str:
        return canonical_json(
            {"seq": self.seq, "op": self.op, "payload": self.payload, "checksum": self.checksum}
        ) + "\n"


def _parse_line(line: str) -> Optional[LogRecord]:
    try:
        raw = json.loads(line)
        rec = LogRecord(int(raw["seq"]), raw["op"], raw["payload"], raw["checksum"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError):
        return None
    return rec if rec.verify() else None


class OperationLog:
    def __init__(self, path: str | Path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.last_seq = 0

    def append(self, op: str, payload: dict) -> int:
        rec = LogRecord(self.last_seq + 1, op, payload)
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_line())
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        except OSError as exc:
            raise IoFailure(f"append to {self.path}: {exc}") from exc
        self.last_seq = rec.seq
        return rec.seq

    def load(self) -> tuple[list[LogRecord], int]:
        """Return (valid records, number of truncated tail records).

        A bad record followed only by other bad records is a torn tail and is
        dropped; a bad record followed by a good one raises CorruptLog.
        """
        if not self.path.exists():
            return [], 0
        try:
            lines = self.path.read_text("utf-8", errors="replace").splitlines()
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        records: list[LogRecord] = []
        bad_at: Optional[int] = None
        for i, line in enumerate(lines):
            rec = _parse_line(line)
            if rec is None:
                if bad_at is None:
                    bad_at = i
                continue
            if bad_at is not None:
                raise CorruptLog(f"{self.path}: corrupt record at line {bad_at + 1} precedes valid data")
            if rec.seq != len(records) + 1:
                raise CorruptLog(f"{self.path}: line {i + 1} has seq {rec.seq}, expected {len(records) + 1}")
            records.append(rec)
        truncated = 0 if bad_at is None else len(lines) - bad_at
        if truncated:
            log.warning("%s: dropped %d corrupt tail record(s)", self.path, truncated)
        self.last_seq = records[-1].seq if records else 0
        return records, truncated

    def rewrite(self, records: list[LogRecord]) -> None:
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.writelines(r.to_line() for r in records)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)
        self.last_seq = records[-1].seq if records else 0


def write_snapshot(store: MemoryStore, directory: str | Path, seq: int, compress: bool = False) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob = store.snapshot_state()
    header = canonical_json({"format": "rgmem-snapshot-file", "version": 1, "seq": seq}).encode()
    data = header + b"\n" + blob
    path = directory / (f"{seq}.json.gz" if compress else f"{seq}.json")
    tmp = path.with_name(path.name + ".tmp")
    try:
        if compress:
            with gzip.GzipFile(tmp, "wb", mtime=0) as fh:
                fh.write(data)
        else:
            tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"write snapshot {path}: {exc}") from exc
    return path


def read_snapshot(path: str | Path) -> tuple[int, bytes]:
    """Return (seq, state blob) after validating header and checksum."""
    path = Path(path)
    try:
        data = path.read_bytes()
        if path.suffix == ".gz":
            data = gzip.decompress(data)
    except (OSError, EOFError, gzip.BadGzipFile) as exc:
        raise CorruptSnapshot(f"{path}: {exc}") from exc
    header, sep, blob = data.partition(b"\n")
    try:
        meta = json.loads(header)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise CorruptSnapshot(f"{path}: unreadable header") from None
    if not sep or not isinstance(meta, dict) or meta.get("format") != "rgmem-snapshot-file":
        raise CorruptSnapshot(f"{path}: bad header")
    if meta.get("version") != 1:
        raise CorruptSnapshot(f"{path}: unsupported snapshot version {meta.get('version')!r}")
    decode_snapshot(blob)
    return int(meta["seq"]), blob


def list_snapshots(directory: str | Path) -> list[tuple[int, Path]]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    found = []
    for p in directory.iterdir():
        stem = p.name.split(".", 1)[0]
        if stem.isdigit() and p.name in (f"{stem}.json", f"{stem}.json.gz"):
            found.append((int(stem), p))
    return sorted(found)


def apply_record(store: MemoryStore, rec: LogRecord) -> None:
    """Re-apply one committed operation with the recorder detached."""
    from rgmem import evolution, extraction

    p = rec.payload
    if rec.op == "add_unit":
        store.add_episodic_unit(EpisodicUnit.from_dict(p))
    elif rec.op == "apply_proposal":
        extraction.apply_proposal(
            store,
            extraction.ExtractionProposal.from_dict(p),
            p.get("merge_threshold", extraction.MERGE_THRESHOLD),
        )
    elif rec.op == "rk1_commit":
        evolution.commit_rk1(store, p["edge_id"], p["summary"], p["consumed"])
    elif rec.op == "rk2_commit":
        evolution.commit_rk2(store, p["node_id"], p["sigma"], p["delta"], p["input_digests"], p["consumed"])
    elif rec.op == "rk3_commit":
        evolution.commit_rk3(store, p["node_id"], p["theory"])
    elif rec.op == "config_change":
        store.settings.update(p)


def replay(store: MemoryStore, records: list[LogRecord]) -> None:
    recorder, store.recorder = store.recorder, None
    try:
        for rec in records:
            apply_record(store, rec)
    finally:
        store.recorder = recorder


class ProfileStorage:
    """Durable backing for one profile: journals every commit, snapshots periodically."""

    def __init__(
        self,
        profile_dir: str | Path,
        fsync: bool = True,
        snapshot_every: int = SNAPSHOT_EVERY,
        compress: bool = False,
    ):
        self.dir = Path(profile_dir)
        self.snapshot_dir = self.dir / SNAPSHOT_DIR
        self.log = OperationLog(self.dir / LOG_NAME, fsync=fsync)
        self.snapshot_every = snapshot_every
        self.compress = compress
        self.truncated = 0
        self._last_snapshot_seq = 0
        self._store: Optional[MemoryStore] = None

    def exists(self) -> bool:
        return self.dir.is_dir()

    def recover(self) -> MemoryStore:
        """Latest valid snapshot plus replay of later log records; idempotent."""
        self.dir.mkdir(parents=True, exist_ok=True)
        records, truncated = self.log.load()
        self.truncated = truncated
        if truncated:
            self.log.rewrite(records)
        store = MemoryStore()
        base_seq = 0
        last = records[-1].seq if records else 0
        for seq, path in reversed(list_snapshots(self.snapshot_dir)):
            if seq > last:
                continue
            try:
                _, blob = read_snapshot(path)
            except CorruptSnapshot as exc:
                log.warning("skipping snapshot: %s", exc)
                continue
            store.restore_state(blob)
            base_seq = seq
            break
        replay(store, [r for r in records if r.seq > base_seq])
        self._last_snapshot_seq = base_seq
        return store

    def attach(self, store: MemoryStore) -> None:
        self._store = store
        store.recorder = self._record

    def _record(self, op: str, payload: dict) -> None:
        self.log.append(op, payload)

    def maybe_snapshot(self) -> Optional[Path]:
        """Snapshot when SNAPSHOT_EVERY records accumulated; call between operations, not inside one."""
        if self._store is not None and self.log.last_seq - self._last_snapshot_seq >= self.snapshot_every:
            return self.snapshot()
        return None

    def snapshot(self) -> Path:
        path = write_snapshot(self._store, self.snapshot_dir, self.log.last_seq, self.compress)
        self._last_snapshot_seq = self.log.last_seq
        return path
