"""One profile's memory engine: ingestion, evolution, retrieval and durability behind one writer."""

from __future__ import annotations

import dataclasses
import threading
from pathlib import Path
from typing import Optional

from filelock import FileLock, Timeout

from rgmem.backend import Backend
from rgmem.config import EngineConfig
from rgmem.errors import IoFailure, UnknownNode, ValidationError
from rgmem.evolution import FlowReport, process_new_units, rk3_flow
from rgmem.extraction import (
    apply_proposal,
    attach_embeddings,
    load_taxonomy,
    propose_extraction,
    taxonomy_proposal,
)
from rgmem.indexing import MemoryIndexes
from rgmem.ingestion import RawSession, coarse_grain, parse_transcript
from rgmem.persistence import ProfileStorage
from rgmem.retrieval import ContextDocument, RetrievalConfig, answer_query, assemble_context
from rgmem.store import ABSTRACT, MemoryStore


class MemoryEngine:
    """Single-writer facade over one profile.

    Every public method takes the engine lock, so mutations are serialised and a
    read never observes a half-applied operation. With ``profile_dir=None`` the
    engine is purely in-memory.
    """

    def __init__(
        self,
        config: EngineConfig,
        backend: Backend,
        profile_dir: str | Path | None = None,
    ):
        self.config = config
        self.backend = backend
        self.lock = threading.RLock()
        self.indexes = MemoryIndexes(dimension=config.backend.embed_dim)
        self.storage: Optional[ProfileStorage] = None
        self._file_lock: Optional[FileLock] = None
        if profile_dir is not None:
            profile_dir = Path(profile_dir)
            profile_dir.mkdir(parents=True, exist_ok=True)
            self._file_lock = FileLock(str(profile_dir / "lock"))
            try:
                self._file_lock.acquire(timeout=10)
            except Timeout:
                raise IoFailure(f"profile {profile_dir} is locked by another process") from None
            self.storage = ProfileStorage(profile_dir, fsync=config.fsync, snapshot_every=config.snapshot_every)
            self.store = self.storage.recover()
            self.storage.attach(self.store)
        else:
            self.store = MemoryStore()
        self.indexes.attach(self.store)
        self.indexes.reindex_all(self.store)
        if not self.store.nodes:
            self._seed()
            self._sync_settings()
            self._checkpoint()

    def close(self) -> None:
        if self._file_lock is not None:
            self._file_lock.release()
            self._file_lock = None

    def __enter__(self) -> "MemoryEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _seed(self) -> None:
        taxonomy = load_taxonomy(self.config.ingestion.taxonomy_path)
        proposal = attach_embeddings(taxonomy_proposal(taxonomy), self.backend)
        apply_proposal(self.store, proposal, self.config.ingestion.merge_threshold)

    def _sync_settings(self) -> None:
        # journal evolution thresholds before a write whenever they differ from the last ones used
        settings = {"evolution": dataclasses.asdict(self.config.evolution)}
        if self.store.settings.get("evolution") != settings["evolution"]:
            self.store.emit("config_change", settings)
            self.store.settings.update(settings)

    def _checkpoint(self) -> None:
        if self.storage is not None:
            self.storage.maybe_snapshot()

    # -- writes --------------------------------------------------------------
    def ingest_session(self, session: RawSession) -> FlowReport:
        with self.lock:
            self._sync_settings()
            try:
                units = coarse_grain(
                    session,
                    self.backend,
                    self.store,
                    self.config.ingestion.max_window_turns,
                    self.config.ingestion.parallelism,
                )
                abstracts = [n.canonical_name for n in self.store.nodes.values() if n.tier == ABSTRACT]
                for unit in units:
                    proposal = propose_extraction(unit, self.backend, abstracts)
                    if proposal.is_empty():
                        continue
                    attach_embeddings(proposal, self.backend)
                    apply_proposal(self.store, proposal, self.config.ingestion.merge_threshold)
                return process_new_units(self.store, [u.id for u in units], self.backend, self.config.evolution)
            finally:
                self._checkpoint()

    def ingest_transcript(self, text: str) -> FlowReport:
        sessions = parse_transcript(text.splitlines())
        report = FlowReport()
        for session in sessions:
            report.merge(self.ingest_session(session))
        if not sessions:
            report.fixed_point_reached = not self.store.dirty_abstracts()
        return report

    def evolve(self) -> FlowReport:
        with self.lock:
            self._sync_settings()
            try:
                return rk3_flow(self.store, self.backend, self.config.evolution)
            finally:
                self._checkpoint()

    def snapshot(self) -> Path:
        with self.lock:
            if self.storage is None:
                raise IoFailure("in-memory engine has no storage")
            return self.storage.snapshot()

    # -- reads -----------------------------------------------------------------
    def _retrieval(self, overrides: Optional[dict]) -> RetrievalConfig:
        if not overrides:
            return self.config.retrieval
        known = {f.name for f in dataclasses.fields(RetrievalConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise ValidationError(f"unknown retrieval overrides: {sorted(unknown)}")
        try:
            return dataclasses.replace(self.config.retrieval, **overrides)
        except TypeError as exc:
            raise ValidationError(f"bad retrieval override: {exc}") from None

    def context(self, question: str, overrides: Optional[dict] = None) -> ContextDocument:
        with self.lock:
            return assemble_context(self.store, self.indexes, question, self._retrieval(overrides), self.backend)

    def query(self, question: str, overrides: Optional[dict] = None) -> tuple[str, ContextDocument]:
        with self.lock:
            return answer_query(self.store, self.indexes, question, self._retrieval(overrides), self.backend)

    def node_view(self, node_id: str) -> dict:
        with self.lock:
            node = self.store.nodes.get(node_id)
            if node is None:
                hits = [n for n in self.store.nodes.values() if n.canonical_name == node_id]
                if not hits:
                    raise UnknownNode(node_id)
                node = hits[0]
            view = dataclasses.asdict(node)
            view.pop("embedding", None)
            view["pending_count"] = node.pending_count
            view["parents"] = self.store.parents(node.id)
            view["children"] = self.store.children(node.id)
            view["event_edges"] = [
                {
                    "edge_id": e.id,
                    "src": e.src,
                    "dst": e.dst,
                    "label": e.label,
                    "version": e.theory.version,
                    "summary": e.theory.summary,
                    "pending": len(e.pending_evidence),
                }
                for e in self.store.incident_event_edges(node.id)
            ]
            return view

    def profile(self) -> list[dict]:
        """All abstract-node theories, highest scale first."""
        with self.lock:
            out = []
            for node in self.store.nodes.values():
                if node.tier != ABSTRACT:
                    continue
                t = node.theory
                out.append(
                    {
                        "node_id": node.id,
                        "name": node.canonical_name,
                        "scale": t.scale,
                        "version": t.version,
                        "sigma": t.sigma,
                        "delta": t.delta,
                        "pending_count": node.pending_count,
                        "dirty": node.dirty,
                    }
                )
            return sorted(out, key=lambda d: (-d["scale"], d["name"]))

    def state_hash(self) -> str:
        with self.lock:
            return self.store.state_hash()


def profile_dir(config: EngineConfig, profile_id: str) -> Path:
    if not profile_id or "/" in profile_id or "\\" in profile_id or profile_id in (".", ".."):
        raise ValidationError(f"invalid profile id {profile_id!r}")
    return Path(config.data_dir) / profile_id

