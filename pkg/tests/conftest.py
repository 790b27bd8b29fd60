from __future__ import annotations

import json
import sys
from importlib import resources

import pytest

from rgmem.backend import MockBackend
from rgmem.config import load_config
from rgmem.extraction import ExtractionProposal, apply_proposal
from rgmem.hashing import fnv16
from rgmem.ingestion import RawSession, Turn
from rgmem.store import ABSTRACT, ConclusionItem, EpisodicUnit, MemoryStore

DATA = resources.files("rgmem") / "data"


def data_path(name: str) -> str:
    return str(DATA / name)


def session(sid: str, utterances, speakers=("user", "assistant"), stamp=None) -> RawSession:
    return RawSession(sid, [Turn(speakers[i % len(speakers)], u, i) for i, u in enumerate(utterances)], stamp)


def make_unit(uid: str, text: str = "", rel: list[str] | None = None, session_id: str = "s1") -> EpisodicUnit:
    """Hand-built unit; digest derives from the id so ids and digests stay unique together."""
    base = [ConclusionItem(f"{uid}:b0", text or f"note {uid}", "base", uid)]
    rels = [ConclusionItem(f"{uid}:r{i}", t, "rel", uid) for i, t in enumerate(rel or [])]
    return EpisodicUnit(uid, session_id, (0, 0), ["user"], f"fact {uid}", base, rels, 0, fnv16(uid))


def chain_store(instance="walk@s1", general="walking", abstract="Hobbies & Interests"):
    """user:self -> instance event edge, instance -> general -> abstract backbone."""
    store = MemoryStore()
    prop = ExtractionProposal(
        instance_entities=[("user:self", ""), (instance, "")],
        general_links=[(instance, general)],
        abstract_links=[(general, abstract)],
    )
    apply_proposal(store, prop)
    return store


def feed(store: MemoryStore, units: list[EpisodicUnit], instance="walk@s1", label="engages_in") -> list[str]:
    """Add units and attach each as evidence on user:self -> instance."""
    ids = []
    for u in units:
        store.add_episodic_unit(u)
        apply_proposal(store, ExtractionProposal(event_relations=[("user:self", instance, label, u.id)]))
        ids.append(u.id)
    return ids


def abstract_id(store: MemoryStore, name: str) -> str:
    nid = store.find_node(name, ABSTRACT)
    assert nid is not None
    return nid


def micro_dataset_doc() -> dict:
    return json.loads((DATA / "micro_locomo.json").read_text("utf-8"))


@pytest.fixture
def mock():
    return MockBackend()


@pytest.fixture
def config():
    return load_config(env={})


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title = results[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
