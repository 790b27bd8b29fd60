"""Multi-scale observation: probe raw evidence, relation theories and node theories for a query."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from rgmem.backend import Backend, BackendRequest
from rgmem.errors import ValidationError
from rgmem.indexing import CONCLUSIONS, FACTS, MemoryIndexes
from rgmem.store import ABSTRACT, MemoryStore

MACRO_HEADER = "## MACRO PROFILE"
MESO_HEADER = "## RELATION SUMMARIES"
MICRO_HEADER = "## EVIDENCE"


@dataclass
class RetrievalConfig:
    n_facts: int = 5
    n_conclusions: int = 30
    n_entities: int = 3
    entity_min_cos: float = 0.5
    include_l0: bool = True
    include_l1: bool = True
    include_l2: bool = True

    def __post_init__(self) -> None:
        if min(self.n_facts, self.n_conclusions, self.n_entities) < 0:
            raise ValidationError("retrieval counts must be >= 0")
        if not 0.0 <= self.entity_min_cos <= 1.0:
            raise ValidationError("entity_min_cos must lie in [0, 1]")


@dataclass
class ContextDocument:
    query: str
    micro_section: list[dict] = field(default_factory=list)
    meso_section: list[dict] = field(default_factory=list)
    macro_section: list[dict] = field(default_factory=list)
    matched_entities: list[dict] = field(default_factory=list)
    text: str = ""
    approx_tokens: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def probe_micro(
    store: MemoryStore, indexes: MemoryIndexes, q: str, config: RetrievalConfig
) -> list[dict]:
    if not q.strip():
        raise ValidationError("query is empty")
    section = []
    if config.n_facts:
        for uid, score in indexes.bm25_search(q, FACTS, config.n_facts):
            section.append({"kind": "fact", "id": uid, "text": store.get_unit(uid).lambda_fact, "score": score})
    if config.n_conclusions:
        for cid, score in indexes.bm25_search(q, CONCLUSIONS, config.n_conclusions):
            section.append({"kind": "conclusion", "id": cid, "text": store.find_conclusion(cid).text, "score": score})
    return section


def probe_meso_macro(
    store: MemoryStore,
    indexes: MemoryIndexes,
    q: str,
    config: RetrievalConfig,
    backend: Backend,
) -> tuple[list[dict], list[dict], list[dict]]:
    """Returns (meso, macro, matched entities)."""
    if not q.strip():
        raise ValidationError("query is empty")
    if not config.n_entities or not indexes.vectors.entries:
        return [], [], []
    qvec = backend.embed(q)
    matches = indexes.vector_topk(qvec, config.n_entities, config.entity_min_cos)
    matched = [{"node_id": nid, "name": store.nodes[nid].canonical_name, "cosine": cos} for nid, cos in matches]

    meso: dict[str, dict] = {}
    macro: dict[str, dict] = {}
    for nid, _ in matches:
        for edge in store.incident_event_edges(nid):
            if edge.id in meso or edge.theory.version == 0:
                continue
            meso[edge.id] = {
                "edge_id": edge.id,
                "label": edge.label,
                "src": store.nodes[edge.src].canonical_name,
                "dst": store.nodes[edge.dst].canonical_name,
                "summary": edge.theory.summary,
            }
        candidates = ([nid] if store.nodes[nid].tier == ABSTRACT else []) + store.abstract_ancestors(nid)
        for aid in candidates:
            theory = store.nodes[aid].theory
            if aid in macro or not theory.themed:
                continue
            macro[aid] = {
                "node_id": aid,
                "name": store.nodes[aid].canonical_name,
                "scale": theory.scale,
                "sigma": theory.sigma,
                "delta": theory.delta,
            }
    macro_list = sorted(macro.values(), key=lambda m: (m["scale"], m["name"]))
    return list(meso.values()), macro_list, matched


def render_context(macro: list[dict], meso: list[dict], micro: list[dict]) -> str:
    lines = [MACRO_HEADER]
    for m in macro:
        extra = f"; {m['delta']}" if m["delta"] else ""
        lines.append(f"- {m['name']} (scale {m['scale']}): {m['sigma']}{extra}")
    lines.append(MESO_HEADER)
    for e in meso:
        lines.append(f"- {e['src']} -[{e['label']}]-> {e['dst']}: {e['summary']}")
    lines.append(MICRO_HEADER)
    for item in micro:
        lines.append(f"- [{item['id']}] {item['text']}")
    return "\n".join(lines) + "\n"


def assemble_context(
    store: MemoryStore,
    indexes: MemoryIndexes,
    q: str,
    config: RetrievalConfig,
    backend: Backend,
) -> ContextDocument:
    micro = probe_micro(store, indexes, q, config) if config.include_l0 else []
    meso, macro, matched = [], [], []
    if config.include_l1 or config.include_l2:
        meso, macro, matched = probe_meso_macro(store, indexes, q, config, backend)
        if not config.include_l1:
            meso = []
        if not config.include_l2:
            macro = []
    text = render_context(macro, meso, micro)
    return ContextDocument(
        query=q,
        micro_section=micro,
        meso_section=meso,
        macro_section=macro,
        matched_entities=matched,
        text=text,
        approx_tokens=approx_tokens(text),
    )


def answer_query(
    store: MemoryStore,
    indexes: MemoryIndexes,
    q: str,
    config: RetrievalConfig,
    backend: Backend,
) -> tuple[str, ContextDocument]:
    context = assemble_context(store, indexes, q, config, backend)
    out = backend.call(BackendRequest("answer", {"question": q, "context": context.text}))
    return out["answer"], context
