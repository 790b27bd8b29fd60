"""Building and extending the three-tier graph from episodic units."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from rgmem.backend import Backend, BackendRequest
from rgmem.errors import ParseError, TierViolation, ValidationError
from rgmem.store import (
    ABSTRACT,
    GENERAL,
    INSTANCE,
    EpisodicUnit,
    MemoryStore,
    normalize_name,
)

USER_NODE = "user:self"
ROOT_NAME = "User Profile"
MERGE_THRESHOLD = 0.85
TIER_RANK = {INSTANCE: 0, GENERAL: 1, ABSTRACT: 2}


@dataclass
class ExtractionProposal:
    instance_entities: list[tuple[str, str]] = field(default_factory=list)
    general_links: list[tuple[str, str]] = field(default_factory=list)
    abstract_links: list[tuple[str, str]] = field(default_factory=list)
    event_relations: list[tuple[str, str, str, str]] = field(default_factory=list)
    # taxonomy seeding only: (name, description) and (child abstract, parent abstract)
    abstract_entities: list[tuple[str, str]] = field(default_factory=list)
    abstract_parents: list[tuple[str, str]] = field(default_factory=list)
    # free-form (child, child_tier, parent, parent_tier) links suggested by a backend
    classification_links: list[tuple[str, str, str, str]] = field(default_factory=list)
    # entity name -> embedding, computed before the commit so replay never needs a backend
    embeddings: dict[str, list[float]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (
            self.instance_entities
            or self.general_links
            or self.abstract_links
            or self.event_relations
            or self.abstract_entities
            or self.abstract_parents
            or self.classification_links
        )

    def names(self) -> list[tuple[str, str]]:
        """Every (name, tier) the proposal mentions, in first-mention order."""
        out: dict[tuple[str, str], None] = {}
        for name, _ in self.abstract_entities:
            out[(name, ABSTRACT)] = None
        for child, parent in self.abstract_parents:
            out[(child, ABSTRACT)] = out[(parent, ABSTRACT)] = None
        for name, _ in self.instance_entities:
            out[(name, INSTANCE)] = None
        for inst, gen in self.general_links:
            out[(inst, INSTANCE)] = out[(gen, GENERAL)] = None
        for gen, abs_ in self.abstract_links:
            out[(gen, GENERAL)] = out[(abs_, ABSTRACT)] = None
        for child, ctier, parent, ptier in self.classification_links:
            out[(child, ctier)] = out[(parent, ptier)] = None
        for src, dst, _, _ in self.event_relations:
            out[(src, INSTANCE)] = out[(dst, INSTANCE)] = None
        return list(out)

    def to_dict(self) -> dict:
        return {k: [list(x) for x in v] if isinstance(v, list) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionProposal":
        return cls(
            instance_entities=[tuple(x) for x in d.get("instance_entities", [])],
            general_links=[tuple(x) for x in d.get("general_links", [])],
            abstract_links=[tuple(x) for x in d.get("abstract_links", [])],
            event_relations=[tuple(x) for x in d.get("event_relations", [])],
            abstract_entities=[tuple(x) for x in d.get("abstract_entities", [])],
            abstract_parents=[tuple(x) for x in d.get("abstract_parents", [])],
            classification_links=[tuple(x) for x in d.get("classification_links", [])],
            embeddings={k: list(v) for k, v in d.get("embeddings", {}).items()},
        )


@dataclass
class ApplySummary:
    nodes_created: int = 0
    edges_created: int = 0
    pendings_incremented: int = 0


@dataclass
class TaxonomyEntry:
    name: str
    description: str = ""
    parent: Optional[str] = None


DEFAULT_TAXONOMY = [
    TaxonomyEntry(ROOT_NAME, "Everything known about the user"),
    TaxonomyEntry("Hobbies & Interests", "Leisure activities and passions", ROOT_NAME),
    TaxonomyEntry("Work & Career", "Jobs, projects and professional goals", ROOT_NAME),
    TaxonomyEntry("Health & Fitness", "Exercise, sport and physical health", ROOT_NAME),
    TaxonomyEntry("Food & Diet", "Eating habits, cooking and diet", ROOT_NAME),
    TaxonomyEntry("Social & Family", "Family, friends, pets and relationships", ROOT_NAME),
    TaxonomyEntry("Emotions & Wellbeing", "Mood, stress and mental health", ROOT_NAME),
    TaxonomyEntry("Travel", "Trips, places visited and plans", ROOT_NAME),
    TaxonomyEntry("Finance", "Money, budgeting and investments", ROOT_NAME),
]


def load_taxonomy(path: str | Path | None = None) -> list[TaxonomyEntry]:
    """Read a JSON array of {"name", "description", "parent"?}; None gives the built-in default."""
    if path is None:
        return list(DEFAULT_TAXONOMY)
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"taxonomy {path}: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"taxonomy {path}: expected a non-empty JSON array")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or not item.get("name"):
            raise ParseError(f"taxonomy {path}: entry {i} needs a 'name'")
        out.append(TaxonomyEntry(item["name"], item.get("description", ""), item.get("parent")))
    return out


def taxonomy_proposal(entries: list[TaxonomyEntry]) -> ExtractionProposal:
    prop = ExtractionProposal(
        abstract_entities=[(e.name, e.description) for e in entries],
        abstract_parents=[(e.name, e.parent) for e in entries if e.parent],
        instance_entities=[(USER_NODE, "the profiled user")],
    )
    return prop


def propose_extraction(
    unit: EpisodicUnit,
    backend: Backend,
    known_abstracts: list[str] | None = None,
) -> ExtractionProposal:
    text = "\n".join([unit.lambda_fact] + [c.text for c in unit.conclusions])
    out = backend.call(
        BackendRequest(
            "extract",
            {
                "unit_id": unit.id,
                "session_id": unit.session_id,
                "text": text,
                "known_abstracts": ", ".join(known_abstracts or []),
            },
        )
    )
    return ExtractionProposal(
        instance_entities=[(e["name"], e.get("description", "")) for e in out["instance_entities"]],
        general_links=[(l["instance"], l["general"]) for l in out["general_links"]],
        abstract_links=[(l["general"], l["abstract"]) for l in out["abstract_links"]],
        event_relations=[(r["src"], r["dst"], r["label"], unit.id) for r in out["event_relations"]],
    )


def attach_embeddings(proposal: ExtractionProposal, backend: Backend) -> ExtractionProposal:
    """Fill ``proposal.embeddings`` for every mentioned name (instances keyed by their base name)."""
    for name, _tier in proposal.names():
        if name not in proposal.embeddings:
            proposal.embeddings[name] = backend.embed(embedding_text(name))
    return proposal


def embedding_text(name: str) -> str:
    # "hiking@session-3" is embedded as "hiking"
    return name.split("@", 1)[0] or name


def _cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b)) / (
        math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)) or 1.0
    )


def resolve_entity(
    store: MemoryStore,
    name: str,
    tier: str,
    embedding: Optional[list[float]] = None,
    merge_threshold: float = MERGE_THRESHOLD,
) -> Optional[str]:
    """Name/alias match after normalisation, else best same-tier cosine >= threshold.

    Instances are unique happenings, so they are only ever matched by name.
    """
    if not name.strip():
        raise ValidationError("entity name is empty")
    hit = store.find_node(name, tier)
    if hit is not None or embedding is None or tier == INSTANCE:
        return hit
    best, best_cos = None, merge_threshold
    for node in store.nodes.values():
        if node.tier != tier or node.embedding is None:
            continue
        cos = _cosine(embedding, node.embedding)
        if cos > best_cos or (best is None and cos >= best_cos):
            best, best_cos = node.id, cos
    return best


def _check(store: MemoryStore, proposal: ExtractionProposal) -> None:
    for group in (proposal.instance_entities, proposal.abstract_entities):
        for name, _ in group:
            if not name.strip():
                raise ValidationError("proposal has an empty entity name")
    for src, dst, label, unit_id in proposal.event_relations:
        if not (src.strip() and dst.strip() and label.strip()):
            raise ValidationError("event relation with empty field")
        store.get_unit(unit_id)
    declared = {normalize_name(n) for n, _ in proposal.instance_entities}
    declared |= {normalize_name(i) for i, _ in proposal.general_links}
    for src, dst, _, _ in proposal.event_relations:
        for name in (src, dst):
            if normalize_name(name) not in declared and store.find_node(name, INSTANCE) is None:
                raise ValidationError(f"event relation references unknown entity {name!r}")
    abstract_pairs = list(proposal.abstract_parents)
    for child, ctier, parent, ptier in proposal.classification_links:
        if ctier not in TIER_RANK or ptier not in TIER_RANK:
            raise ValidationError(f"unknown tier in link {child!r} -> {parent!r}")
        if TIER_RANK[ptier] != TIER_RANK[ctier] + 1 and not (ctier == ptier == ABSTRACT):
            raise TierViolation(f"classification {child!r} ({ctier}) -> {parent!r} ({ptier}) is not tier-increasing")
        if ctier == ABSTRACT:
            abstract_pairs.append((child, parent))
    _check_abstract_cycles(store, abstract_pairs)


def _check_abstract_cycles(store: MemoryStore, pairs: list[tuple[str, str]]) -> None:
    up: dict[str, set[str]] = {}
    for edge in store.edges.values():
        if edge.kind == "classification" and store.nodes[edge.src].tier == ABSTRACT:
            up.setdefault(normalize_name(store.nodes[edge.src].canonical_name), set()).add(
                normalize_name(store.nodes[edge.dst].canonical_name)
            )
    for child, parent in pairs:
        up.setdefault(normalize_name(child), set()).add(normalize_name(parent))
    state: dict[str, int] = {}

    def visit(n: str) -> None:
        state[n] = 1
        for p in up.get(n, ()):
            if state.get(p) == 1:
                raise TierViolation(f"abstract hierarchy cycle through {p!r}")
            if p not in state:
                visit(p)
        state[n] = 2

    for n in list(up):
        if n not in state:
            visit(n)


def apply_proposal(
    store: MemoryStore,
    proposal: ExtractionProposal,
    merge_threshold: float = MERGE_THRESHOLD,
) -> ApplySummary:
    """Create/reuse nodes and edges, attach evidence and bump abstract pending counts."""
    _check(store, proposal)
    store.emit("apply_proposal", {**proposal.to_dict(), "merge_threshold": merge_threshold})
    summary = ApplySummary()
    emb = proposal.embeddings

    def ensure(name: str, tier: str, description: str = "") -> str:
        nid = resolve_entity(store, name, tier, emb.get(name), merge_threshold)
        if nid is None:
            nid = store.add_node(tier, name, description, emb.get(name))
            summary.nodes_created += 1
        elif normalize_name(store.nodes[nid].canonical_name) != normalize_name(name):
            store.add_alias(nid, name)
        return nid

    def link(child: str, parent: str) -> None:
        _, created = store.add_classification_edge(child, parent)
        summary.edges_created += created

    for name, desc in proposal.abstract_entities:
        ensure(name, ABSTRACT, desc)
    for child, parent in proposal.abstract_parents:
        link(ensure(child, ABSTRACT), ensure(parent, ABSTRACT))
    for name, desc in proposal.instance_entities:
        ensure(name, INSTANCE, desc)
    for inst, gen in proposal.general_links:
        link(ensure(inst, INSTANCE), ensure(gen, GENERAL))
    root = store.find_node(ROOT_NAME, ABSTRACT)
    for gen, abs_ in proposal.abstract_links:
        existed = resolve_entity(store, abs_, ABSTRACT, emb.get(abs_), merge_threshold) is not None
        abs_id = ensure(abs_, ABSTRACT)
        if not existed and root is not None and abs_id != root:
            link(abs_id, root)
        link(ensure(gen, GENERAL), abs_id)
    for child, ctier, parent, ptier in proposal.classification_links:
        link(ensure(child, ctier), ensure(parent, ptier))
    for src, dst, label, unit_id in proposal.event_relations:
        src_id, dst_id = ensure(src, INSTANCE), ensure(dst, INSTANCE)
        edge_id, created = store.add_event_edge(src_id, dst_id, label)
        summary.edges_created += created
        store.attach_evidence_to_edge(edge_id, unit_id)
        digest = store.get_unit(unit_id).source_digest
        for endpoint in (src_id, dst_id):
            for abs_id in store.nearest_abstracts(endpoint):
                node = store.nodes[abs_id]
                if unit_id in node.pending_units or digest in node.theory.input_digests:
                    continue
                node.pending_units.append(unit_id)
                summary.pendings_incremented += 1
    return summary
