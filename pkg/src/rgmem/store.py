"""Unified memory state: episodic units plus the three-tier knowledge graph.

All mutation goes through :class:`MemoryStore`. Operators that change the state
at the granularity of a persisted operation call :meth:`MemoryStore.emit` before
applying their change, which is how the append-only log captures every commit.
"""

from __future__ import annotations

import copy
import json
import re
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

from rgmem.errors import (
    CorruptSnapshot,
    DuplicateUnit,
    InvalidUnit,
    TierViolation,
    UnknownEdge,
    UnknownNode,
    UnknownUnit,
    WrongEdgeKind,
)
from rgmem.hashing import canonical_json, fnv16

ABSTRACT = "abstract"
GENERAL = "general"
INSTANCE = "instance"
TIERS = (ABSTRACT, GENERAL, INSTANCE)
TIER_RANK = {INSTANCE: 0, GENERAL: 1, ABSTRACT: 2}

CLASSIFICATION = "classification"
EVENT = "event"
EDGE_KINDS = (CLASSIFICATION, EVENT)

SNAPSHOT_FORMAT = "rgmem-state"
SNAPSHOT_VERSION = 1

_WS = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Case-fold, trim and collapse internal whitespace."""
    return _WS.sub(" ", name.strip().casefold())


@dataclass
class ConclusionItem:
    id: str
    text: str
    relevance_class: str  # "base" | "rel"
    evidence_unit: str


@dataclass
class EpisodicUnit:
    id: str
    session_id: str
    turn_span: tuple[int, int]
    speaker_set: list[str]
    lambda_fact: str
    conclusions_base: list[ConclusionItem] = field(default_factory=list)
    conclusions_rel: list[ConclusionItem] = field(default_factory=list)
    created_at: int = 0
    source_digest: str = ""

    @property
    def conclusions(self) -> list[ConclusionItem]:
        return self.conclusions_base + self.conclusions_rel

    def validate(self, session_turns: int | None = None) -> None:
        if not self.lambda_fact or not self.lambda_fact.strip():
            raise InvalidUnit(f"unit {self.id}: lambda_fact is empty")
        start, end = self.turn_span
        if start < 0 or start > end:
            raise InvalidUnit(f"unit {self.id}: bad turn_span {self.turn_span}")
        if session_turns is not None and end >= session_turns:
            raise InvalidUnit(f"unit {self.id}: turn_span beyond session length {session_turns}")
        if not re.fullmatch(r"[0-9a-f]{16}", self.source_digest or ""):
            raise InvalidUnit(f"unit {self.id}: source_digest must be 16 hex chars")
        base_ids = {c.id for c in self.conclusions_base}
        rel_ids = {c.id for c in self.conclusions_rel}
        if base_ids & rel_ids:
            raise InvalidUnit(f"unit {self.id}: base and rel conclusions overlap")
        for item, cls in [(c, "base") for c in self.conclusions_base] + [
            (c, "rel") for c in self.conclusions_rel
        ]:
            if not item.text.strip():
                raise InvalidUnit(f"unit {self.id}: empty conclusion {item.id}")
            if item.relevance_class != cls:
                raise InvalidUnit(f"unit {self.id}: conclusion {item.id} is in the wrong subset")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["turn_span"] = list(self.turn_span)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodicUnit":
        return cls(
            id=d["id"],
            session_id=d["session_id"],
            turn_span=(int(d["turn_span"][0]), int(d["turn_span"][1])),
            speaker_set=list(d["speaker_set"]),
            lambda_fact=d["lambda_fact"],
            conclusions_base=[ConclusionItem(**c) for c in d.get("conclusions_base", [])],
            conclusions_rel=[ConclusionItem(**c) for c in d.get("conclusions_rel", [])],
            created_at=int(d.get("created_at", 0)),
            source_digest=d["source_digest"],
        )


@dataclass
class EdgeTheory:
    version: int = 0
    summary: str = ""
    evidence_ids: list[str] = field(default_factory=list)
    updated_at: int = 0


@dataclass
class NodeTheory:
    version: int = 0
    scale: int = 2
    sigma: str = ""
    delta: str = ""
    input_digests: list[str] = field(default_factory=list)
    updated_at: int = 0

    @property
    def themed(self) -> bool:
        return bool(self.sigma)


@dataclass
class GraphNode:
    id: str
    tier: str
    canonical_name: str
    aliases: list[str] = field(default_factory=list)
    description: str = ""
    embedding: Optional[list[float]] = None
    theory: Optional[NodeTheory] = None
    pending_units: list[str] = field(default_factory=list)
    dirty: bool = False

    @property
    def pending_count(self) -> int:
        return len(self.pending_units)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphNode":
        d = dict(d)
        theory = d.pop("theory", None)
        return cls(**d, theory=NodeTheory(**theory) if theory is not None else None)


@dataclass
class GraphEdge:
    id: str
    kind: str
    src: str
    dst: str
    label: str = ""
    theory: Optional[EdgeTheory] = None
    pending_evidence: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "GraphEdge":
        d = dict(d)
        theory = d.pop("theory", None)
        return cls(**d, theory=EdgeTheory(**theory) if theory is not None else None)


@dataclass
class Subgraph:
    """Read-only copy of a neighbourhood."""

    nodes: dict[str, GraphNode]
    edges: dict[str, GraphEdge]


class MemoryStore:
    """Owns units, graph, theory annotations, pending counters and dirty flags."""

    def __init__(self) -> None:
        self.units: dict[str, EpisodicUnit] = {}
        self.nodes: dict[str, GraphNode] = {}
        self.edges: dict[str, GraphEdge] = {}
        self.clock = 0
        self.node_seq = 0
        self.edge_seq = 0
        self.settings: dict[str, Any] = {}
        self._digests: dict[str, str] = {}
        self._names: dict[tuple[str, str], str] = {}
        self._event_keys: dict[tuple[str, str, str], str] = {}
        self._cls_keys: dict[tuple[str, str], str] = {}
        self._up: dict[str, list[str]] = {}  # node -> classification parents
        self._down: dict[str, list[str]] = {}  # node -> classification children
        self._incident: dict[str, list[str]] = {}  # node -> event edge ids
        # (op, payload) sink; set by persistence, None in pure in-memory use
        self.recorder: Optional[Callable[[str, dict], Any]] = None
        self.unit_listeners: list[Callable[[EpisodicUnit], None]] = []
        self.node_listeners: list[Callable[[GraphNode], None]] = []

    # -- logical time --------------------------------------------------
    def tick(self) -> int:
        self.clock += 1
        return self.clock

    def emit(self, op: str, payload: dict) -> None:
        if self.recorder is not None:
            self.recorder(op, payload)

    # -- episodic units ------------------------------------------------
    def has_digest(self, digest: str) -> bool:
        return digest in self._digests

    def add_episodic_unit(self, unit: EpisodicUnit) -> str:
        unit.validate()
        if unit.source_digest in self._digests:
            raise DuplicateUnit(f"window {unit.source_digest} already ingested")
        if unit.id in self.units:
            raise DuplicateUnit(f"unit id {unit.id} already present")
        for c in unit.conclusions:
            if c.evidence_unit != unit.id:
                raise InvalidUnit(f"conclusion {c.id} does not point back at {unit.id}")
        self.emit("add_unit", unit.to_dict())
        unit = copy.deepcopy(unit)
        unit.created_at = self.tick()
        self.units[unit.id] = unit
        self._digests[unit.source_digest] = unit.id
        for listener in self.unit_listeners:
            listener(unit)
        return unit.id

    def get_unit(self, unit_id: str) -> EpisodicUnit:
        try:
            return self.units[unit_id]
        except KeyError:
            raise UnknownUnit(unit_id) from None

    def units_by_session(self, session_id: str) -> list[EpisodicUnit]:
        found = [u for u in self.units.values() if u.session_id == session_id]
        return sorted(found, key=lambda u: u.turn_span)

    def find_conclusion(self, conclusion_id: str) -> ConclusionItem:
        unit_id = conclusion_id.rsplit(":", 1)[0]
        for c in self.get_unit(unit_id).conclusions:
            if c.id == conclusion_id:
                return c
        raise UnknownUnit(conclusion_id)

    # -- graph: nodes --------------------------------------------------
    def get_node(self, node_id: str) -> GraphNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def find_node(self, name: str, tier: str) -> Optional[str]:
        return self._names.get((tier, normalize_name(name)))

    def add_node(
        self,
        tier: str,
        name: str,
        description: str = "",
        embedding: Optional[list[float]] = None,
    ) -> str:
        if tier not in TIERS:
            raise TierViolation(f"unknown tier {tier!r}")
        key = (tier, normalize_name(name))
        if not key[1]:
            raise TierViolation("node name is empty")
        if key in self._names:
            return self._names[key]
        self.node_seq += 1
        node_id = f"n{self.node_seq:06d}"
        node = GraphNode(
            id=node_id,
            tier=tier,
            canonical_name=name.strip(),
            description=description,
            embedding=list(embedding) if embedding is not None else None,
            theory=NodeTheory() if tier == ABSTRACT else None,
        )
        self.nodes[node_id] = node
        self._names[key] = node_id
        self._up[node_id] = []
        self._down[node_id] = []
        self._incident[node_id] = []
        for listener in self.node_listeners:
            listener(node)
        return node_id

    def add_alias(self, node_id: str, alias: str) -> None:
        node = self.get_node(node_id)
        key = (node.tier, normalize_name(alias))
        if key in self._names or not key[1]:
            return
        node.aliases.append(alias.strip())
        self._names[key] = node_id

    # -- graph: edges --------------------------------------------------
    def get_edge(self, edge_id: str) -> GraphEdge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise UnknownEdge(edge_id) from None

    def check_classification(self, child_id: str, parent_id: str) -> None:
        """Raise TierViolation unless child->parent keeps the backbone tier-ordered and acyclic."""
        child, parent = self.get_node(child_id), self.get_node(parent_id)
        pair = (child.tier, parent.tier)
        if pair not in {(INSTANCE, GENERAL), (GENERAL, ABSTRACT), (ABSTRACT, ABSTRACT)}:
            raise TierViolation(f"classification {child.tier}->{parent.tier} is not allowed")
        if child_id == parent_id or child_id in self.ancestors(parent_id):
            raise TierViolation(f"classification {child_id}->{parent_id} would create a cycle")

    def add_classification_edge(self, child_id: str, parent_id: str) -> tuple[str, bool]:
        key = (child_id, parent_id)
        if key in self._cls_keys:
            return self._cls_keys[key], False
        self.check_classification(child_id, parent_id)
        self.edge_seq += 1
        edge_id = f"e{self.edge_seq:06d}"
        self.edges[edge_id] = GraphEdge(
            id=edge_id, kind=CLASSIFICATION, src=child_id, dst=parent_id, label="is_a"
        )
        self._cls_keys[key] = edge_id
        self._up[child_id].append(parent_id)
        self._down[parent_id].append(child_id)
        return edge_id, True

    def add_event_edge(self, src_id: str, dst_id: str, label: str) -> tuple[str, bool]:
        self.get_node(src_id)
        self.get_node(dst_id)
        key = (src_id, dst_id, normalize_name(label))
        if key in self._event_keys:
            return self._event_keys[key], False
        self.edge_seq += 1
        edge_id = f"e{self.edge_seq:06d}"
        self.edges[edge_id] = GraphEdge(
            id=edge_id, kind=EVENT, src=src_id, dst=dst_id, label=label.strip(), theory=EdgeTheory()
        )
        self._event_keys[key] = edge_id
        self._incident[src_id].append(edge_id)
        if dst_id != src_id:
            self._incident[dst_id].append(edge_id)
        return edge_id, True

    def attach_evidence_to_edge(self, edge_id: str, unit_id: str) -> int:
        edge = self.get_edge(edge_id)
        self.get_unit(unit_id)
        if edge.kind != EVENT:
            raise WrongEdgeKind(f"edge {edge_id} is a classification edge")
        integrated = edge.theory.evidence_ids if edge.theory else []
        if unit_id not in edge.pending_evidence and unit_id not in integrated:
            edge.pending_evidence.append(unit_id)
        return len(edge.pending_evidence)

    def event_edges(self) -> list[GraphEdge]:
        return [e for e in self.edges.values() if e.kind == EVENT]

    def incident_event_edges(self, node_id: str) -> list[GraphEdge]:
        self.get_node(node_id)
        return [self.edges[e] for e in self._incident[node_id]]

    # -- backbone traversal --------------------------------------------
    def parents(self, node_id: str) -> list[str]:
        self.get_node(node_id)
        return list(self._up[node_id])

    def children(self, node_id: str) -> list[str]:
        self.get_node(node_id)
        return list(self._down[node_id])

    def ancestors(self, node_id: str) -> list[str]:
        """All classification ancestors, breadth-first, without duplicates."""
        self.get_node(node_id)
        seen: dict[str, None] = {}
        queue = deque(self._up[node_id])
        while queue:
            nid = queue.popleft()
            if nid in seen:
                continue
            seen[nid] = None
            queue.extend(self._up[nid])
        return list(seen)

    def abstract_ancestors(self, node_id: str) -> list[str]:
        return [n for n in self.ancestors(node_id) if self.nodes[n].tier == ABSTRACT]

    def nearest_abstracts(self, node_id: str) -> list[str]:
        """Abstract nodes reached first when walking up; the walk stops at them."""
        node = self.get_node(node_id)
        if node.tier == ABSTRACT:
            return [node_id]
        found: dict[str, None] = {}
        seen = set()
        queue = deque(self._up[node_id])
        while queue:
            nid = queue.popleft()
            if nid in seen:
                continue
            seen.add(nid)
            if self.nodes[nid].tier == ABSTRACT:
                found[nid] = None
            else:
                queue.extend(self._up[nid])
        return sorted(found)

    def descendants_below(self, node_id: str) -> list[str]:
        """Non-abstract descendants; the walk does not pass through abstract children."""
        self.get_node(node_id)
        out: dict[str, None] = {}
        queue = deque(self._down[node_id])
        while queue:
            nid = queue.popleft()
            if nid in out or self.nodes[nid].tier == ABSTRACT:
                continue
            out[nid] = None
            queue.extend(self._down[nid])
        return list(out)

    def abstract_children(self, node_id: str) -> list[str]:
        return [c for c in self.children(node_id) if self.nodes[c].tier == ABSTRACT]

    def abstract_topological_order(self) -> list[str]:
        """Abstract nodes ordered children-first (by height in the abstract backbone), then id."""
        height: dict[str, int] = {}

        def h(nid: str) -> int:
            if nid not in height:
                kids = self.abstract_children(nid)
                height[nid] = 0 if not kids else 1 + max(h(k) for k in kids)
            return height[nid]

        abstracts = [n for n, node in self.nodes.items() if node.tier == ABSTRACT]
        return sorted(abstracts, key=lambda n: (h(n), n))

    # -- dirty flags ---------------------------------------------------
    def mark_dirty(self, node_id: str) -> None:
        self.get_node(node_id).dirty = True

    def propagate_dirty(self, node_id: str) -> set[str]:
        flipped = set()
        for nid in self.abstract_ancestors(node_id):
            node = self.nodes[nid]
            if not node.dirty:
                node.dirty = True
                flipped.add(nid)
        return flipped

    def dirty_abstracts(self) -> list[str]:
        return [n for n in self.abstract_topological_order() if self.nodes[n].dirty]

    # -- views ---------------------------------------------------------
    def get_neighborhood(self, node_id: str, radius: int) -> Subgraph:
        self.get_node(node_id)
        if radius < 0:
            raise ValueError("radius must be >= 0")
        adjacency: dict[str, list[tuple[str, str]]] = {}
        for edge in self.edges.values():
            adjacency.setdefault(edge.src, []).append((edge.id, edge.dst))
            adjacency.setdefault(edge.dst, []).append((edge.id, edge.src))
        dist = {node_id: 0}
        queue = deque([node_id])
        while queue:
            nid = queue.popleft()
            if dist[nid] == radius:
                continue
            for _, other in adjacency.get(nid, []):
                if other not in dist:
                    dist[other] = dist[nid] + 1
                    queue.append(other)
        edges = {
            eid: copy.deepcopy(e)
            for eid, e in self.edges.items()
            if e.src in dist and e.dst in dist
        }
        nodes = {nid: copy.deepcopy(self.nodes[nid]) for nid in sorted(dist)}
        return Subgraph(nodes=nodes, edges=edges)

    # -- snapshot / restore --------------------------------------------
    def to_dict(self) -> dict:
        return {
            "clock": self.clock,
            "node_seq": self.node_seq,
            "edge_seq": self.edge_seq,
            "settings": self.settings,
            "units": [u.to_dict() for u in self.units.values()],
            "nodes": [asdict(n) for n in self.nodes.values()],
            "edges": [asdict(e) for e in self.edges.values()],
        }

    def snapshot_state(self) -> bytes:
        state = self.to_dict()
        body = canonical_json(state)
        blob = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "checksum": fnv16(body),
            "state": state,
        }
        return canonical_json(blob).encode("utf-8")

    def state_hash(self) -> str:
        return fnv16(canonical_json(self.to_dict()))

    def restore_state(self, handle: bytes) -> None:
        state = decode_snapshot(handle)
        self._load(state)

    def _load(self, state: dict) -> None:
        listeners = (self.unit_listeners, self.node_listeners, self.recorder)
        self.__init__()
        self.unit_listeners, self.node_listeners, self.recorder = listeners
        try:
            self.clock = int(state["clock"])
            self.node_seq = int(state["node_seq"])
            self.edge_seq = int(state["edge_seq"])
            self.settings = dict(state.get("settings", {}))
            for d in state["units"]:
                unit = EpisodicUnit.from_dict(d)
                self.units[unit.id] = unit
                self._digests[unit.source_digest] = unit.id
            for d in state["nodes"]:
                node = GraphNode.from_dict(d)
                self.nodes[node.id] = node
                self._up[node.id], self._down[node.id], self._incident[node.id] = [], [], []
                self._names[(node.tier, normalize_name(node.canonical_name))] = node.id
                for alias in node.aliases:
                    self._names[(node.tier, normalize_name(alias))] = node.id
            for d in state["edges"]:
                edge = GraphEdge.from_dict(d)
                self.edges[edge.id] = edge
                if edge.kind == CLASSIFICATION:
                    self._cls_keys[(edge.src, edge.dst)] = edge.id
                    self._up[edge.src].append(edge.dst)
                    self._down[edge.dst].append(edge.src)
                else:
                    self._event_keys[(edge.src, edge.dst, normalize_name(edge.label))] = edge.id
                    self._incident[edge.src].append(edge.id)
                    if edge.dst != edge.src:
                        self._incident[edge.dst].append(edge.id)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise CorruptSnapshot(f"malformed state: {exc}") from exc

    # -- invariant checks (used by tests and `inspect`) ------------------
    def check_invariants(self) -> list[str]:
        problems = []
        for node in self.nodes.values():
            if node.tier not in TIERS:
                problems.append(f"{node.id}: bad tier")
            if node.tier != ABSTRACT and node.theory is not None:
                problems.append(f"{node.id}: non-abstract node carries a theory")
            if node.theory is not None and node.theory.version > 0 and not node.theory.sigma:
                problems.append(f"{node.id}: empty sigma after version 0")
        for edge in self.edges.values():
            if edge.kind == CLASSIFICATION:
                if edge.theory is not None:
                    problems.append(f"{edge.id}: classification edge carries a theory")
                pair = (self.nodes[edge.src].tier, self.nodes[edge.dst].tier)
                if pair not in {(INSTANCE, GENERAL), (GENERAL, ABSTRACT), (ABSTRACT, ABSTRACT)}:
                    problems.append(f"{edge.id}: tier order violated {pair}")
            elif edge.kind == EVENT:
                if edge.theory is None:
                    problems.append(f"{edge.id}: event edge without theory slot")
                else:
                    if len(set(edge.theory.evidence_ids)) != len(edge.theory.evidence_ids):
                        problems.append(f"{edge.id}: duplicate evidence ids")
                for uid in edge.pending_evidence:
                    if uid not in self.units:
                        problems.append(f"{edge.id}: pending unit {uid} missing")
            else:
                problems.append(f"{edge.id}: bad kind")
        for nid in self.nodes:
            if nid in self.ancestors(nid):
                problems.append(f"{nid}: classification cycle")
        return problems


def decode_snapshot(handle: bytes) -> dict:
    try:
        blob = json.loads(handle.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, AttributeError) as exc:
        raise CorruptSnapshot(f"unreadable snapshot: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != SNAPSHOT_FORMAT:
        raise CorruptSnapshot("not a state snapshot")
    if blob.get("version") != SNAPSHOT_VERSION:
        raise CorruptSnapshot(f"unsupported snapshot version {blob.get('version')!r}")
    state = blob.get("state")
    if not isinstance(state, dict) or fnv16(canonical_json(state)) != blob.get("checksum"):
        raise CorruptSnapshot("snapshot checksum mismatch")
    return state

