"""Threshold-gated theory evolution: edge inference, node block transform, hierarchical flow.

Every operator application is split into a backend phase (no state change) and a
commit phase. Commits go through ``commit_*`` functions, which are also what log
replay calls, so live runs and recovery share one code path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from rgmem.backend import Backend, BackendRequest
from rgmem.errors import BackendFailure, RGMemError, ValidationError, WrongEdgeKind, WrongTier
from rgmem.hashing import fnv16
from rgmem.store import ABSTRACT, EVENT, EdgeTheory, EpisodicUnit, MemoryStore, NodeTheory

MANUAL = "manual"
AFTER_EACH_SESSION = "after_each_session"


@dataclass
class EvolutionConfig:
    theta_inf: int = 3
    theta_sum: int = 6
    projection_cap_K: int = 12
    rk3_mode: str = MANUAL
    max_passes: int = 5

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.theta_inf < 1 or self.theta_sum < 1 or self.projection_cap_K < 1:
            raise ValidationError("thresholds and projection cap must be positive")
        if self.theta_sum < self.theta_inf:
            raise ValidationError("theta_sum must be >= theta_inf")
        if self.rk3_mode not in (MANUAL, AFTER_EACH_SESSION):
            raise ValidationError(f"rk3_mode must be {MANUAL!r} or {AFTER_EACH_SESSION!r}")
        if self.max_passes < 1:
            raise ValidationError("max_passes must be >= 1")


@dataclass
class FlowReport:
    rk1_fired: list[str] = field(default_factory=list)
    rk2_fired: list[str] = field(default_factory=list)
    rk3_passes: int = 0
    changed_theories: list[tuple[str, int, int]] = field(default_factory=list)
    fixed_point_reached: bool = False
    errors: list[str] = field(default_factory=list)

    def merge(self, other: "FlowReport") -> "FlowReport":
        self.rk1_fired += other.rk1_fired
        self.rk2_fired += other.rk2_fired
        self.rk3_passes += other.rk3_passes
        self.changed_theories += other.changed_theories
        self.fixed_point_reached = other.fixed_point_reached
        self.errors += other.errors
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["changed_theories"] = [list(c) for c in self.changed_theories]
        return d


@dataclass
class EvidenceItem:
    """One element of a node's mixed-scale input: an edge theory or a raw unit."""

    kind: str  # "edge_theory" | "unit"
    ref: str
    text: str
    stamp: int

    def digest(self) -> str:
        return fnv16(self.text)


def unit_evidence_text(unit: EpisodicUnit) -> str:
    parts = [unit.lambda_fact] + [c.text for c in unit.conclusions_rel + unit.conclusions_base]
    return " | ".join(parts)


def unit_conclusion_text(unit: EpisodicUnit) -> str:
    """Relevance-selected conclusions; rel items are preferred as macroscopic seeds."""
    chosen = unit.conclusions_rel or unit.conclusions_base
    return "; ".join(c.text for c in chosen) if chosen else unit.lambda_fact


def _require_abstract(store: MemoryStore, node_id: str):
    node = store.get_node(node_id)
    if node.tier != ABSTRACT:
        raise WrongTier(f"node {node_id} is {node.tier}, not abstract")
    return node


# -- edge-level inference --------------------------------------------------

def commit_rk1(store: MemoryStore, edge_id: str, summary: str, consumed: list[str]) -> tuple[int, int]:
    edge = store.get_edge(edge_id)
    if edge.kind != EVENT:
        raise WrongEdgeKind(edge_id)
    store.emit("rk1_commit", {"edge_id": edge_id, "summary": summary, "consumed": list(consumed)})
    theory = edge.theory
    old = theory.version
    theory.version += 1
    theory.summary = summary
    for uid in consumed:
        if uid not in theory.evidence_ids:
            theory.evidence_ids.append(uid)
    edge.pending_evidence = [u for u in edge.pending_evidence if u not in set(consumed)]
    theory.updated_at = store.tick()
    for endpoint in (edge.src, edge.dst):
        store.propagate_dirty(endpoint)
    return old, theory.version


def rk1_update_edge(
    store: MemoryStore, edge_id: str, backend: Backend, config: EvolutionConfig
) -> Optional[EdgeTheory]:
    """Fold pending evidence into the edge theory; ``None`` when below ``theta_inf``."""
    edge = store.get_edge(edge_id)
    if edge.kind != EVENT:
        raise WrongEdgeKind(f"edge {edge_id} is not an event edge")
    if len(edge.pending_evidence) < config.theta_inf:
        return None
    consumed = list(edge.pending_evidence)
    texts = [unit_evidence_text(store.get_unit(u)) for u in consumed]
    out = backend.call(
        BackendRequest(
            "infer_relation",
            {"summary": edge.theory.summary, "version": edge.theory.version, "evidence": texts},
        )
    )
    commit_rk1(store, edge_id, out["summary"], consumed)
    return edge.theory


# -- node-level block transformation ---------------------------------------

def _descendant_edges(store: MemoryStore, node_id: str) -> list:
    seen: dict[str, None] = {}
    for nid in store.descendants_below(node_id):
        for edge in store.incident_event_edges(nid):
            seen[edge.id] = None
    return [store.edges[e] for e in seen]


def gather_inputs(store: MemoryStore, node_id: str, fresh_only: bool = True) -> list[EvidenceItem]:
    node = _require_abstract(store, node_id)
    since = node.theory.updated_at if fresh_only else -1
    theories = [
        EvidenceItem("edge_theory", e.id, e.theory.summary, e.theory.updated_at)
        for e in _descendant_edges(store, node_id)
        if e.theory.version > 0 and e.theory.updated_at > since
    ]
    units = [
        EvidenceItem("unit", uid, unit_conclusion_text(store.get_unit(uid)), store.get_unit(uid).created_at)
        for uid in node.pending_units
    ]
    theories.sort(key=lambda i: (-i.stamp, i.ref))
    units.sort(key=lambda i: (-i.stamp, i.ref))
    return theories + units


def rk2_project_select(store: MemoryStore, node_id: str, config: EvolutionConfig) -> list[EvidenceItem]:
    """Fresh edge theories before raw units, newest first within each, capped at K."""
    return gather_inputs(store, node_id)[: config.projection_cap_K]


def commit_rk2(
    store: MemoryStore,
    node_id: str,
    sigma: str,
    delta: str,
    input_digests: list[str],
    consumed: list[str],
) -> tuple[int, int]:
    node = _require_abstract(store, node_id)
    store.emit(
        "rk2_commit",
        {"node_id": node_id, "sigma": sigma, "delta": delta, "input_digests": list(input_digests), "consumed": list(consumed)},
    )
    theory = node.theory
    old = theory.version
    theory.version += 1
    theory.scale = 2
    theory.sigma, theory.delta = sigma, delta
    for d in input_digests:
        if d not in theory.input_digests:
            theory.input_digests.append(d)
    gone = set(consumed)
    node.pending_units = [u for u in node.pending_units if u not in gone]
    theory.updated_at = store.tick()
    node.dirty = True
    store.propagate_dirty(node_id)
    return old, theory.version


def rk2_synthesize(
    store: MemoryStore,
    node_id: str,
    selected: list[EvidenceItem],
    backend: Backend,
    config: EvolutionConfig,
) -> Optional[NodeTheory]:
    """Rebuild (sigma, delta) from the selected inputs; ``None`` when below ``theta_sum``."""
    node = _require_abstract(store, node_id)
    if node.pending_count < config.theta_sum:
        return None
    if not selected:
        selected = gather_inputs(store, node_id, fresh_only=False)
    items = [{"kind": i.kind, "text": i.text} for i in selected]
    theory = node.theory
    sigma = backend.call(BackendRequest("aggregate_common", {"items": items, "previous": theory.sigma}))["sigma"]
    delta = backend.call(BackendRequest("extract_salient", {"items": items, "previous": theory.delta}))["delta"]
    consumed = list(node.pending_units)
    digests = [i.digest() for i in selected] + [store.get_unit(u).source_digest for u in consumed]
    commit_rk2(store, node_id, sigma, delta, digests, consumed)
    return node.theory


# -- hierarchical flow -------------------------------------------------------

def commit_rk3(store: MemoryStore, node_id: str, theory: Optional[dict]) -> Optional[tuple[int, int]]:
    """Apply one visited node: update its theory if it changed, then clear its flag."""
    node = _require_abstract(store, node_id)
    store.emit("rk3_commit", {"node_id": node_id, "theory": theory})
    change = None
    current = node.theory
    if theory is not None and (theory["sigma"], theory["delta"], theory["scale"]) != (
        current.sigma,
        current.delta,
        current.scale,
    ):
        old = current.version
        current.version += 1
        current.sigma, current.delta, current.scale = theory["sigma"], theory["delta"], theory["scale"]
        for d in theory.get("input_digests", []):
            if d not in current.input_digests:
                current.input_digests.append(d)
        current.updated_at = store.tick()
        store.propagate_dirty(node_id)
        change = (old, current.version)
    node.dirty = False
    return change


def rk3_flow(store: MemoryStore, backend: Backend, config: EvolutionConfig | None = None) -> FlowReport:
    """Propagate child (sigma, delta) pairs upward until no abstract node is dirty."""
    config = config or EvolutionConfig()
    report = FlowReport()
    last_pass_changed = False
    while store.dirty_abstracts() and report.rk3_passes < config.max_passes:
        report.rk3_passes += 1
        last_pass_changed = False
        for node_id in store.abstract_topological_order():
            node = store.nodes[node_id]
            if not node.dirty:
                continue
            kids = [store.nodes[c] for c in store.abstract_children(node_id)]
            themed = [k for k in kids if k.theory.themed]
            payload = None
            if themed:
                children = [
                    {"name": k.canonical_name, "sigma": k.theory.sigma, "delta": k.theory.delta, "scale": k.theory.scale}
                    for k in sorted(themed, key=lambda k: k.id)
                ]
                out = backend.call(
                    BackendRequest(
                        "synergy_tension",
                        {"children": children, "previous": {"sigma": node.theory.sigma, "delta": node.theory.delta}},
                    )
                )
                payload = {
                    "sigma": out["sigma"],
                    "delta": out["delta"],
                    "scale": max(3, 1 + max(c["scale"] for c in children)),
                    "input_digests": [fnv16(c["sigma"] + "\n" + c["delta"]) for c in children],
                }
            change = commit_rk3(store, node_id, payload)
            if change is not None:
                report.changed_theories.append((node_id, *change))
                last_pass_changed = True
    report.fixed_point_reached = not store.dirty_abstracts() and not last_pass_changed
    return report


# -- orchestration -------------------------------------------------------------

def process_new_units(
    store: MemoryStore, unit_ids: list[str], backend: Backend, config: EvolutionConfig
) -> FlowReport:
    """Run edge inference, then node synthesis, then (optionally) the hierarchical flow.

    Each operator application commits atomically; a failure is recorded in
    ``report.errors`` and the remaining applications still run.
    """
    report = FlowReport()
    if not unit_ids:
        return report
    for edge in sorted(store.event_edges(), key=lambda e: e.id):
        if len(edge.pending_evidence) < config.theta_inf:
            continue
        old = edge.theory.version
        try:
            theory = rk1_update_edge(store, edge.id, backend, config)
        except RGMemError as exc:
            report.errors.append(f"rk1 {edge.id}: {exc}")
            continue
        if theory is not None:
            report.rk1_fired.append(edge.id)
            report.changed_theories.append((edge.id, old, theory.version))
    for node_id in sorted(n for n, node in store.nodes.items() if node.tier == ABSTRACT):
        node = store.nodes[node_id]
        if node.pending_count < config.theta_sum:
            continue
        old = node.theory.version
        try:
            selected = rk2_project_select(store, node_id, config)
            theory = rk2_synthesize(store, node_id, selected, backend, config)
        except RGMemError as exc:
            report.errors.append(f"rk2 {node_id}: {exc}")
            continue
        if theory is not None:
            report.rk2_fired.append(node_id)
            report.changed_theories.append((node_id, old, theory.version))
    if config.rk3_mode == AFTER_EACH_SESSION:
        try:
            report.merge(rk3_flow(store, backend, config))
        except BackendFailure as exc:
            report.errors.append(f"rk3: {exc}")
    else:
        report.fixed_point_reached = not store.dirty_abstracts()
    return report
