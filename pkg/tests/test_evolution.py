import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import abstract_id, chain_store, feed, make_unit
from rgmem.backend import MockBackend, regime_tag
from rgmem.errors import BackendFailure, ValidationError, WrongEdgeKind, WrongTier
from rgmem.evolution import (
    AFTER_EACH_SESSION,
    EvolutionConfig,
    process_new_units,
    rk1_update_edge,
    rk2_project_select,
    rk2_synthesize,
    rk3_flow,
)
from rgmem.extraction import ExtractionProposal, apply_proposal
from rgmem.store import ABSTRACT, MemoryStore

HOBBY = "Hobbies & Interests"


class BrokenBackend(MockBackend):
    def __init__(self, task):
        super().__init__()
        self.task = task

    def _respond(self, request):
        if request.task == self.task:
            raise BackendFailure("down")
        return super()._respond(request)


def edge_of(store):
    return next(e for e in store.event_edges() if e.label == "engages_in").id


def units(prefix, n, text="I love walking"):
    return [make_unit(f"{prefix}{k}", text, rel=[f"user: {text}"]) for k in range(n)]


# -- config ---------------------------------------------------------------------------

def test_config_defaults_and_validation():
    c = EvolutionConfig()
    assert (c.theta_inf, c.theta_sum, c.projection_cap_K, c.rk3_mode) == (3, 6, 12, "manual")
    for bad in ({"theta_inf": 0}, {"theta_inf": 4, "theta_sum": 3}, {"rk3_mode": "sometimes"}, {"max_passes": 0}):
        with pytest.raises(ValidationError):
            EvolutionConfig(**bad)


# -- edge inference -------------------------------------------------------------------

def test_rk1_below_threshold_changes_nothing():
    s = chain_store()
    feed(s, units("u", 2))
    before = s.state_hash()
    assert rk1_update_edge(s, edge_of(s), MockBackend(), EvolutionConfig()) is None
    assert s.state_hash() == before


def test_rk1_fires_at_threshold():
    s = chain_store()
    ids = feed(s, units("u", 3))
    e = edge_of(s)
    th = rk1_update_edge(s, e, MockBackend(), EvolutionConfig())
    assert th.version == 1 and th.evidence_ids == ids
    assert s.edges[e].pending_evidence == []
    assert th.summary.startswith("REL[1]: ")
    # consumed units were already counted on arrival
    assert s.nodes[abstract_id(s, HOBBY)].pending_count == 3
    assert s.nodes[abstract_id(s, HOBBY)].dirty


def test_rk1_backend_failure_is_atomic():
    s = chain_store()
    feed(s, units("u", 3))
    before = s.snapshot_state()
    with pytest.raises(BackendFailure):
        rk1_update_edge(s, edge_of(s), BrokenBackend("infer_relation"), EvolutionConfig())
    assert s.snapshot_state() == before


def test_rk1_rejects_classification_edge():
    s = chain_store()
    cls = next(e.id for e in s.edges.values() if e.kind == "classification")
    with pytest.raises(WrongEdgeKind):
        rk1_update_edge(s, cls, MockBackend(), EvolutionConfig())


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 5), theta=st.integers(1, 4), extra=st.integers(0, 3))
def test_criticality_counts_firings(k, theta, extra):
    extra = min(extra, theta - 1)
    s = chain_store()
    cfg = EvolutionConfig(theta_inf=theta, theta_sum=100)
    fired = 0
    for u in units("u", k * theta + extra):
        feed(s, [u])
        fired += len(process_new_units(s, [u.id], MockBackend(), cfg).rk1_fired)
    assert fired == k
    assert s.edges[edge_of(s)].theory.version == k


# -- projection ---------------------------------------------------------------------------

def two_edges_three_units():
    s = chain_store()
    apply_proposal(
        s,
        ExtractionProposal(
            instance_entities=[("jog@s1", "")],
            general_links=[("jog@s1", "jogging")],
            abstract_links=[("jogging", HOBBY)],
        ),
    )
    cfg = EvolutionConfig(theta_inf=1, theta_sum=100)
    for n, inst in enumerate(["walk@s1", "jog@s1"]):
        feed(s, [make_unit(f"e{n}", "edge evidence")], instance=inst)
        process_new_units(s, [f"e{n}"], MockBackend(), cfg)
    return s


def test_projection_puts_theories_first():
    s = two_edges_three_units()
    cfg = EvolutionConfig(theta_inf=50, theta_sum=100)
    feed(s, units("late", 3))
    sel = rk2_project_select(s, abstract_id(s, HOBBY), cfg)
    assert [i.kind for i in sel] == ["edge_theory"] * 2 + ["unit"] * 5
    # newest first within each class
    stamps = [i.stamp for i in sel]
    assert stamps[:2] == sorted(stamps[:2], reverse=True) and stamps[2:] == sorted(stamps[2:], reverse=True)


def test_projection_caps_to_newest():
    s = chain_store()
    ids = feed(s, units("u", 20))
    sel = rk2_project_select(s, abstract_id(s, HOBBY), EvolutionConfig())
    assert len(sel) == 12
    assert [i.ref for i in sel] == list(reversed(ids))[:12]


def test_projection_of_quiet_node_is_empty():
    s = chain_store()
    assert rk2_project_select(s, abstract_id(s, HOBBY), EvolutionConfig()) == []
    inst = s.find_node("walk@s1", "instance")
    with pytest.raises(WrongTier):
        rk2_project_select(s, inst, EvolutionConfig())


# -- node synthesis ---------------------------------------------------------------------------

def test_rk2_below_threshold():
    s = chain_store()
    feed(s, units("u", 5))
    node = abstract_id(s, HOBBY)
    assert rk2_synthesize(s, node, rk2_project_select(s, node, EvolutionConfig()), MockBackend(), EvolutionConfig()) is None


def test_rk2_mock_contract():
    s = chain_store()
    places = ["alder", "birch", "cedar", "dune", "elm", "fjord"]
    texts = [f"I love walking near {p}" for p in places]
    feed(s, [make_unit(f"u{k}", t, rel=[f"user: {t}"]) for k, t in enumerate(texts)])
    node = abstract_id(s, HOBBY)
    cfg = EvolutionConfig()
    th = rk2_synthesize(s, node, rk2_project_select(s, node, cfg), MockBackend(), cfg)
    assert th.version == 1 and th.scale == 2
    # shared keywords across all six, outliers are the per-unit place names
    assert th.sigma == "[+] love near user walking"
    assert th.delta == "outliers: " + ", ".join(places)
    assert s.nodes[node].pending_count == 0
    assert s.nodes[node].dirty


def test_rk2_empty_selection_regathers():
    s = chain_store()
    feed(s, units("u", 6))
    node = abstract_id(s, HOBBY)
    th = rk2_synthesize(s, node, [], MockBackend(), EvolutionConfig())
    assert th is not None and th.sigma == "[+] user: I love walking"


def test_rk2_failure_is_atomic():
    s = chain_store()
    feed(s, units("u", 6))
    node = abstract_id(s, HOBBY)
    before = s.snapshot_state()
    with pytest.raises(BackendFailure):
        rk2_synthesize(s, node, [], BrokenBackend("extract_salient"), EvolutionConfig())
    assert s.snapshot_state() == before


# -- hierarchical flow ----------------------------------------------------------------------------

def three_node_backbone():
    s = MemoryStore()
    root = s.add_node(ABSTRACT, "Root")
    a = s.add_node(ABSTRACT, "Alpha")
    b = s.add_node(ABSTRACT, "Beta")
    s.add_classification_edge(a, root)
    s.add_classification_edge(b, root)
    s.nodes[a].theory.sigma = "[+] hiking"
    s.nodes[a].theory.version = 1
    return s, root, a, b


def test_rk3_nothing_dirty():
    s, *_ = three_node_backbone()
    r = rk3_flow(s, MockBackend())
    assert (r.rk3_passes, r.fixed_point_reached, r.changed_theories) == (0, True, [])


def test_rk3_hand_trace():
    s, root, a, b = three_node_backbone()
    s.mark_dirty(a)
    s.propagate_dirty(a)
    r = rk3_flow(s, MockBackend())
    assert r.rk3_passes == 1
    assert r.changed_theories == [(root, 0, 1)]
    t = s.nodes[root].theory
    # Beta has no theme so only Alpha feeds the root
    assert (t.sigma, t.delta, t.scale) == ("[+] hiking", "", 3)
    assert s.dirty_abstracts() == []
    again = rk3_flow(s, MockBackend())
    assert again.rk3_passes == 0 and again.fixed_point_reached


def test_rk3_tension_between_children():
    s, root, a, b = three_node_backbone()
    s.nodes[b].theory.sigma = "[-] cooking"
    s.mark_dirty(root)
    rk3_flow(s, MockBackend())
    t = s.nodes[root].theory
    assert t.sigma == "[+] Alpha: hiking; Beta: cooking"
    assert t.delta == "tension: Beta(-)"


def test_rk3_second_run_is_identity():
    s, root, a, b = three_node_backbone()
    s.mark_dirty(root)
    rk3_flow(s, MockBackend())
    h = s.state_hash()
    s.mark_dirty(root)
    r = rk3_flow(s, MockBackend())
    assert r.changed_theories == [] and r.fixed_point_reached
    assert s.state_hash() == h


def test_rk3_changing_final_pass_is_not_a_fixed_point():
    class Restless(MockBackend):
        n = 0

        def _synergy_tension(self, p):
            self.n += 1
            return {"sigma": f"[+] round {self.n}", "delta": ""}

    s, root, a, b = three_node_backbone()
    s.mark_dirty(root)
    r = rk3_flow(s, Restless(), EvolutionConfig(max_passes=1))
    assert r.rk3_passes == 1 and r.changed_theories and not r.fixed_point_reached


# -- orchestration ----------------------------------------------------------------------------

def test_process_nothing():
    s = chain_store()
    r = process_new_units(s, [], MockBackend(), EvolutionConfig())
    assert (r.rk1_fired, r.rk2_fired, r.changed_theories) == ([], [], [])


def test_process_rk1_only():
    s = chain_store()
    ids = feed(s, units("u", 3))
    r = process_new_units(s, ids, MockBackend(), EvolutionConfig())
    assert r.rk1_fired == [edge_of(s)] and r.rk2_fired == []


def test_process_both_and_rk2_reads_edge_theory():
    s = chain_store()
    cfg = EvolutionConfig(rk3_mode=AFTER_EACH_SESSION)
    seen = []

    class Spy(MockBackend):
        def _aggregate_common(self, p):
            seen.append([i["kind"] for i in p["items"]])
            return super()._aggregate_common(p)

    r = process_new_units(s, feed(s, units("u", 6)), Spy(), cfg)
    assert len(r.rk1_fired) == 1 and len(r.rk2_fired) == 1
    assert seen and seen[0][0] == "edge_theory"
    assert r.rk3_passes >= 1


def test_process_keeps_partial_progress():
    s = chain_store()
    r = process_new_units(s, feed(s, units("u", 6)), BrokenBackend("aggregate_common"), EvolutionConfig())
    assert len(r.rk1_fired) == 1 and r.rk2_fired == [] and len(r.errors) == 1
    assert s.edges[edge_of(s)].theory.version == 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 8), theta_inf=st.integers(1, 5))
def test_subcritical_streams_change_no_theory(n, theta_inf):
    cfg = EvolutionConfig(theta_inf=theta_inf, theta_sum=theta_inf * 2)
    n = min(n, theta_inf - 1)
    s = chain_store()
    r = process_new_units(s, feed(s, units("u", n)) or ["none"], MockBackend(), cfg)
    assert r.changed_theories == []
    assert all(e.theory.version == 0 for e in s.event_edges())
    assert all(x.theory.version == 0 for x in s.nodes.values() if x.tier == ABSTRACT)


@pytest.mark.parametrize("negatives,flips", [(5, False), (6, True)])
def test_phase_transition_needs_theta_sum(negatives, flips):
    s = chain_store()
    cfg = EvolutionConfig()
    process_new_units(s, feed(s, units("p", 6)), MockBackend(), cfg)
    node = abstract_id(s, HOBBY)
    assert regime_tag(s.nodes[node].theory.sigma) == "+"
    process_new_units(s, feed(s, units("n", negatives, "I hate walking")), MockBackend(), cfg)
    assert (regime_tag(s.nodes[node].theory.sigma) == "-") is flips


@settings(max_examples=20, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_versions_never_decrease(stream):
    s = chain_store()
    cfg = EvolutionConfig(rk3_mode=AFTER_EACH_SESSION)
    last: dict[str, int] = {}
    for k, positive in enumerate(stream):
        u = make_unit(f"u{k}", "I love walking" if positive else "I hate walking")
        r = process_new_units(s, feed(s, [u]), MockBackend(), cfg)
        bumped = {c[0] for c in r.changed_theories}
        for nid, node in s.nodes.items():
            if node.theory is None:
                continue
            v = node.theory.version
            assert v >= last.get(nid, 0)
            if v > last.get(nid, 0):
                assert nid in bumped
            last[nid] = v
