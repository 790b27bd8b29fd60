import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain_store, make_unit
from rgmem.backend import MockBackend
from rgmem.errors import ParseError, TierViolation, UnknownUnit, ValidationError
from rgmem.extraction import (
    DEFAULT_TAXONOMY,
    ROOT_NAME,
    USER_NODE,
    ExtractionProposal,
    apply_proposal,
    attach_embeddings,
    load_taxonomy,
    propose_extraction,
    resolve_entity,
    taxonomy_proposal,
)
from rgmem.store import ABSTRACT, GENERAL, INSTANCE, MemoryStore


def seeded(backend=None):
    store = MemoryStore()
    prop = taxonomy_proposal(DEFAULT_TAXONOMY)
    if backend is not None:
        attach_embeddings(prop, backend)
    apply_proposal(store, prop)
    return store


def test_taxonomy_seed_shape():
    s = seeded(MockBackend())
    abstracts = [n for n in s.nodes.values() if n.tier == ABSTRACT]
    assert len(abstracts) == 9
    root = s.find_node(ROOT_NAME, ABSTRACT)
    assert sorted(s.abstract_children(root)) == sorted(n.id for n in abstracts if n.id != root)
    assert s.find_node(USER_NODE, INSTANCE) is not None
    assert s.check_invariants() == []


def test_mock_proposal_for_hiking_unit():
    u = make_unit("u1", "Alice loves hiking", session_id="s7")
    prop = propose_extraction(u, MockBackend())
    assert prop.instance_entities == [("hiking@s7", "hiking in session s7")]
    assert prop.general_links == [("hiking@s7", "hiking")]
    assert prop.abstract_links == [("hiking", "Hobbies & Interests")]
    assert prop.event_relations == [(USER_NODE, "hiking@s7", "engages_in", "u1")]


def test_mock_proposal_without_topic_is_empty():
    assert propose_extraction(make_unit("u1", "nothing to see"), MockBackend()).is_empty()


def test_apply_hand_count():
    store = seeded()
    before_nodes, before_edges = len(store.nodes), len(store.edges)
    store.add_episodic_unit(make_unit("u1", "Alice loves hiking"))
    prop = ExtractionProposal(
        instance_entities=[("hiking@s1", "")],
        general_links=[("hiking@s1", "hiking")],
        abstract_links=[("hiking", "Hobbies & Interests")],
        event_relations=[(USER_NODE, "hiking@s1", "engages_in", "u1")],
    )
    summary = apply_proposal(store, prop)
    # new: instance + general; edges: inst->gen, gen->abs, user->inst
    assert (summary.nodes_created, summary.edges_created) == (2, 3)
    assert len(store.nodes) == before_nodes + 2 and len(store.edges) == before_edges + 3
    hobbies = store.find_node("Hobbies & Interests", ABSTRACT)
    # only the instance side reaches an abstract; user:self hangs under none
    assert summary.pendings_incremented == 1
    assert store.nodes[hobbies].pending_units == ["u1"]
    edge = next(e for e in store.event_edges() if e.label == "engages_in")
    assert edge.pending_evidence == ["u1"]


def test_self_loop_relation_is_allowed():
    store = chain_store()
    store.add_episodic_unit(make_unit("u1"))
    apply_proposal(store, ExtractionProposal(event_relations=[("walk@s1", "walk@s1", "repeats", "u1")]))
    loop = next(e for e in store.event_edges() if e.label == "repeats")
    assert loop.src == loop.dst
    # the same abstract is reached from both endpoints but counted once
    assert store.nodes[store.find_node("Hobbies & Interests", ABSTRACT)].pending_units == ["u1"]


def test_names_normalize_to_one_node():
    store = MemoryStore()
    apply_proposal(store, ExtractionProposal(general_links=[("run@s1", "Trail Running")]))
    apply_proposal(store, ExtractionProposal(general_links=[("run@s2", "  trail   running ")]))
    gens = [n for n in store.nodes.values() if n.tier == GENERAL]
    assert len(gens) == 1 and gens[0].canonical_name == "Trail Running"


def test_embedding_merge_for_general_not_instance():
    store = MemoryStore()
    vec = [1.0, 0.0, 0.0]
    close = [0.99, 0.1, 0.0]
    store.add_node(GENERAL, "jogging", embedding=vec)
    store.add_node(INSTANCE, "jog@s1", embedding=vec)
    assert resolve_entity(store, "running", GENERAL, close) == store.find_node("jogging", GENERAL)
    assert resolve_entity(store, "run@s1", INSTANCE, close) is None
    assert resolve_entity(store, "running", GENERAL, [0.0, 1.0, 0.0]) is None
    with pytest.raises(ValidationError):
        resolve_entity(store, "  ", GENERAL)


def test_classification_link_must_climb():
    store = seeded()
    prop = ExtractionProposal(classification_links=[("Travel", ABSTRACT, "trip@s1", INSTANCE)])
    before = store.state_hash()
    with pytest.raises(TierViolation):
        apply_proposal(store, prop)
    assert store.state_hash() == before


def test_classification_link_abstract_cycle():
    store = seeded()
    prop = ExtractionProposal(classification_links=[(ROOT_NAME, ABSTRACT, "Travel", ABSTRACT)])
    with pytest.raises(TierViolation):
        apply_proposal(store, prop)


def test_classification_link_unknown_tier():
    with pytest.raises(ValidationError):
        apply_proposal(MemoryStore(), ExtractionProposal(classification_links=[("a", "leaf", "b", GENERAL)]))


def test_relation_to_undeclared_entity_or_unit():
    store = chain_store()
    store.add_episodic_unit(make_unit("u1"))
    with pytest.raises(ValidationError):
        apply_proposal(store, ExtractionProposal(event_relations=[(USER_NODE, "ghost@s1", "x", "u1")]))
    with pytest.raises(UnknownUnit):
        apply_proposal(store, ExtractionProposal(event_relations=[(USER_NODE, "walk@s1", "x", "u9")]))


def test_proposal_dict_roundtrip():
    prop = ExtractionProposal(
        instance_entities=[("a@s", "d")],
        classification_links=[("a@s", INSTANCE, "a", GENERAL)],
        embeddings={"a": [0.5, 0.5]},
    )
    assert ExtractionProposal.from_dict(prop.to_dict()) == prop


def test_taxonomy_file(tmp_path):
    good = tmp_path / "tax.json"
    good.write_text('[{"name": "Root"}, {"name": "Pets", "parent": "Root"}]')
    entries = load_taxonomy(good)
    assert [(e.name, e.parent) for e in entries] == [("Root", None), ("Pets", "Root")]
    bad = tmp_path / "bad.json"
    bad.write_text('[{"description": "no name"}]')
    with pytest.raises(ParseError):
        load_taxonomy(bad)


TOPICS = ["hiking", "cooking", "yoga", "paris", "budget", "guitar", "stress", "dog"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(TOPICS), st.sampled_from(TOPICS), st.integers(0, 3)), min_size=1, max_size=12))
def test_random_mock_extractions_keep_invariants(rows):
    backend = MockBackend()
    store = seeded(backend)
    for n, (a, b, sess) in enumerate(rows):
        u = make_unit(f"u{n}", f"I like {a} and {b}", session_id=f"s{sess}")
        store.add_episodic_unit(u)
        prop = attach_embeddings(propose_extraction(u, backend), backend)
        apply_proposal(store, prop)
        assert store.check_invariants() == []
    for node in store.nodes.values():
        if node.tier == ABSTRACT:
            assert len(set(node.pending_units)) == node.pending_count
