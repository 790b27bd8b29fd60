import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_unit, session
from rgmem.backend import MockBackend
from rgmem.backend.mock import NO_EVIDENCE
from rgmem.engine import MemoryEngine
from rgmem.errors import ValidationError
from rgmem.extraction import ExtractionProposal, apply_proposal, attach_embeddings
from rgmem.indexing import CONCLUSIONS, FACTS, MemoryIndexes
from rgmem.retrieval import (
    MACRO_HEADER,
    MESO_HEADER,
    MICRO_HEADER,
    RetrievalConfig,
    answer_query,
    approx_tokens,
    assemble_context,
    probe_meso_macro,
    probe_micro,
    render_context,
)
from rgmem.store import ABSTRACT, MemoryStore

OFF = RetrievalConfig(include_l0=False, include_l1=False, include_l2=False)


def fixture(theme="[+] hiking outdoors", second=False):
    """hiking@s1 -> hiking -> Hobbies, with an optional sibling instance."""
    mock = MockBackend()
    store = MemoryStore()
    ix = MemoryIndexes().attach(store)
    inst = [("hiking@s1", "")] + ([("hiking@s2", "")] if second else [])
    prop = ExtractionProposal(
        instance_entities=inst,
        general_links=[(name, "hiking") for name, _ in inst],
        abstract_links=[("hiking", "Hobbies")],
    )
    apply_proposal(store, attach_embeddings(prop, mock))
    hobbies = store.find_node("Hobbies", ABSTRACT)
    store.nodes[hobbies].theory.sigma = theme
    return store, ix, mock, hobbies


def test_micro_empty_store():
    store = MemoryStore()
    assert probe_micro(store, MemoryIndexes().attach(store), "anything", RetrievalConfig()) == []


def test_micro_is_index_composition():
    store = MemoryStore()
    ix = MemoryIndexes().attach(store)
    store.add_episodic_unit(make_unit("u1", "hiking in peru", rel=["user: loves hiking"]))
    store.add_episodic_unit(make_unit("u2", "pasta night"))
    cfg = RetrievalConfig()
    got = probe_micro(store, ix, "hiking fact", cfg)
    want = [("fact", d) for d, _ in ix.bm25_search("hiking fact", FACTS, 5)]
    want += [("conclusion", d) for d, _ in ix.bm25_search("hiking fact", CONCLUSIONS, 30)]
    assert [(i["kind"], i["id"]) for i in got] == want
    assert sum(i["kind"] == "fact" for i in got) == 2
    with pytest.raises(ValidationError):
        probe_micro(store, ix, "  ", cfg)


def test_macro_single_ancestor():
    store, ix, mock, hobbies = fixture()
    meso, macro, matched = probe_meso_macro(store, ix, "hiking", RetrievalConfig(), mock)
    assert [m["node_id"] for m in macro] == [hobbies]
    assert macro[0]["scale"] == 2 and meso == []
    assert matched[0]["cosine"] == pytest.approx(1.0)


def test_shared_ancestor_appears_once():
    store, ix, mock, hobbies = fixture(second=True)
    _, macro, matched = probe_meso_macro(store, ix, "hiking", RetrievalConfig(), mock)
    assert len(matched) == 3 and [m["node_id"] for m in macro] == [hobbies]


def test_unthemed_ancestor_and_far_query():
    store, ix, mock, _ = fixture(theme="")
    assert probe_meso_macro(store, ix, "hiking", RetrievalConfig(), mock)[1] == []
    meso, macro, matched = probe_meso_macro(store, ix, "quarterly budget spreadsheet", RetrievalConfig(), mock)
    assert (meso, macro, matched) == ([], [], [])


def test_headers_only_when_everything_is_off():
    store, ix, mock, _ = fixture()
    doc = assemble_context(store, ix, "hiking", OFF, mock)
    assert doc.text == f"{MACRO_HEADER}\n{MESO_HEADER}\n{MICRO_HEADER}\n"
    assert doc.approx_tokens == approx_tokens(doc.text) == 13  # 51 chars


def test_render_format():
    text = render_context(
        [{"name": "Hobbies", "scale": 3, "sigma": "[+] x", "delta": "d"}],
        [{"src": "user:self", "label": "likes", "dst": "tea@s1", "summary": "REL"}],
        [{"id": "u1", "text": "fact"}],
    )
    assert text.splitlines() == [
        MACRO_HEADER,
        "- Hobbies (scale 3): [+] x; d",
        MESO_HEADER,
        "- user:self -[likes]-> tea@s1: REL",
        MICRO_HEADER,
        "- [u1] fact",
    ]


def talkative_engine(config):
    e = MemoryEngine(config, MockBackend())
    for sid in ("s1", "s2"):
        e.ingest_session(session(sid, [f"I love hiking near {sid} lake {k}" if k % 2 == 0 else "nice" for k in range(40)]))
    e.ingest_session(session("s3", [f"I love cooking pasta {k}" if k % 2 == 0 else "yum" for k in range(40)]))
    e.evolve()
    return e


def test_ablation_equivalence_and_byte_stability(config):
    e = talkative_engine(config)
    q = "hiking"
    micro_only = e.context(q, {"include_l1": False, "include_l2": False})
    assert micro_only.text == render_context([], [], probe_micro(e.store, e.indexes, q, e.config.retrieval))
    full = e.context(q)
    assert full.macro_section and full.micro_section
    assert e.context(q).text == full.text
    no_l0 = e.context(q, {"include_l0": False})
    assert no_l0.micro_section == [] and no_l0.macro_section == full.macro_section


def test_cross_scale_consistency(config):
    e = talkative_engine(config)
    doc = e.context("hiking lake")
    matched = {m["node_id"] for m in doc.matched_entities}
    for m in doc.macro_section:
        reach = {m["node_id"]} if m["node_id"] in matched else set()
        assert reach or any(m["node_id"] in e.store.abstract_ancestors(n) for n in matched)
    for edge in doc.meso_section:
        ends = {e.store.edges[edge["edge_id"]].src, e.store.edges[edge["edge_id"]].dst}
        assert ends & matched


ENGINE: dict = {}


@settings(max_examples=15, deadline=None)
@given(flags=st.tuples(st.booleans(), st.booleans(), st.booleans()), extra=st.sampled_from(["include_l0", "include_l1", "include_l2"]))
def test_adding_a_section_never_shrinks_tokens(flags, extra):
    from rgmem.config import load_config

    e = ENGINE.get("e") or ENGINE.setdefault("e", talkative_engine(load_config(env={})))
    base = dict(zip(["include_l0", "include_l1", "include_l2"], flags))
    more = {**base, extra: True}
    q = "hiking lake pasta"
    assert e.context(q, more).approx_tokens >= e.context(q, base).approx_tokens


def test_answer_single_fact_and_empty_store():
    store = MemoryStore()
    ix = MemoryIndexes().attach(store)
    mock = MockBackend()
    assert answer_query(store, ix, "where?", RetrievalConfig(), mock)[0] == NO_EVIDENCE
    store.add_episodic_unit(make_unit("u1", "Maya hiked in Peru"))
    answer, ctx = answer_query(store, ix, "Where did Maya hike?", RetrievalConfig(n_facts=0), mock)
    assert answer == "Maya hiked in Peru" and "[u1:b0] Maya hiked in Peru" in ctx.text


def test_override_validation(config):
    e = MemoryEngine(config, MockBackend())
    with pytest.raises(ValidationError):
        e.context("q", {"n_bananas": 3})
    with pytest.raises(ValidationError):
        e.context("q", {"entity_min_cos": 2.0})
