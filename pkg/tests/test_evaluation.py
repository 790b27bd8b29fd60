import copy
import json
from pathlib import Path

import pytest

from conftest import data_path, micro_dataset_doc
from rgmem.backend import MockBackend
from rgmem.errors import BackendFailure, ParseError, SchemaViolation
from rgmem.evaluation import (
    CORRECT,
    ERROR,
    ablation_configs,
    convert_locomo,
    judge_answer,
    load_dataset,
    parse_dataset,
    render_table,
    run_eval,
    suite_document,
    sweep_configs,
    validate_report,
)

GOLDEN = Path(__file__).parent / "golden" / "micro_eval_full.json"


@pytest.fixture(scope="module")
def dataset():
    return load_dataset(data_path("micro_locomo.json"))


@pytest.fixture(scope="module")
def full_report(dataset):
    from rgmem.config import load_config

    return run_eval(dataset, load_config(env={}), MockBackend(), MockBackend())


def test_bundled_dataset_shape(dataset):
    assert len(dataset.conversations) == 2 and len(dataset.qa_items) == 12
    assert sum(q.category == "adversarial" for q in dataset.qa_items) == 2
    assert [len(s.turns) for s in dataset.conversation("c1").sessions] == [30, 30]


def test_missing_category_is_parse_error():
    doc = micro_dataset_doc()
    del doc["qa"][3]["category"]
    with pytest.raises(ParseError, match=r"qa\[3\]"):
        parse_dataset(doc)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["qa"][0].update(category="trivia"),
        lambda d: d["qa"][0].update(conversation_id="c9"),
        lambda d: d["conversations"][0]["sessions"][0]["turns"][0].pop("text"),
        lambda d: d["conversations"].append(copy.deepcopy(d["conversations"][0])),
        lambda d: d.pop("qa"),
    ],
)
def test_malformed_documents(mutate):
    doc = micro_dataset_doc()
    mutate(doc)
    with pytest.raises(ParseError):
        parse_dataset(doc)


def test_invalid_json_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"conversations": [\n  oops\n]}')
    with pytest.raises(ParseError, match="line 2 column 3"):
        load_dataset(bad)


def test_locomo_release_layout_converts():
    sample = {
        "sample_id": "conv-26",
        "conversation": {
            "speaker_a": "Ann",
            "session_2": [{"speaker": "Ann", "text": "later"}],
            "session_2_date_time": "2 May",
            "session_1": [{"speaker": "Ann", "text": "I love yoga", "dia_id": "D1:1"}],
            "session_1_date_time": "1 May",
        },
        "qa": [
            {"question": "What does Ann love?", "answer": "yoga", "category": 4},
            {"question": "Trick?", "adversarial_answer": "none", "category": 5},
        ],
    }
    ds = parse_dataset([sample])
    (conv,) = ds.conversations
    assert [s.session_id for s in conv.sessions] == ["conv-26-s1", "conv-26-s2"]
    assert conv.sessions[0].session_timestamp == "1 May"
    assert [(q.category, q.answer) for q in ds.qa_items] == [("single_hop", "yoga"), ("adversarial", "none")]
    assert convert_locomo([sample])["qa"][0]["conversation_id"] == "conv-26"


# -- running -----------------------------------------------------------------------

def test_golden_report(full_report):
    golden = json.loads(GOLDEN.read_text())
    assert full_report.overall_accuracy == golden["overall_accuracy"]
    assert full_report.avg_context_tokens == golden["avg_context_tokens"]
    assert full_report.per_category == golden["per_category"]
    assert [[i["question"], i["verdict"]] for i in full_report.items] == golden["verdicts"]


def test_adversarial_excluded_by_default(full_report, dataset):
    assert full_report.excluded == 2 and "adversarial" not in full_report.per_category
    assert full_report.attempted + full_report.errors == 10
    with_adv = run_eval(dataset, full_report_config(), MockBackend(), MockBackend(), exclude=())
    assert with_adv.per_category["adversarial"]["attempted"] == 2 and with_adv.excluded == 0


def full_report_config():
    from rgmem.config import load_config

    return load_config(env={})


def test_report_algebra(full_report):
    cats = [c for c in full_report.per_category.values() if c["attempted"]]
    weighted = sum(c["accuracy"] * c["attempted"] for c in cats) / sum(c["attempted"] for c in cats)
    assert full_report.overall_accuracy == pytest.approx(weighted, abs=1e-9)
    assert full_report.correct == sum(i["verdict"] == CORRECT for i in full_report.items)


def test_rerun_is_identical(dataset, full_report):
    again = run_eval(dataset, full_report_config(), MockBackend(), MockBackend())
    assert again.to_dict() == full_report.to_dict()


def test_conversations_are_isolated(dataset, full_report):
    alone = parse_dataset(micro_dataset_doc())
    alone.conversations = [alone.conversation("c2")]
    alone.qa_items = [q for q in alone.qa_items if q.conversation_id == "c2"]
    solo = run_eval(alone, full_report_config(), MockBackend(), MockBackend())
    both = [i for i in full_report.items if i["conversation_id"] == "c2"]
    assert solo.items == both


def test_zero_items_gives_null_accuracy(dataset):
    empty = parse_dataset({"conversations": [], "qa": []})
    r = run_eval(empty, full_report_config(), MockBackend(), MockBackend())
    assert r.overall_accuracy is None and r.avg_context_tokens is None
    assert all(c["accuracy"] is None for c in r.per_category.values())
    validate_report(suite_document([r]))


class DeadJudge(MockBackend):
    def _judge(self, p):
        raise BackendFailure("judge offline")


def test_judge_errors_leave_the_denominator(dataset):
    r = run_eval(dataset, full_report_config(), MockBackend(), DeadJudge())
    assert r.errors == 10 and r.attempted == 0 and r.overall_accuracy is None
    assert judge_answer("q", "a", "a", DeadJudge()) == ERROR


def test_ablation_labels_and_flags():
    runs = dict(ablation_configs(full_report_config()))
    assert list(runs) == ["full", "w/o L1", "w/o L0"]
    assert not runs["w/o L1"].retrieval.include_l1 and not runs["w/o L1"].retrieval.include_l2
    assert not runs["w/o L0"].retrieval.include_l0 and runs["w/o L0"].retrieval.include_l1


def test_sweep_ties_theta_sum():
    runs = sweep_configs(full_report_config(), [2, 5])
    assert [(c.evolution.theta_inf, c.evolution.theta_sum) for _, c in runs] == [(2, 4), (5, 10)]
    pinned = sweep_configs(full_report_config(), [2, 5], theta_sum=12)
    assert {c.evolution.theta_sum for _, c in pinned} == {12}


def test_suite_document_and_table(full_report):
    doc = suite_document([full_report], "micro.json")
    validate_report(doc)
    broken = json.loads(json.dumps(doc))
    broken["runs"][0]["items"][0]["verdict"] = "maybe"
    with pytest.raises(SchemaViolation):
        validate_report(broken)
    table = render_table([full_report])
    assert table.splitlines()[0].startswith("run") and "90.00" in table
