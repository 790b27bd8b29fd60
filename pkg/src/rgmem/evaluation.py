"""LOCOMO-style question answering evaluation with ablation switches and token accounting.

Dataset format (one JSON document)::

    {
      "conversations": [
        {"conversation_id": "c1",
         "sessions": [{"session_id": "c1-s1", "date_time": "2023-05-08",
                       "turns": [{"speaker": "Ana", "text": "..."}]}]}
      ],
      "qa": [{"question": "...", "answer": "...", "category": "single_hop",
              "conversation_id": "c1"}]
    }

A file in the original LOCOMO release layout (a list of samples carrying
``conversation`` with ``session_<n>`` / ``session_<n>_date_time`` keys and ``qa``
items with integer categories) is converted on load; see ``convert_locomo``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from rgmem.backend import Backend, BackendRequest
from rgmem.backend.base import load_schema
from rgmem.config import EngineConfig
from rgmem.engine import MemoryEngine
from rgmem.errors import BackendFailure, ParseError, RGMemError, SchemaViolation
from rgmem.evolution import MANUAL
from rgmem.ingestion import RawSession, Turn

log = logging.getLogger(__name__)

CATEGORIES = ("single_hop", "multi_hop", "temporal", "open_domain", "adversarial")
# integer codes used by the public LOCOMO release
LOCOMO_CATEGORY_CODES = {1: "multi_hop", 2: "temporal", 3: "open_domain", 4: "single_hop", 5: "adversarial"}
CORRECT, INCORRECT, ERROR = "correct", "incorrect", "error"


@dataclass
class QAItem:
    question: str
    answer: str
    category: str
    conversation_id: str


@dataclass
class Conversation:
    conversation_id: str
    sessions: list[RawSession]


@dataclass
class EvalDataset:
    conversations: list[Conversation]
    qa_items: list[QAItem]

    def conversation(self, cid: str) -> Conversation:
        for c in self.conversations:
            if c.conversation_id == cid:
                return c
        raise KeyError(cid)


@dataclass
class EvalReport:
    label: str
    per_category: dict[str, dict]
    overall_accuracy: Optional[float]
    avg_context_tokens: Optional[float]
    attempted: int
    correct: int
    errors: int
    excluded: int
    items: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    token_note: str = "approximate tokens = ceil(characters / 4)"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- loading -----------------------------------------------------------------
def _need(obj: Any, key: str, where: str, kind=str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is str and isinstance(value, (int, float)) and not isinstance(value, bool):
        value = str(value)
    if not isinstance(value, kind):
        raise ParseError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _category(raw: Any, where: str) -> str:
    if isinstance(raw, int) and not isinstance(raw, bool):
        if raw not in LOCOMO_CATEGORY_CODES:
            raise ParseError(f"{where}: unknown category code {raw}")
        return LOCOMO_CATEGORY_CODES[raw]
    if raw not in CATEGORIES:
        raise ParseError(f"{where}: category must be one of {CATEGORIES}, got {raw!r}")
    return raw


def convert_locomo(samples: list) -> dict:
    """Map the public LOCOMO release layout onto the native dataset document.

    Each sample's ``conversation`` holds ``session_<n>`` turn lists (``speaker``,
    ``text``) and matching ``session_<n>_date_time`` strings; sessions are ordered
    by n. Adversarial items whose gold lives in ``adversarial_answer`` keep that text.
    """
    conversations, qa = [], []
    for i, sample in enumerate(samples):
        where = f"sample[{i}]"
        cid = str(sample.get("sample_id", f"conv-{i}"))
        conv = _need(sample, "conversation", where, dict)
        numbers = sorted(
            int(k.split("_")[1]) for k in conv if k.startswith("session_") and k.split("_")[1].isdigit() and k.count("_") == 1
        )
        sessions = []
        for n in numbers:
            sessions.append(
                {
                    "session_id": f"{cid}-s{n}",
                    "date_time": conv.get(f"session_{n}_date_time"),
                    "turns": [{"speaker": t["speaker"], "text": t["text"]} for t in conv[f"session_{n}"]],
                }
            )
        conversations.append({"conversation_id": cid, "sessions": sessions})
        for item in sample.get("qa", []):
            gold = item.get("answer", item.get("adversarial_answer", ""))
            qa.append(
                {
                    "question": item.get("question", ""),
                    "answer": str(gold),
                    "category": item.get("category"),
                    "conversation_id": cid,
                }
            )
    return {"conversations": conversations, "qa": qa}


def parse_dataset(doc: Any) -> EvalDataset:
    if isinstance(doc, list):
        doc = convert_locomo(doc)
    if not isinstance(doc, dict):
        raise ParseError("dataset must be a JSON object or a list of LOCOMO samples")
    conversations = []
    for ci, raw in enumerate(_need(doc, "conversations", "dataset", list)):
        where = f"conversations[{ci}]"
        cid = _need(raw, "conversation_id", where)
        sessions = []
        for si, rs in enumerate(_need(raw, "sessions", where, list)):
            swhere = f"{where}.sessions[{si}]"
            sid = _need(rs, "session_id", swhere)
            stamp = rs.get("date_time")
            turns = []
            for ti, rt in enumerate(_need(rs, "turns", swhere, list)):
                twhere = f"{swhere}.turns[{ti}]"
                turns.append(Turn(_need(rt, "speaker", twhere), _need(rt, "text", twhere), ti))
            sessions.append(RawSession(sid, turns, stamp))
        conversations.append(Conversation(cid, sessions))
    known = {c.conversation_id for c in conversations}
    if len(known) != len(conversations):
        raise ParseError("duplicate conversation_id")
    items = []
    for qi, raw in enumerate(_need(doc, "qa", "dataset", list)):
        where = f"qa[{qi}]"
        cid = _need(raw, "conversation_id", where)
        if cid not in known:
            raise ParseError(f"{where}: unknown conversation_id {cid!r}")
        if "category" not in raw:
            raise ParseError(f"{where}: missing field 'category'")
        items.append(
            QAItem(_need(raw, "question", where), _need(raw, "answer", where), _category(raw["category"], where), cid)
        )
    return EvalDataset(conversations, items)


def load_dataset(path: str | Path) -> EvalDataset:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read dataset {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_dataset(doc)


# -- judging -------------------------------------------------------------------
def judge_answer(question: str, gold: str, answer: str, judge_backend: Backend) -> str:
    try:
        out = judge_backend.call(BackendRequest("judge", {"question": question, "gold": gold, "answer": answer}))
    except BackendFailure as exc:
        log.warning("judge failed: %s", exc)
        return ERROR
    return out["verdict"]


# -- running -------------------------------------------------------------------
def _accuracy(correct: int, attempted: int) -> Optional[float]:
    return round(100.0 * correct / attempted, 4) if attempted else None


def _config_echo(config: EngineConfig) -> dict:
    r, e = config.retrieval, config.evolution
    return {
        "include_l0": r.include_l0,
        "include_l1": r.include_l1,
        "include_l2": r.include_l2,
        "theta_inf": e.theta_inf,
        "theta_sum": e.theta_sum,
        "projection_cap_K": e.projection_cap_K,
        "n_facts": r.n_facts,
        "n_conclusions": r.n_conclusions,
        "n_entities": r.n_entities,
        "entity_min_cos": r.entity_min_cos,
    }


def run_eval(
    dataset: EvalDataset,
    config: EngineConfig,
    backend: Backend,
    judge_backend: Backend,
    label: str = "full",
    exclude: tuple[str, ...] = ("adversarial",),
) -> EvalReport:
    """Fresh in-memory profile per conversation: ingest, one hierarchical flow, then answer."""
    config = dataclasses.replace(config, evolution=dataclasses.replace(config.evolution, rk3_mode=MANUAL))
    stats = {c: {"correct": 0, "attempted": 0, "errors": 0} for c in CATEGORIES if c not in exclude}
    records, excluded, tokens = [], 0, []
    for conv in dataset.conversations:
        todo = [q for q in dataset.qa_items if q.conversation_id == conv.conversation_id]
        if not todo:
            continue
        engine = MemoryEngine(config, backend)
        ingest_error = None
        try:
            for session in conv.sessions:
                engine.ingest_session(session)
            engine.evolve()
        except RGMemError as exc:
            ingest_error = f"{exc.code}: {exc}"
            log.warning("conversation %s failed during ingestion: %s", conv.conversation_id, exc)
        for item in todo:
            if item.category in exclude:
                excluded += 1
                continue
            rec = {"conversation_id": conv.conversation_id, "question": item.question, "gold": item.answer,
                   "category": item.category, "answer": None, "verdict": ERROR, "context_tokens": None}
            if ingest_error is None:
                try:
                    answer, ctx = engine.query(item.question)
                    rec["answer"], rec["context_tokens"] = answer, ctx.approx_tokens
                    rec["verdict"] = judge_answer(item.question, item.answer, answer, judge_backend)
                except RGMemError as exc:
                    log.warning("item failed: %s", exc)
            s = stats[item.category]
            if rec["verdict"] == ERROR:
                s["errors"] += 1
            else:
                s["attempted"] += 1
                s["correct"] += rec["verdict"] == CORRECT
                tokens.append(rec["context_tokens"])
            records.append(rec)
    per_category = {
        c: {**s, "accuracy": _accuracy(s["correct"], s["attempted"])} for c, s in stats.items()
    }
    attempted = sum(s["attempted"] for s in stats.values())
    correct = sum(s["correct"] for s in stats.values())
    return EvalReport(
        label=label,
        per_category=per_category,
        overall_accuracy=_accuracy(correct, attempted),
        avg_context_tokens=round(sum(tokens) / len(tokens), 4) if tokens else None,
        attempted=attempted,
        correct=correct,
        errors=sum(s["errors"] for s in stats.values()),
        excluded=excluded,
        items=records,
        config=_config_echo(config),
    )


def ablation_configs(config: EngineConfig) -> list[tuple[str, EngineConfig]]:
    """Full context, without the relation/profile scales, without raw evidence."""
    r = config.retrieval
    return [
        ("full", config),
        ("w/o L1", dataclasses.replace(config, retrieval=dataclasses.replace(r, include_l1=False, include_l2=False))),
        ("w/o L0", dataclasses.replace(config, retrieval=dataclasses.replace(r, include_l0=False))),
    ]


def sweep_configs(config: EngineConfig, theta_infs: list[int], theta_sum: Optional[int] = None) -> list[tuple[str, EngineConfig]]:
    """One config per theta_inf; theta_sum follows 2 * theta_inf unless pinned."""
    out = []
    for t in theta_infs:
        evo = dataclasses.replace(config.evolution, theta_inf=t, theta_sum=theta_sum if theta_sum else 2 * t)
        out.append((f"theta_inf={t}", dataclasses.replace(config, evolution=evo)))
    return out


def render_table(reports: list[EvalReport]) -> str:
    cats = [c for c in CATEGORIES if any(c in r.per_category for r in reports)]
    header = ["run"] + cats + ["overall", "avg tokens"]

    def fmt(v) -> str:
        return "-" if v is None else f"{v:.2f}"

    rows = [header]
    for r in reports:
        rows.append(
            [r.label]
            + [fmt(r.per_category[c]["accuracy"]) if c in r.per_category else "-" for c in cats]
            + [fmt(r.overall_accuracy), fmt(r.avg_context_tokens)]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [" | ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def suite_document(reports: list[EvalReport], dataset_path: str = "") -> dict:
    return {
        "format": "rgmem-eval-report",
        "version": 1,
        "dataset": dataset_path,
        "runs": [r.to_dict() for r in reports],
    }


def validate_report(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema("eval_report"))
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"eval report: {exc.message}") from None
