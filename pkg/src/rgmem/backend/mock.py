"""Deterministic stand-in for the LLM.

Every task has a small, fully specified contract so tests can compute expected
outputs independently. Outputs depend only on the request payload.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field
from functools import lru_cache

from rgmem.backend.base import Backend, BackendRequest
from rgmem.hashing import fnv1a_64, fnv8
from rgmem.text import content_tokens, keywords, normalize_answer, tokenize

NO_EVIDENCE = "NO EVIDENCE"
USER_NODE = "user:self"
RELATION_LABEL = "engages_in"
MAX_OUTLIERS = 16

DEFAULT_TOPICS: dict[str, tuple[str, str]] = {
    "hiking": ("hiking", "Hobbies & Interests"),
    "hike": ("hiking", "Hobbies & Interests"),
    "climbing": ("climbing", "Hobbies & Interests"),
    "painting": ("painting", "Hobbies & Interests"),
    "guitar": ("guitar", "Hobbies & Interests"),
    "photography": ("photography", "Hobbies & Interests"),
    "reading": ("reading", "Hobbies & Interests"),
    "books": ("reading", "Hobbies & Interests"),
    "gardening": ("gardening", "Hobbies & Interests"),
    "job": ("job", "Work & Career"),
    "work": ("job", "Work & Career"),
    "promotion": ("promotion", "Work & Career"),
    "startup": ("startup", "Work & Career"),
    "career": ("career", "Work & Career"),
    "running": ("running", "Health & Fitness"),
    "marathon": ("running", "Health & Fitness"),
    "yoga": ("yoga", "Health & Fitness"),
    "gym": ("gym", "Health & Fitness"),
    "swimming": ("swimming", "Health & Fitness"),
    "cooking": ("cooking", "Food & Diet"),
    "pasta": ("pasta", "Food & Diet"),
    "baking": ("baking", "Food & Diet"),
    "vegan": ("vegan diet", "Food & Diet"),
    "coffee": ("coffee", "Food & Diet"),
    "family": ("family", "Social & Family"),
    "sister": ("family", "Social & Family"),
    "kids": ("family", "Social & Family"),
    "friends": ("friends", "Social & Family"),
    "dog": ("pets", "Social & Family"),
    "cat": ("pets", "Social & Family"),
    "anxiety": ("anxiety", "Emotions & Wellbeing"),
    "stress": ("stress", "Emotions & Wellbeing"),
    "therapy": ("therapy", "Emotions & Wellbeing"),
    "travel": ("travel", "Travel"),
    "trip": ("travel", "Travel"),
    "paris": ("paris", "Travel"),
    "japan": ("japan", "Travel"),
    "budget": ("budgeting", "Finance"),
    "savings": ("savings", "Finance"),
    "invest": ("investing", "Finance"),
}


@dataclass
class MockLexicon:
    preference_markers: tuple[str, ...] = ("love", "like", "prefer", "hate", "always", "never")
    positive_markers: tuple[str, ...] = ("love", "like", "prefer", "always", "enjoy")
    negative_markers: tuple[str, ...] = ("hate", "never", "dislike", "quit")
    topic_table: dict[str, tuple[str, str]] = field(default_factory=lambda: dict(DEFAULT_TOPICS))

    def __post_init__(self) -> None:
        if not self.preference_markers or not self.topic_table:
            raise ValueError("mock lexicon tables must be non-empty")

    @staticmethod
    def _forms(markers) -> set[str]:
        out = set()
        for m in markers:
            out.update({m, m + "s", m + "d", m + "ed", m + "ing"})
        return out

    def has_marker(self, text: str, markers) -> bool:
        return bool(self._forms(markers) & set(tokenize(text)))

    def stance(self, text: str) -> int:
        """+1 positive, -1 negative, 0 neutral."""
        if self.has_marker(text, self.negative_markers):
            return -1
        if self.has_marker(text, self.positive_markers):
            return 1
        return 0


def regime_tag(sigma: str) -> str:
    """Extract the '+'/'-' regime tag that prefixes an order parameter."""
    if sigma.startswith("[+]"):
        return "+"
    if sigma.startswith("[-]"):
        return "-"
    return ""


def _strip_tag(sigma: str) -> str:
    return sigma[4:] if regime_tag(sigma) else sigma


def _outliers(text: str) -> set[str]:
    prefix = "outliers: "
    if not text.startswith(prefix):
        return set()
    return {w for w in text[len(prefix):].split(", ") if w}


def _render_outliers(words: set[str]) -> str:
    if not words:
        return ""
    return "outliers: " + ", ".join(sorted(words)[:MAX_OUTLIERS])


_MASK64 = (1 << 64) - 1


def _finalize(z: int) -> int:
    # splitmix64 output mix; raw FNV values for "tok|0", "tok|1", ... are strongly correlated
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


@lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int) -> np.ndarray:
    return np.array([_finalize(fnv1a_64(f"{token}|{d}")) / 2.0**63 - 1.0 for d in range(dim)])


def hash_embedding(text: str, dim: int = 64) -> list[float]:
    """Sum of per-token pseudo-random projections, normalised to unit length."""
    tokens = content_tokens(text) or tokenize(text) or [text.strip().lower()]
    acc = np.zeros(dim)
    for tok in tokens:
        acc += _token_vector(tok, dim)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        acc = _token_vector(text, dim)
        norm = float(np.linalg.norm(acc))
    return (acc / norm).tolist()


class MockBackend(Backend):
    name = "mock"

    def __init__(self, lexicon: MockLexicon | None = None, dim: int = 64):
        self.lexicon = lexicon or MockLexicon()
        self.dim = dim

    def _respond(self, request: BackendRequest) -> dict:
        return getattr(self, f"_{request.task}")(request.payload)

    # -- L0 synthesis ----------------------------------------------------
    def _synthesize(self, p: dict) -> dict:
        text = p["text"]
        stamp = p.get("timestamp")
        turns = []
        for line in text.split("\n"):
            speaker, _, utterance = line.partition(": ")
            turns.append((speaker, utterance))
        by_speaker: dict[str, list[str]] = {}
        for speaker, utterance in turns:
            by_speaker.setdefault(speaker, []).append(utterance)
        conclusions = []
        for speaker, utterances in by_speaker.items():
            when = f" on {stamp}" if stamp else ""
            conclusions.append({"text": f"{speaker} said{when}: {' '.join(utterances)}", "relevance": "base"})
        for speaker, utterance in turns:
            if self.lexicon.has_marker(utterance, self.lexicon.preference_markers):
                conclusions.append({"text": f"{speaker}: {utterance}", "relevance": "rel"})
        return {"lambda_fact": f"FACT({fnv8(text)})", "conclusions": conclusions}

    # -- graph extraction ------------------------------------------------
    def _extract(self, p: dict) -> dict:
        session = p["session_id"]
        out = {"instance_entities": [], "general_links": [], "abstract_links": [], "event_relations": []}
        seen = set()
        for tok in tokenize(p["text"]):
            if tok not in self.lexicon.topic_table:
                continue
            general, abstract = self.lexicon.topic_table[tok]
            if general in seen:
                continue
            seen.add(general)
            instance = f"{general}@{session}"
            out["instance_entities"].append({"name": instance, "description": f"{general} in session {session}"})
            out["general_links"].append({"instance": instance, "general": general})
            out["abstract_links"].append({"general": general, "abstract": abstract})
            out["event_relations"].append({"src": USER_NODE, "dst": instance, "label": RELATION_LABEL})
        return out

    # -- operators ---------------------------------------------------------
    def _infer_relation(self, p: dict) -> dict:
        digests = ",".join(sorted(fnv8(e) for e in p["evidence"]))
        return {"summary": f"REL[{int(p['version']) + 1}]: {p['summary']} ⊕ {digests}"}

    def _vote(self, texts: list[str], previous_tag: str) -> str:
        pos = neg = 0
        for t in texts:
            s = self.lexicon.stance(t)
            pos += s > 0
            neg += s < 0
        if pos + neg == 0:
            return previous_tag or "+"
        return "+" if 2 * pos >= pos + neg else "-"

    @staticmethod
    def _unit_texts(items: list[dict]) -> list[str]:
        units = [i["text"] for i in items if i.get("kind") == "unit"]
        return units or [i["text"] for i in items]

    def _common(self, texts: list[str]) -> set[str]:
        sets = [keywords(t) for t in texts]
        return set.intersection(*sets) if sets else set()

    def _aggregate_common(self, p: dict) -> dict:
        items, previous = p["items"], p["previous"] or ""
        texts = self._unit_texts(items)
        tag = self._vote([i["text"] for i in items], regime_tag(previous))
        if texts and all(t == texts[0] for t in texts):
            body = texts[0]
        else:
            common = self._common(texts)
            body = " ".join(sorted(common)) if common else (_strip_tag(previous) or "no common pattern")
        return {"sigma": f"[{tag}] {body}"}

    def _extract_salient(self, p: dict) -> dict:
        texts = self._unit_texts(p["items"])
        counts: dict[str, int] = {}
        for t in texts:
            for w in keywords(t):
                counts[w] = counts.get(w, 0) + 1
        singles = {w for w, c in counts.items() if c == 1} if len(texts) > 1 else set()
        common = self._common(texts)
        words = (singles | _outliers(p["previous"] or "")) - common
        return {"delta": _render_outliers(words)}

    def _synergy_tension(self, p: dict) -> dict:
        children = sorted(p["children"], key=lambda c: c["name"])
        tags = [regime_tag(c["sigma"]) or "+" for c in children]
        pos = tags.count("+")
        tag = "+" if 2 * pos >= len(tags) else "-"
        bodies = [_strip_tag(c["sigma"]) for c in children]
        if all(b == bodies[0] for b in bodies):
            body = bodies[0]
        else:
            common = self._common(bodies)
            body = " ".join(sorted(common)) if common else "; ".join(
                f"{c['name']}: {b}" for c, b in zip(children, bodies)
            )
        minority = [f"{c['name']}({t})" for c, t in zip(children, tags) if t != tag]
        delta = ("tension: " + ", ".join(minority)) if minority else ""
        return {"sigma": f"[{tag}] {body}", "delta": delta}

    # -- query side --------------------------------------------------------
    def _answer(self, p: dict) -> dict:
        q = set(content_tokens(p["question"]))
        best, best_score = None, -1
        for line in p["context"].split("\n"):
            if not line.startswith("- "):
                continue
            text = line[2:]
            if text.startswith("[") and "] " in text:
                text = text.split("] ", 1)[1]
            score = len(q & set(content_tokens(text)))
            if score > best_score:
                best, best_score = text, score
        return {"answer": best if best else NO_EVIDENCE}

    def _judge(self, p: dict) -> dict:
        gold = normalize_answer(str(p["gold"]))
        answer = normalize_answer(p["answer"])
        ok = bool(gold) and f" {gold} " in f" {answer} "
        return {"verdict": "correct" if ok else "incorrect"}

    def _embed(self, p: dict) -> dict:
        return {"vector": hash_embedding(p["text"], self.dim)}
