"""Tokenisation helpers shared by indexing, the mock backend and the judge."""

from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9]+")
_ALPHA_KEYWORD = re.compile(r"[a-z]{3,}")

STOPWORDS = frozenset(
    """
    a about after all also am an and any are as at be been before being but by can
    could did do does doing during for from had has have having he her here hers him
    his how i if in into is it its just me my no nor not now of off on once only or
    other our out over own same she should so some such than that the their them then
    there these they this those through to too under until up very was we were what
    when where which while who whom why will with would you your yours said
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; empty pieces dropped."""
    return _TOKEN.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


def keywords(text: str) -> set[str]:
    """Alphabetic tokens of length >= 3 that are not stopwords."""
    return {t for t in tokenize(text) if _ALPHA_KEYWORD.fullmatch(t) and t not in STOPWORDS}


def normalize_answer(text: str) -> str:
    return " ".join(tokenize(text))
