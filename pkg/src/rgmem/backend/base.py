from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Optional

import jsonschema

from rgmem.errors import SchemaViolation, ValidationError

TASKS = (
    "synthesize",
    "extract",
    "infer_relation",
    "aggregate_common",
    "extract_salient",
    "synergy_tension",
    "answer",
    "judge",
    "embed",
)

# max output tokens per task
DEFAULT_BUDGETS = {
    "synthesize": 400,
    "extract": 400,
    "infer_relation": 300,
    "aggregate_common": 400,
    "extract_salient": 400,
    "synergy_tension": 500,
    "answer": 300,
    "judge": 50,
    "embed": 0,
}

# payload keys each task requires
PAYLOAD_KEYS = {
    "synthesize": ("session_id", "turn_span", "text"),
    "extract": ("session_id", "text"),
    "infer_relation": ("summary", "version", "evidence"),
    "aggregate_common": ("items", "previous"),
    "extract_salient": ("items", "previous"),
    "synergy_tension": ("children", "previous"),
    "answer": ("question", "context"),
    "judge": ("question", "gold", "answer"),
    "embed": ("text",),
}


@dataclass
class BackendRequest:
    task: str
    payload: dict[str, Any]
    budget: Optional[int] = field(default=None)

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValidationError(f"unknown backend task {self.task!r}")
        missing = [k for k in PAYLOAD_KEYS[self.task] if k not in self.payload]
        if missing:
            raise ValidationError(f"{self.task} payload missing {missing}")
        if self.budget is None:
            self.budget = DEFAULT_BUDGETS[self.task]


@lru_cache(maxsize=None)
def load_schema(task: str) -> dict:
    text = resources.files("rgmem").joinpath("schemas", f"{task}.json").read_text("utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def load_prompt(task: str) -> str:
    return resources.files("rgmem").joinpath("prompts", f"{task}.txt").read_text("utf-8")


def validate_response(task: str, response: Any) -> dict:
    try:
        jsonschema.validate(response, load_schema(task))
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"{task}: {exc.message}") from None
    return response


class Backend:
    """Interface: ``call`` returns a schema-valid dict or raises; ``embed`` returns a unit vector."""

    name = "base"
    dim: int = 0

    def call(self, request: BackendRequest) -> dict:
        return validate_response(request.task, self._respond(request))

    def _respond(self, request: BackendRequest) -> Any:
        raise NotImplementedError

    def embed(self, text: str) -> list[float]:
        if not text or not text.strip():
            raise ValidationError("cannot embed empty text")
        out = self.call(BackendRequest("embed", {"text": text}))
        return out["vector"]

    def close(self) -> None:
        pass
