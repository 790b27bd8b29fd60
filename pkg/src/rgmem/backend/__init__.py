"""Pluggable providers for every nonlinear transform the engine needs."""

from rgmem.backend.base import DEFAULT_BUDGETS, TASKS, Backend, BackendRequest
from rgmem.backend.mock import MockBackend, MockLexicon, regime_tag
from rgmem.backend.remote import RemoteBackend

__all__ = [
    "Backend",
    "BackendRequest",
    "DEFAULT_BUDGETS",
    "MockBackend",
    "MockLexicon",
    "RemoteBackend",
    "TASKS",
    "make_backend",
    "make_judge",
    "regime_tag",
]


def make_backend(settings, judge: bool = False) -> Backend:
    """Build a backend from a :class:`rgmem.config.BackendConfig`."""
    mode = settings.judge_mode if judge else settings.mode
    if mode == "mock":
        return MockBackend(dim=settings.embed_dim)
    if mode == "remote":
        return RemoteBackend(
            base_url=settings.base_url,
            api_key=settings.api_key,
            model=settings.judge_model if judge else settings.model,
            embed_model=settings.embed_model,
            max_concurrency=settings.max_concurrency,
            requests_per_minute=settings.requests_per_minute,
            timeout=settings.timeout,
        )
    raise ValueError(f"unknown backend mode {mode!r}")


def make_judge(settings) -> Backend:
    return make_backend(settings, judge=True)
