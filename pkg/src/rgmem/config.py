"""Engine configuration.

Precedence per field: CLI flag > environment variable > TOML file > built-in default.
Every leaf field has an environment variable named ``RGMEM_<FIELD>`` (upper case);
the backend section additionally honours RGMEM_API_KEY, RGMEM_BASE_URL,
RGMEM_MODEL and RGMEM_EMBED_MODEL.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from rgmem.errors import ValidationError
from rgmem.evolution import EvolutionConfig
from rgmem.retrieval import RetrievalConfig

DEFAULT_CONFIG_FILE = "rgmem.toml"


@dataclass
class BackendConfig:
    mode: str = "mock"
    model: str = "gpt-4.1-mini"
    embed_model: str = "text-embedding-3-small"
    base_url: str = "https://api.openai.com/v1"
    api_key: str = ""
    embed_dim: int = 64
    judge_mode: str = "mock"
    judge_model: str = "gpt-4.1"
    max_concurrency: int = 4
    requests_per_minute: float = 120.0
    timeout: float = 60.0

    def __post_init__(self) -> None:
        for name in ("mode", "judge_mode"):
            if getattr(self, name) not in ("mock", "remote"):
                raise ValidationError(f"backend {name} must be 'mock' or 'remote'")


@dataclass
class IngestionConfig:
    max_window_turns: int = 10
    parallelism: int = 4
    taxonomy_path: Optional[str] = None
    merge_threshold: float = 0.85

    def __post_init__(self) -> None:
        if self.max_window_turns < 1 or self.parallelism < 1:
            raise ValidationError("max_window_turns and parallelism must be >= 1")


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    auth_token: str = ""


@dataclass
class EngineConfig:
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    ingestion: IngestionConfig = field(default_factory=IngestionConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    data_dir: str = "data"
    fsync: bool = True
    snapshot_every: int = 500

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["backend"]["api_key"] = "***" if self.backend.api_key else ""
        return d


SECTIONS = {
    "evolution": EvolutionConfig,
    "retrieval": RetrievalConfig,
    "backend": BackendConfig,
    "ingestion": IngestionConfig,
    "server": ServerConfig,
}
TOP_LEVEL = ("data_dir", "fsync", "snapshot_every")

# fields whose env var is not simply RGMEM_<FIELD>
ENV_ALIASES = {
    ("backend", "mode"): "RGMEM_BACKEND",
    ("backend", "judge_mode"): "RGMEM_JUDGE",
}


def _env_name(section: Optional[str], name: str) -> str:
    return ENV_ALIASES.get((section, name), f"RGMEM_{name.upper()}")


def _coerce(value: Any, target_type: Any, where: str) -> Any:
    kind = str(target_type)
    try:
        if isinstance(value, str):
            if "bool" in kind:
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            if "int" in kind:
                return int(value)
            if "float" in kind:
                return float(value)
            return value
        if "bool" in kind and not isinstance(value, bool):
            raise ValueError(value)
        if "float" in kind and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    except ValueError:
        raise ValidationError(f"{where}: cannot interpret {value!r} as {kind}") from None


def _section_values(
    section: Optional[str],
    cls,
    file_values: Mapping[str, Any],
    env: Mapping[str, str],
    overrides: Mapping[str, Any],
) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        key = f"{section}.{f.name}" if section else f.name
        if key in overrides and overrides[key] is not None:
            out[f.name] = _coerce(overrides[key], f.type, f"--{f.name.replace('_', '-')}")
        elif _env_name(section, f.name) in env:
            out[f.name] = _coerce(env[_env_name(section, f.name)], f.type, _env_name(section, f.name))
        elif f.name in file_values:
            out[f.name] = _coerce(file_values[f.name], f.type, f"config {key}")
    return out


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
) -> EngineConfig:
    """Resolve an EngineConfig.

    ``overrides`` uses dotted keys (``"evolution.theta_inf"``, ``"data_dir"``) and
    wins over everything; ``None`` values are ignored. ``path`` defaults to
    ./rgmem.toml when that file exists.
    """
    env = os.environ if env is None else env
    overrides = overrides or {}
    raw: dict[str, Any] = {}
    if path is None and Path(DEFAULT_CONFIG_FILE).is_file():
        path = DEFAULT_CONFIG_FILE
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"config {path}: {exc}") from None
    known = set(SECTIONS) | set(TOP_LEVEL)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")

    kwargs: dict[str, Any] = {}
    for section, cls in SECTIONS.items():
        values = raw.get(section, {})
        if not isinstance(values, dict):
            raise ValidationError(f"config section [{section}] must be a table")
        bad = set(values) - {f.name for f in dataclasses.fields(cls)}
        if bad:
            raise ValidationError(f"unknown keys in [{section}]: {sorted(bad)}")
        kwargs[section] = cls(**_section_values(section, cls, values, env, overrides))
    top = _section_values(None, _TopLevel, {k: raw[k] for k in TOP_LEVEL if k in raw}, env, overrides)
    kwargs.update(top)
    return EngineConfig(**kwargs)


@dataclass
class _TopLevel:
    data_dir: str = "data"
    fsync: bool = True
    snapshot_every: int = 500
