"""Long-term user memory whose profile theories are refined by threshold-gated coarse-graining operators."""

from rgmem.config import EngineConfig, load_config
from rgmem.engine import MemoryEngine
from rgmem.evolution import EvolutionConfig, FlowReport
from rgmem.retrieval import ContextDocument, RetrievalConfig
from rgmem.store import MemoryStore

__version__ = "0.1.0"

__all__ = [
    "ContextDocument",
    "EngineConfig",
    "EvolutionConfig",
    "FlowReport",
    "MemoryEngine",
    "MemoryStore",
    "RetrievalConfig",
    "load_config",
]
