"""Module families, hook contracts, and the default registry."""

from .api import (
    FAMILIES,
    BlockView,
    BranchInfo,
    BranchPredictor,
    BranchTargetPredictor,
    CacheView,
    CoreView,
    ModuleRegistry,
    Prefetcher,
    PrefetchContext,
    ReplacementPolicy,
)
from .reference import (
    BasicBtb,
    GsharePredictor,
    LruReplacement,
    NextLinePrefetcher,
    NoPrefetcher,
    register_reference_modules,
)


def default_registry() -> ModuleRegistry:
    """A fresh registry with the reference modules registered."""
    registry = ModuleRegistry()
    register_reference_modules(registry)
    return registry


__all__ = [
    "FAMILIES",
    "BlockView",
    "BranchInfo",
    "BranchPredictor",
    "BranchTargetPredictor",
    "CacheView",
    "CoreView",
    "ModuleRegistry",
    "Prefetcher",
    "PrefetchContext",
    "ReplacementPolicy",
    "BasicBtb",
    "GsharePredictor",
    "LruReplacement",
    "NextLinePrefetcher",
    "NoPrefetcher",
    "register_reference_modules",
    "default_registry",
]
