"""Pluggable module families and the hook contracts the simulator calls.

Four families exist: branch predictors and branch target predictors (bound
per core), prefetchers and replacement policies (bound per cache or TLB
node).  Every family gets ``initialize(host)`` once before the first
simulated cycle and ``final_stats()`` once after the last retired
instruction.  The ``host`` argument is a read-only view (``CoreView`` or
``CacheView``); module state lives in the module instance itself, and each
instance is owned by exactly one core or node.

Prefetchers act on the world only through ``CacheView.prefetch_line``,
which enqueues a prefetch in the owning node's prefetch queue and reports
whether it was accepted.  Metadata returned from ``cache_operate`` rides
in the packet and surfaces as ``metadata_in`` at the next lower level.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from ..traceio import BranchClass

METADATA_MASK = 0xFFFF_FFFF


@dataclass(frozen=True)
class BranchInfo:
    """Resolved branch facts handed to training hooks."""

    ip: int
    branch_class: BranchClass
    target: int  # 0 when unknown or not taken
    taken: bool


@dataclass(frozen=True)
class PrefetchContext:
    """What a prefetcher sees for one activating access."""

    address: int  # block-aligned
    ip: int
    cache_hit: bool
    access_type: str  # one of config.PACKET_TYPES
    metadata_in: int


@dataclass(frozen=True)
class BlockView:
    valid: bool
    dirty: bool
    prefetched: bool
    tag: int
    address: int


class CoreView:
    """Read-only window onto a core for branch modules."""

    def __init__(self, core):
        object.__setattr__(self, "_core", core)

    def __setattr__(self, name, value):
        raise AttributeError("host views are read-only")

    @property
    def core_id(self):
        return self._core.core_id

    @property
    def rob_size(self):
        return self._core.cfg.rob_size

    @property
    def lq_size(self):
        return self._core.cfg.lq_size

    @property
    def sq_size(self):
        return self._core.cfg.sq_size

    @property
    def fetch_width(self):
        return self._core.cfg.fetch_width

    @property
    def retire_width(self):
        return self._core.cfg.retire_width

    @property
    def mispredict_penalty(self):
        return self._core.cfg.mispredict_penalty

    @property
    def frequency(self):
        return self._core.cfg.frequency


class CacheView:
    """Read-only window onto a cache/TLB node for its modules.

    ``prefetch_line`` is the one sanctioned action: it requests a prefetch
    of ``address`` (aligned down to the block) through this node's prefetch
    queue and returns False, without side effects, when the queue is full.
    """

    def __init__(self, node):
        object.__setattr__(self, "_node", node)

    def __setattr__(self, name, value):
        raise AttributeError("host views are read-only")

    @property
    def name(self):
        return self._node.name

    @property
    def kind(self):
        return self._node.kind

    @property
    def sets(self):
        return self._node.sets

    @property
    def ways(self):
        return self._node.ways

    @property
    def block_size(self):
        return self._node.block_size

    @property
    def mshr_size(self):
        return self._node.mshr_size

    @property
    def rq_size(self):
        return self._node.rq_size

    @property
    def wq_size(self):
        return self._node.wq_size

    @property
    def pq_size(self):
        return self._node.pq_size

    @property
    def cycle(self):
        return self._node.cycle

    def get_block(self, set_index, way) -> BlockView:
        return self._node.block_view(set_index, way)

    def prefetch_line(self, address, fill_this_level=True, metadata=0) -> bool:
        return self._node.prefetch_line(address, fill_this_level, metadata)


class BranchPredictor:
    """Direction predictor; one instance per core."""

    def initialize(self, core: CoreView):
        pass

    def predict_branch(self, ip, predicted_target, always_taken, branch_class) -> bool:
        """Predict taken/not-taken for the branch at ip.

        ``predicted_target`` and ``always_taken`` echo the branch target
        predictor's answer and may be ignored by direction-only designs.
        """
        return False

    def last_branch_result(self, ip, target, taken, branch_class):
        """Train on the resolved outcome; called once per branch."""

    def final_stats(self):
        pass


class BranchTargetPredictor:
    """Target predictor; one instance per core.

    ``btb_prediction`` returns (target, always_taken); target 0 means
    predicted not-taken.
    """

    def initialize(self, core: CoreView):
        pass

    def btb_prediction(self, ip, branch_class):
        return 0, False

    def update_btb(self, ip, actual_target, taken, branch_class):
        pass

    def final_stats(self):
        pass


class Prefetcher:
    """Prefetcher; one instance per cache or TLB node.

    ``cache_operate`` fires on activating accesses (hits and misses alike,
    distinguished by ``ctx.cache_hit``); its return value is embedded in
    the packet as metadata for lower levels.  ``cache_fill`` fires once per
    fill, with ``way == ways`` marking a bypassed fill.  ``cycle_operate``
    fires every cycle of the owning node.  ``branch_operate`` fires only on
    instruction-side prefetchers, once per branch record read from the
    trace.
    """

    def initialize(self, cache: CacheView):
        pass

    def cache_operate(self, ctx: PrefetchContext) -> int:
        return 0

    def cache_fill(self, filled_address, set_index, way, was_prefetch,
                   evicted_address, metadata) -> int:
        return 0

    def cycle_operate(self):
        pass

    def branch_operate(self, ip, branch_class, predicted_target):
        pass

    def final_stats(self):
        pass


class ReplacementPolicy:
    """Replacement policy; one instance per cache or TLB node.

    ``find_victim`` returns a way in [0, ways), or exactly ``ways`` to
    bypass the fill.  ``update_replacement_state`` is called once per hit
    (hit=True, victim_address 0) and once per fill (hit=False,
    victim_address of the evicted block or 0).
    """

    def initialize(self, cache: CacheView):
        pass

    def find_victim(self, core_id, set_index, set_blocks, ip, full_address,
                    access_type) -> int:
        return 0

    def update_replacement_state(self, core_id, set_index, way, full_address,
                                 ip, victim_address, access_type, hit):
        pass

    def final_stats(self):
        pass


FAMILIES = ("branch_predictor", "btb", "prefetcher", "replacement")


class ModuleRegistry:
    """Name -> factory tables, one per family, consulted at build time."""

    def __init__(self):
        self._factories = {family: {} for family in FAMILIES}

    def register(self, family, name, factory):
        if family not in self._factories:
            raise ConfigError(f"unknown module family {family!r}")
        table = self._factories[family]
        if name in table:
            raise ConfigError(f"duplicate {family} module {name!r}")
        table[name] = factory

    def create(self, family, name):
        try:
            factory = self._factories[family][name]
        except KeyError:
            raise ConfigError(f"unknown {family} module {name!r}") from None
        return factory()

    def names(self, family):
        return sorted(self._factories[family])

    def copy(self) -> "ModuleRegistry":
        clone = ModuleRegistry()
        for family, table in self._factories.items():
            clone._factories[family] = dict(table)
        return clone
