"""Shared fixtures: standalone node harness, oracles, counting stubs."""

from tracesim.cache import CacheNode
from tracesim.config import CacheNodeConfig
from tracesim.metrics import NodeStats
from tracesim.modules.api import (
    BranchPredictor,
    BranchTargetPredictor,
    Prefetcher,
    ReplacementPolicy,
)
from tracesim.modules.reference import LruReplacement, NoPrefetcher
from tracesim.packet import Packet


class StubClock:
    def __init__(self):
        self.now = 0


class StubLower:
    """Sink that accepts every packet and answers after a fixed delay."""

    def __init__(self, clock, delay=10):
        self.clock = clock
        self.delay = delay
        self.received = []  # (tick, packet, queue kind)

    def add_packet(self, packet, qkind):
        self.received.append((self.clock.now, packet, qkind))
        if packet.on_done is not None:
            packet.on_done(self.clock.now + self.delay)
        return True


def make_node(sets=4, ways=4, lower=None, replacement=None, prefetcher=None,
              clock=None, **overrides):
    cfg = CacheNodeConfig(name=overrides.pop("name", "node"), sets=sets,
                          ways=ways, **overrides)
    clock = clock or StubClock()
    node = CacheNode(cfg, clock, lambda cycles: cycles, NodeStats())
    node.lower = lower if lower is not None else StubLower(clock)
    node.replacement = replacement if replacement is not None else LruReplacement()
    node.replacement.initialize(node.view)
    node.prefetcher = prefetcher if prefetcher is not None else NoPrefetcher()
    node.prefetcher.initialize(node.view)
    return node, clock


def tick(clock, *nodes):
    for node in nodes:
        node.operate(clock.now)
    clock.now += 1


def complete_read(node, clock, address, others=(), max_ticks=100_000,
                  access_type="READ"):
    """Inject one read and tick until its completion; returns ready tick."""
    done = []
    pkt = Packet(address & ~(node.block_size - 1), access_type,
                 on_done=done.append)
    assert node.add_packet(pkt, "RQ")
    guard = 0
    while not done or clock.now <= done[0]:
        tick(clock, node, *others)
        guard += 1
        assert guard < max_ticks, "access never completed"
    return done[0]


# --- independent oracles ----------------------------------------------------


class LruOracle:
    """Exhaustive recency-list model of an LRU cache for victim checking."""

    def __init__(self, sets, ways):
        self.ways = ways
        self.blocks = [[None] * ways for _ in range(sets)]
        self.recency = [[] for _ in range(sets)]  # way order, LRU first

    def expected_victim(self, set_index):
        row = self.blocks[set_index]
        for way, addr in enumerate(row):
            if addr is None:
                return way
        return self.recency[set_index][0]

    def access(self, set_index, address):
        """Returns ("hit", way) or ("fill", way) after applying the access."""
        row = self.blocks[set_index]
        order = self.recency[set_index]
        if address in row:
            way = row.index(address)
            order.remove(way)
            order.append(way)
            return "hit", way
        way = self.expected_victim(set_index)
        row[way] = address
        if way in order:
            order.remove(way)
        order.append(way)
        return "fill", way


class ScalarGshare:
    """Flat reimplementation of the gshare math for lockstep comparison."""

    def __init__(self, bits=14):
        self.bits = bits
        self.mask = (1 << bits) - 1
        self.counters = [1] * (1 << bits)
        self.history = 0

    def _fold(self, ip):
        acc = 0
        while ip:
            acc ^= ip & self.mask
            ip >>= self.bits
        return acc

    def predict(self, ip):
        return self.counters[(self._fold(ip) ^ self.history) & self.mask] >= 2

    def train(self, ip, taken):
        idx = (self._fold(ip) ^ self.history) & self.mask
        if taken:
            self.counters[idx] = min(3, self.counters[idx] + 1)
        else:
            self.counters[idx] = max(0, self.counters[idx] - 1)
        self.history = ((self.history << 1) | (1 if taken else 0)) & self.mask


# --- counting stub modules ---------------------------------------------------


class CountingBp(BranchPredictor):
    def __init__(self):
        self.initialized = 0
        self.predicts = 0
        self.trains = 0
        self.finals = 0

    def initialize(self, core):
        self.initialized += 1

    def predict_branch(self, ip, predicted_target, always_taken, branch_class):
        self.predicts += 1
        return False

    def last_branch_result(self, ip, target, taken, branch_class):
        self.trains += 1

    def final_stats(self):
        self.finals += 1


class CountingBtb(BranchTargetPredictor):
    def __init__(self):
        self.initialized = 0
        self.predicts = 0
        self.updates = 0
        self.finals = 0

    def initialize(self, core):
        self.initialized += 1

    def btb_prediction(self, ip, branch_class):
        self.predicts += 1
        return 0, False

    def update_btb(self, ip, actual_target, taken, branch_class):
        self.updates += 1

    def final_stats(self):
        self.finals += 1


class CountingPrefetcher(Prefetcher):
    def __init__(self):
        self.initialized = 0
        self.operates = []
        self.fills = []
        self.cycles = 0
        self.branches = 0
        self.finals = 0
        self.initialized_before_event = True

    def initialize(self, cache):
        self.initialized += 1

    def _check_lifecycle(self):
        if not self.initialized:
            self.initialized_before_event = False

    def cache_operate(self, ctx):
        self._check_lifecycle()
        self.operates.append(ctx)
        return 0

    def cache_fill(self, filled_address, set_index, way, was_prefetch,
                   evicted_address, metadata):
        self._check_lifecycle()
        self.fills.append((filled_address, way, was_prefetch, evicted_address))
        return 0

    def cycle_operate(self):
        self._check_lifecycle()
        self.cycles += 1

    def branch_operate(self, ip, branch_class, predicted_target):
        self._check_lifecycle()
        self.branches += 1

    def final_stats(self):
        self.finals += 1


class CountingReplacement(ReplacementPolicy):
    def __init__(self):
        self.initialized = 0
        self.victims = 0
        self.hit_updates = 0
        self.fill_updates = 0
        self.finals = 0

    def initialize(self, cache):
        self.initialized += 1

    def find_victim(self, core_id, set_index, set_blocks, ip, full_address,
                    access_type):
        self.victims += 1
        for way, block in enumerate(set_blocks):
            if not block.valid:
                return way
        return 0

    def update_replacement_state(self, core_id, set_index, way, full_address,
                                 ip, victim_address, access_type, hit):
        if hit:
            self.hit_updates += 1
        else:
            self.fill_updates += 1

    def final_stats(self):
        self.finals += 1


def instance_tracking_registry(**families):
    """Registry whose factories record every created instance.

    ``families`` maps family name to a stub class; returns (registry,
    instances dict family -> list).
    """
    from tracesim.modules import default_registry

    registry = default_registry()
    instances = {}
    for family, cls in families.items():
        instances[family] = []

        def factory(cls=cls, bucket=instances[family]):
            instance = cls()
            bucket.append(instance)
            return instance

        registry.register(family, f"counting_{family}", factory)
    return registry, instances
