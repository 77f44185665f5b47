"""Baseline module implementations registered under well-known names.

These are the stock modules a configuration gets by default: a global
history direction predictor ("gshare"), a set-associative target buffer
("basic_btb"), a next-line prefetcher ("next_line"), a prefetcher that
does nothing ("no"), and least-recently-used replacement ("lru").  They
double as starting points for custom modules.
"""

from __future__ import annotations

from .api import BranchPredictor, BranchTargetPredictor, Prefetcher, ReplacementPolicy


def fold_ip(ip: int, bits: int) -> int:
    """XOR-fold a 64-bit address down to the given width."""
    mask = (1 << bits) - 1
    acc = 0
    while ip:
        acc ^= ip & mask
        ip >>= bits
    return acc


class GsharePredictor(BranchPredictor):
    """Two-bit counters indexed by folded ip XOR global history.

    Counters start at 1 (weakly not-taken); history shifts in the actual
    outcome at training time, never speculatively.
    """

    def __init__(self, history_bits=14):
        self.history_bits = history_bits
        self.mask = (1 << history_bits) - 1
        self.history = 0
        self.counters = [1] * (1 << history_bits)

    def _index(self, ip):
        return (fold_ip(ip, self.history_bits) ^ self.history) & self.mask

    def predict_branch(self, ip, predicted_target, always_taken, branch_class):
        return self.counters[self._index(ip)] >= 2

    def last_branch_result(self, ip, target, taken, branch_class):
        idx = self._index(ip)
        if taken:
            if self.counters[idx] < 3:
                self.counters[idx] += 1
        elif self.counters[idx] > 0:
            self.counters[idx] -= 1
        self.history = ((self.history << 1) | (1 if taken else 0)) & self.mask


class BasicBtb(BranchTargetPredictor):
    """Set-associative target buffer, LRU, inserting taken branches only.

    A branch later seen not-taken keeps its entry but drops the
    always-taken bit.
    """

    def __init__(self, sets=1024, ways=4):
        self.sets = sets
        self.ways = ways
        # per set: list of [tag, target, always_taken, stamp]
        self.table = [[] for _ in range(sets)]
        self.stamp = 0

    def _locate(self, ip):
        set_index = ip & (self.sets - 1)
        tag = ip >> self.sets.bit_length() - 1
        return self.table[set_index], tag

    def btb_prediction(self, ip, branch_class):
        entries, tag = self._locate(ip)
        for entry in entries:
            if entry[0] == tag:
                self.stamp += 1
                entry[3] = self.stamp
                return entry[1], entry[2]
        return 0, False

    def update_btb(self, ip, actual_target, taken, branch_class):
        entries, tag = self._locate(ip)
        self.stamp += 1
        for entry in entries:
            if entry[0] == tag:
                if taken:
                    entry[1] = actual_target
                else:
                    entry[2] = False
                entry[3] = self.stamp
                return
        if not taken:
            return
        if len(entries) >= self.ways:
            entries.remove(min(entries, key=lambda e: e[3]))
        entries.append([tag, actual_target, True, self.stamp])


class NextLinePrefetcher(Prefetcher):
    """Prefetch the block after every activating access."""

    def __init__(self):
        self.cache = None

    def initialize(self, cache):
        self.cache = cache

    def cache_operate(self, ctx):
        self.cache.prefetch_line(ctx.address + self.cache.block_size)
        return 0


class NoPrefetcher(Prefetcher):
    """Issues nothing; the stand-in for a prefetcher-less cache."""


class LruReplacement(ReplacementPolicy):
    """Evict an invalid way if any, else the least recently touched."""

    def __init__(self):
        self.stamps = None
        self.clock = 0

    def initialize(self, cache):
        self.stamps = [[0] * cache.ways for _ in range(cache.sets)]

    def find_victim(self, core_id, set_index, set_blocks, ip, full_address,
                    access_type):
        for way, block in enumerate(set_blocks):
            if not block.valid:
                return way
        row = self.stamps[set_index]
        return row.index(min(row))

    def update_replacement_state(self, core_id, set_index, way, full_address,
                                 ip, victim_address, access_type, hit):
        self.clock += 1
        self.stamps[set_index][way] = self.clock


def register_reference_modules(registry):
    registry.register("branch_predictor", "gshare", GsharePredictor)
    registry.register("btb", "basic_btb", BasicBtb)
    registry.register("prefetcher", "next_line", NextLinePrefetcher)
    registry.register("prefetcher", "no", NoPrefetcher)
    registry.register("replacement", "lru", LruReplacement)
