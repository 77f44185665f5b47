"""Cache and TLB nodes: tag array, request queues, MSHRs, fills.

One CacheNode models a cache level or a TLB level; the two differ only in
granularity (a TLB "block" is one translation at page granularity, with
set indexing over virtual page numbers).  Each cycle a node services up to
its tag bandwidth of queue heads at strict RQ > WQ > PQ priority; a head
that cannot proceed (MSHR or downstream queue full) stays put and retries.
Misses allocate an MSHR, forward a packet of the same type to the lower
level (demand reads/writes to the lower RQ/WQ, prefetches to the lower
PQ), and complete every merged requester when the fill returns.  Fills are
non-inclusive: installing here never touches any other level.

Write misses are forwarded down the write-queue chain and install their
block dirty on the return path (write-allocate); dirty victims are posted
to the lower write queue as writeback packets.
"""

from __future__ import annotations

from collections import deque

from .errors import ModuleContractError
from .modules.api import METADATA_MASK, BlockView, CacheView, PrefetchContext
from .packet import PREFETCH, READ, TRANSLATION, WRITE, Packet


class CacheBlock:
    __slots__ = ("valid", "dirty", "prefetched", "tag", "address")

    def __init__(self):
        self.valid = False
        self.dirty = False
        self.prefetched = False
        self.tag = 0
        self.address = 0


class MshrEntry:
    __slots__ = ("address", "waiters", "type", "core_id", "ip",
                 "was_prefetch", "demand_merged", "should_fill",
                 "alloc_tick", "child")

    def __init__(self, address, packet, should_fill, alloc_tick):
        self.address = address
        self.waiters = [packet]
        self.type = packet.type
        self.core_id = packet.core_id
        self.ip = packet.ip
        self.was_prefetch = packet.type == PREFETCH
        self.demand_merged = packet.type != PREFETCH
        self.should_fill = should_fill
        self.alloc_tick = alloc_tick
        self.child = None


def decompose_address(address, sets, block_size):
    """Split an address into (tag, set index, block offset)."""
    offset = address % block_size
    block = address // block_size
    return block // sets, block % sets, offset


class CacheNode:
    """One cache or TLB level with its bound prefetcher and replacement."""

    QUEUES = ("RQ", "WQ", "PQ")

    def __init__(self, cfg, clock, latency_scale, stats):
        self.name = cfg.name
        self.kind = cfg.kind
        self.cfg = cfg
        self.sets = cfg.sets
        self.ways = cfg.ways
        self.block_size = cfg.block_size
        self.block_mask = ~(cfg.block_size - 1)
        self.clock = clock
        # converts latencies in node cycles to global ticks
        self.hit_ticks = latency_scale(cfg.hit_latency)
        self.fill_ticks = latency_scale(cfg.fill_latency)
        self.stats = stats
        self.blocks = [[CacheBlock() for _ in range(cfg.ways)]
                       for _ in range(cfg.sets)]
        self.queues = {"RQ": deque(), "WQ": deque(), "PQ": deque()}
        self.capacity = {
            "RQ": cfg.rq_size, "WQ": cfg.wq_size, "PQ": cfg.pq_size,
        }
        self.mshrs = {}
        self.pending_fills = []
        self.activate_on = frozenset(cfg.prefetch_activate_on)
        self.lower = None  # wired by the machine: CacheNode, Dram, or router
        self.prefetcher = None
        self.replacement = None
        self.view = CacheView(self)
        self.cycle = 0
        self.current_core_id = 0
        self.current_ip = 0

    # --- inspection -------------------------------------------------------

    def block_view(self, set_index, way) -> BlockView:
        b = self.blocks[set_index][way]
        return BlockView(b.valid, b.dirty, b.prefetched, b.tag, b.address)

    def set_view(self, set_index):
        return tuple(self.block_view(set_index, w) for w in range(self.ways))

    def content_digest(self):
        """Stable fingerprint of the tag array, for state comparisons."""
        return hash(tuple(
            (b.valid, b.dirty, b.tag)
            for row in self.blocks for b in row
        ))

    def _probe(self, set_index, tag):
        for way, block in enumerate(self.blocks[set_index]):
            if block.valid and block.tag == tag:
                return way
        return None

    # --- enqueue side -----------------------------------------------------

    def add_packet(self, packet, qkind) -> bool:
        """Enqueue a block-aligned packet; False (no side effects) if full.

        Same-block read-queue packets merge into one service with separate
        completions.
        """
        queue = self.queues[qkind]
        if qkind == "RQ":
            for queued in queue:
                if queued.address == packet.address and queued.type != WRITE:
                    if queued.merged is None:
                        queued.merged = []
                    queued.merged.append(packet)
                    return True
        if len(queue) >= self.capacity[qkind]:
            return False
        packet.enqueue_tick = self.clock.now
        queue.append(packet)
        return True

    def prefetch_line(self, address, fill_this_level=True, metadata=0) -> bool:
        packet = Packet(
            address & self.block_mask, PREFETCH,
            core_id=self.current_core_id, instr_id=0, ip=self.current_ip,
            metadata=metadata & METADATA_MASK, fill_this_level=fill_this_level,
            pf_origin=self.name,
        )
        if self.add_packet(packet, "PQ"):
            self.stats.pf_issued += 1
            return True
        return False

    def probe_access(self, address, core_id, ip, access_type=READ) -> bool:
        """Zero-latency presence check used by instruction fetch.

        On a hit this is a full demand access (counters and hooks fire); on
        a miss nothing happens and the caller enqueues a real packet.
        """
        tag, set_index, _ = decompose_address(address, self.sets, self.block_size)
        way = self._probe(set_index, tag)
        if way is None:
            return False
        packet = Packet(address & self.block_mask, access_type,
                        core_id=core_id, ip=ip)
        self._hit(packet, set_index, way)
        return True

    # --- per-cycle operation ----------------------------------------------

    def operate(self, now):
        self.cycle += 1
        if self.prefetcher is not None:
            self.prefetcher.cycle_operate()
        if self.pending_fills:
            self._process_fills(now)
        budget = self.cfg.max_tag_lookups_per_cycle
        blocked = set()
        while budget > 0:
            queue_kind = None
            for kind in self.QUEUES:
                q = self.queues[kind]
                if kind not in blocked and q and q[0].enqueue_tick <= now:
                    queue_kind = kind
                    break
            if queue_kind is None:
                break
            if not self._service_head(queue_kind, now):
                blocked.add(queue_kind)
            budget -= 1

    def _process_fills(self, now):
        remaining = []
        for item in self.pending_fills:
            ready, entry = item
            if ready > now or not self._handle_fill(entry, now):
                remaining.append(item)
        self.pending_fills = remaining

    def _receive_fill(self, entry, ready):
        self.pending_fills.append((ready, entry))

    # --- hit path -----------------------------------------------------------

    def _hit(self, packet, set_index, way):
        self.stats.hits[packet.type] += 1
        block = self.blocks[set_index][way]
        if packet.type == WRITE:
            block.dirty = True
        if block.prefetched and packet.type != PREFETCH:
            block.prefetched = False
            self.stats.pf_useful += 1
        self.replacement.update_replacement_state(
            packet.core_id, set_index, way, packet.address, packet.ip,
            0, packet.type, True)
        if packet.type in self.activate_on and self.prefetcher is not None:
            self._run_operate_hook(packet, True)

    def _run_operate_hook(self, packet, cache_hit):
        self.current_core_id = packet.core_id
        self.current_ip = packet.ip
        ctx = PrefetchContext(
            address=packet.address, ip=packet.ip, cache_hit=cache_hit,
            access_type=packet.type, metadata_in=packet.metadata)
        packet.metadata = self.prefetcher.cache_operate(ctx) & METADATA_MASK

    def _complete(self, packet, ready):
        if packet.on_done is not None:
            packet.on_done(ready)
        if packet.merged:
            for m in packet.merged:
                if m.on_done is not None:
                    m.on_done(ready)

    # --- service ------------------------------------------------------------

    def _service_head(self, qkind, now) -> bool:
        packet = self.queues[qkind][0]
        tag, set_index, _ = decompose_address(
            packet.address, self.sets, self.block_size)
        way = self._probe(set_index, tag)
        if way is not None:
            self._hit(packet, set_index, way)
            self.queues[qkind].popleft()
            self._complete(packet, now + self.hit_ticks)
            return True

        # miss
        entry = self.mshrs.get(packet.address)
        if entry is not None:
            wants_write = packet.type == WRITE
            if wants_write != (entry.type == WRITE):
                return False  # incompatible; head retries next cycle
            self.stats.misses[packet.type] += 1
            if packet.type in self.activate_on and self.prefetcher is not None:
                self._run_operate_hook(packet, False)
            entry.waiters.append(packet)
            if packet.merged:
                entry.waiters.extend(packet.merged)
                packet.merged = None
            if packet.type != PREFETCH:
                entry.demand_merged = True
                entry.should_fill = True  # demand upgrades a non-filling prefetch
            self.queues[qkind].popleft()
            return True

        if len(self.mshrs) >= self.cfg.mshr_size:
            return False

        if packet.type == PREFETCH:
            if packet.pf_origin == self.name:
                should_fill = packet.fill_this_level
            else:
                should_fill = self.cfg.prefetch_as_fill_here
        else:
            should_fill = True

        # the operate hook runs before forwarding so its metadata rides along
        saved_metadata = packet.metadata
        if packet.type in self.activate_on and self.prefetcher is not None:
            self._run_operate_hook(packet, False)

        entry = MshrEntry(packet.address, packet, should_fill, now)
        child = Packet(
            packet.address, packet.type, core_id=packet.core_id,
            instr_id=packet.instr_id, ip=packet.ip, metadata=packet.metadata,
            fill_this_level=packet.fill_this_level, pf_origin=packet.pf_origin,
        )
        child.on_done = lambda ready, e=entry: self._receive_fill(e, ready)
        if not self._forward(child):
            packet.metadata = saved_metadata  # head retries; undo embedding
            return False
        self.stats.misses[packet.type] += 1
        if packet.merged:
            entry.waiters.extend(packet.merged)
            if any(m.type != PREFETCH for m in packet.merged):
                entry.demand_merged = True
            packet.merged = None
        entry.child = child
        self.mshrs[packet.address] = entry
        self.queues[qkind].popleft()
        return True

    def _forward(self, packet) -> bool:
        if packet.type == WRITE:
            qkind = "WQ"
        elif packet.type == PREFETCH:
            qkind = "PQ"
        else:
            qkind = "RQ"
        return self.lower.add_packet(packet, qkind)

    # --- fill path ------------------------------------------------------------

    def _handle_fill(self, entry, now) -> bool:
        if not entry.should_fill:
            # prefetch passing through without installing at this level
            self.stats.bypasses += 1
            self._finish_entry(entry, now)
            return True

        set_index = (entry.address // self.block_size) % self.sets
        victim_way = self.replacement.find_victim(
            entry.core_id, set_index, self.set_view(set_index),
            entry.ip, entry.address, entry.type)
        if not isinstance(victim_way, int) or not 0 <= victim_way <= self.ways:
            raise ModuleContractError(
                f"{self.name}: find_victim returned {victim_way!r} "
                f"(expected 0..{self.ways})")

        if victim_way == self.ways:  # bypass: no install, no eviction
            self.stats.bypasses += 1
            if self.prefetcher is not None:
                self.current_core_id = entry.core_id
                self.current_ip = entry.ip
                self.prefetcher.cache_fill(
                    entry.address, set_index, self.ways, entry.was_prefetch,
                    0, entry.child.metadata)
            self._finish_entry(entry, now)
            return True

        victim = self.blocks[set_index][victim_way]
        evicted_address = victim.address if victim.valid else 0
        if victim.valid and victim.dirty:
            writeback = Packet(victim.address, WRITE, core_id=entry.core_id,
                               instr_id=0, ip=0)
            if not self._forward(writeback):
                return False  # lower WQ full; retry the whole fill next cycle
            self.stats.writebacks += 1
        if victim.valid and victim.prefetched:
            self.stats.pf_useless += 1

        victim.valid = True
        victim.dirty = entry.type == WRITE
        victim.prefetched = entry.was_prefetch and not entry.demand_merged
        victim.tag = entry.address // (self.block_size * self.sets)
        victim.address = entry.address
        self.stats.fills += 1
        if entry.was_prefetch:
            self.stats.pf_filled += 1
            if entry.demand_merged:
                self.stats.pf_useful += 1

        self.replacement.update_replacement_state(
            entry.core_id, set_index, victim_way, entry.address, entry.ip,
            evicted_address, entry.type, False)
        if self.prefetcher is not None:
            self.current_core_id = entry.core_id
            self.current_ip = entry.ip
            metadata_out = self.prefetcher.cache_fill(
                entry.address, set_index, victim_way, entry.was_prefetch,
                evicted_address, entry.child.metadata)
            for waiter in entry.waiters:
                waiter.metadata = metadata_out & METADATA_MASK
        self._finish_entry(entry, now)
        return True

    def _finish_entry(self, entry, now):
        ready = now + self.fill_ticks
        self.stats.miss_completions += 1
        self.stats.miss_latency_sum += ready - entry.alloc_tick
        del self.mshrs[entry.address]
        for waiter in entry.waiters:
            if waiter.on_done is not None:
                waiter.on_done(ready)
