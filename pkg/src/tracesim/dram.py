"""Main memory with bank row-buffer state and per-channel bus contention.

Scheduling is a light first-ready, first-come first-served policy: each
DRAM cycle a channel issues the oldest request whose bank is free and
whose row is open, falling back to the oldest request with a free bank.
Reads win over writes until the write queue reaches 3/4 occupancy, which
starts a write drain that ends at 1/4 occupancy.  Completed accesses
occupy the channel data bus for a fixed burst, serializing transfers.

Timing, in DRAM cycles: a row hit costs tCAS; an access to a closed bank
costs tRCD + tCAS; a row conflict adds a precharge, tRP + tRCD + tCAS.
Rows stay open after an access.
"""

from __future__ import annotations

from collections import deque

from .packet import WRITE


def map_address(paddr, channels, ranks, banks, rows, columns, block_size):
    """Block address -> (channel, rank, bank, row, column), row topmost."""
    b = paddr // block_size
    column = b % columns
    b //= columns
    bank = b % banks
    b //= banks
    rank = b % ranks
    b //= ranks
    channel = b % channels
    b //= channels
    row = b % rows
    return channel, rank, bank, row, column


class _Request:
    __slots__ = ("packet", "rank", "bank", "row", "column", "enqueue_cycle")

    def __init__(self, packet, rank, bank, row, column, enqueue_cycle):
        self.packet = packet
        self.rank = rank
        self.bank = bank
        self.row = row
        self.column = column
        self.enqueue_cycle = enqueue_cycle


class _Bank:
    __slots__ = ("open_row", "busy_until")

    def __init__(self):
        self.open_row = None
        self.busy_until = 0


class _Channel:
    def __init__(self, cfg):
        self.rq = deque()
        self.wq = deque()
        self.banks = [[_Bank() for _ in range(cfg.banks_per_rank)]
                      for _ in range(cfg.ranks_per_channel)]
        self.bus_free_at = 0
        self.draining = False


class Dram:
    """One memory controller per machine; operates on its own clock."""

    def __init__(self, cfg, block_size, to_global_ticks):
        self.cfg = cfg
        self.block_size = block_size
        # converts a latency in DRAM cycles to global ticks, rounding up
        self.to_global_ticks = to_global_ticks
        self.channels = [_Channel(cfg) for _ in range(cfg.channels)]
        self.cycle = 0
        self.row_hits = 0
        self.row_misses = 0
        self.bus_busy_cycles = 0
        self.reads = 0
        self.writes = 0
        self.measured_cycles = 0

    @property
    def capacity_bytes(self):
        c = self.cfg
        return (c.channels * c.ranks_per_channel * c.banks_per_rank
                * c.rows_per_bank * c.columns_per_row * self.block_size)

    def reset_stats(self):
        self.row_hits = 0
        self.row_misses = 0
        self.bus_busy_cycles = 0
        self.reads = 0
        self.writes = 0
        self.measured_cycles = 0

    def map_packet(self, packet):
        c = self.cfg
        return map_address(packet.address, c.channels, c.ranks_per_channel,
                           c.banks_per_rank, c.rows_per_bank,
                           c.columns_per_row, self.block_size)

    def add_packet(self, packet, qkind=None) -> bool:
        channel_no, rank, bank, row, column = self.map_packet(packet)
        channel = self.channels[channel_no]
        queue = channel.wq if packet.type == WRITE else channel.rq
        limit = self.cfg.wq_size if packet.type == WRITE else self.cfg.rq_size
        if len(queue) >= limit:
            return False
        queue.append(_Request(packet, rank, bank, row, column, self.cycle))
        return True

    def _pick(self, channel, queue):
        """Oldest ready row hit, else oldest ready request."""
        fallback = None
        for i, req in enumerate(queue):
            bank = channel.banks[req.rank][req.bank]
            if bank.busy_until > self.cycle:
                continue
            if bank.open_row == req.row:
                return i
            if fallback is None:
                fallback = i
        return fallback

    def _issue(self, channel, queue, index, now):
        req = queue[index]
        del queue[index]
        bank = channel.banks[req.rank][req.bank]
        if bank.open_row == req.row:
            latency = self.cfg.tCAS
            self.row_hits += 1
        elif bank.open_row is None:
            latency = self.cfg.tRCD + self.cfg.tCAS
            self.row_misses += 1
        else:
            latency = self.cfg.tRP + self.cfg.tRCD + self.cfg.tCAS
            self.row_misses += 1
        burst = self.cfg.burst_cycles_per_block
        data_start = max(self.cycle + latency, channel.bus_free_at)
        done = data_start + burst
        channel.bus_free_at = done
        bank.busy_until = done
        bank.open_row = req.row
        self.bus_busy_cycles += burst
        if req.packet.type == WRITE:
            self.writes += 1
        else:
            self.reads += 1
        if req.packet.on_done is not None:
            req.packet.on_done(now + self.to_global_ticks(done - self.cycle))

    def operate(self, now):
        self.cycle += 1
        self.measured_cycles += 1
        for channel in self.channels:
            if len(channel.wq) * 4 >= self.cfg.wq_size * 3:
                channel.draining = True
            elif not channel.wq or len(channel.wq) * 4 <= self.cfg.wq_size:
                channel.draining = False
            first, second = (
                (channel.wq, channel.rq) if channel.draining
                else (channel.rq, channel.wq)
            )
            index = self._pick(channel, first)
            if index is not None:
                self._issue(channel, first, index, now)
                continue
            index = self._pick(channel, second)
            if index is not None:
                self._issue(channel, second, index, now)
