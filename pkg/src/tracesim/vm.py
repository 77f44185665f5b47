"""Virtual memory: page mapping and the per-core page table walker.

Virtual pages are mapped to physical frames on first touch, walking a
seed-keyed pseudo-random permutation of the frame space, so the mapping is
arbitrary but reproducible and injective.

Page table entries live at synthetic physical addresses in a reserved
region far above DRAM capacity: the level-k entry for a virtual page is at
``PTE_REGION_BASE + (k << PTE_LEVEL_SHIFT) + prefix(vpage, k) * 8``, where
prefix(vpage, k) keeps the k highest radix digits of the page number.
Pages sharing address-space prefixes therefore share PTE cache blocks, and
walk reads behave like ordinary cacheable data reads.
"""

from __future__ import annotations

from collections import deque

from .errors import SimulationError
from .packet import Packet, READ

VA_BITS = 48
PTE_REGION_BASE = 1 << 44
PTE_LEVEL_SHIFT = 40
PTE_SIZE = 8


def _feistel_round(x, key, half_bits, half_mask):
    x = (x ^ key) * 0x9E3779B97F4A7C15 + 0x7F4A7C15
    x &= (1 << 64) - 1
    return (x >> (64 - half_bits)) & half_mask


def _permute(index, bits, seed):
    """Keyed bijection on [0, 2**bits) via a 4-round balanced Feistel."""
    half = (bits + 1) // 2
    half_mask = (1 << half) - 1
    left = index >> half
    right = index & half_mask
    for round_no in range(4):
        key = seed * 0x2545F4914F6CDD1D + round_no
        left, right = right, left ^ _feistel_round(right, key, half, half_mask)
    return (left << half) | right


class VirtualMemory:
    """First-touch page table shared by every core of one machine."""

    def __init__(self, page_size, pt_levels, seed, dram_capacity):
        self.page_size = page_size
        self.page_bits = page_size.bit_length() - 1
        self.pt_levels = pt_levels
        self.seed = seed
        self.num_frames = max(1, dram_capacity // page_size)
        self.frame_bits = max(2, (self.num_frames - 1).bit_length())
        # 9 VA bits per walk level over the page number space
        self.vpage_bits = VA_BITS - self.page_bits
        self.level_bits = 9
        self.page_map = {}
        self.next_free_frame = 0

    def vpage_of(self, vaddr):
        return (vaddr >> self.page_bits) & ((1 << self.vpage_bits) - 1)

    def touch(self, vpage) -> int:
        """Map the page on first use; return its physical frame."""
        frame = self.page_map.get(vpage)
        if frame is not None:
            return frame
        if self.next_free_frame >= self.num_frames:
            raise SimulationError("physical frames exhausted")
        while True:
            frame = _permute(self.next_free_frame, self.frame_bits, self.seed)
            self.next_free_frame += 1
            if frame < self.num_frames:
                break
            if self.next_free_frame >= self.num_frames * 4:
                raise SimulationError("physical frames exhausted")
        self.page_map[vpage] = frame
        return frame

    def pa_of(self, vaddr) -> int:
        """Physical address of a virtual address whose page is mapped."""
        vpage = self.vpage_of(vaddr)
        frame = self.page_map.get(vpage)
        if frame is None:
            raise SimulationError(f"page 0x{vpage:x} accessed before translation")
        return (frame << self.page_bits) | (vaddr & (self.page_size - 1))

    def pte_address(self, vpage, level) -> int:
        """Synthetic physical address of the level'th walk step (1-based)."""
        shift = self.level_bits * (self.pt_levels - level)
        prefix = vpage >> shift
        return PTE_REGION_BASE + (level << PTE_LEVEL_SHIFT) + prefix * PTE_SIZE


class PageWalker:
    """Serial page table walker, one per core.

    Walks are handled first-come first-served; each walk issues
    ``pt_levels`` sequential READ packets through the owning core's L1
    data cache, so page table entries compete for cache space like any
    other data.
    """

    def __init__(self, core_id, vm: VirtualMemory, clock):
        self.core_id = core_id
        self.vm = vm
        self.clock = clock
        self.l1d = None  # wired by the machine
        self.queue = deque()
        self.active = None
        self.level = 0
        self.step_ready = None  # global tick the current read completes
        self.step_issued = False
        self.walks = 0
        self.walk_reads = 0

    def add_packet(self, packet, qkind=None) -> bool:
        self.queue.append(packet)
        return True

    def _block_align(self, addr):
        return addr & ~(self.l1d.block_size - 1)

    def _issue_step(self, now) -> bool:
        vpage = self.vm.vpage_of(self.active.address)
        addr = self._block_align(self.vm.pte_address(vpage, self.level))
        pkt = Packet(addr, READ, core_id=self.core_id, instr_id=0, ip=0)
        pkt.on_done = self._step_done
        if not self.l1d.add_packet(pkt, "RQ"):
            return False
        self.walk_reads += 1
        return True

    def _step_done(self, ready):
        self.step_ready = ready

    def operate(self, now):
        if self.active is None:
            if not self.queue:
                return
            self.active = self.queue.popleft()
            self.vm.touch(self.vm.vpage_of(self.active.address))
            self.walks += 1
            self.level = 1
            self.step_ready = None
            self.step_issued = False
        if not self.step_issued:
            self.step_issued = self._issue_step(now)
            return
        if self.step_ready is None or now < self.step_ready:
            return
        if self.level < self.vm.pt_levels:
            self.level += 1
            self.step_ready = None
            self.step_issued = self._issue_step(now)
            return
        packet = self.active
        self.active = None
        if packet.on_done is not None:
            packet.on_done(now)


class WalkerRouter:
    """Routes the "ptw" sink to the requesting core's walker."""

    def __init__(self, walkers):
        self.walkers = walkers

    def add_packet(self, packet, qkind=None) -> bool:
        return self.walkers[packet.core_id].add_packet(packet, qkind)
