"""Virtual memory mapping and page walk behavior."""

import pytest

from tracesim.config import parse_config
from tracesim.errors import SimulationError
from tracesim.machine import Machine
from tracesim.packet import TRANSLATION, Packet
from tracesim.vm import VirtualMemory


def make_vm(seed=1, frames=1 << 20):
    return VirtualMemory(4096, 4, seed, frames * 4096)


class TestMapping:
    def test_deterministic_in_seed_and_order(self):
        a, b = make_vm(seed=5), make_vm(seed=5)
        pages = [7, 3, 9, 100, 3]
        assert [a.touch(p) for p in pages] == [b.touch(p) for p in pages]

    def test_injective(self):
        vm = make_vm()
        frames = [vm.touch(p) for p in range(10_000)]
        assert len(set(frames)) == len(frames)
        assert all(0 <= f < vm.num_frames for f in frames)

    def test_seeds_disagree_somewhere(self):
        a, b = make_vm(seed=1), make_vm(seed=2)
        mapped_a = [a.touch(p) for p in range(100)]
        mapped_b = [b.touch(p) for p in range(100)]
        assert mapped_a != mapped_b

    def test_stable_within_a_run(self):
        vm = make_vm()
        first = vm.touch(42)
        vm.touch(43)
        assert vm.touch(42) == first
        assert vm.pa_of(42 * 4096 + 123) == first * 4096 + 123

    def test_untranslated_access_rejected(self):
        with pytest.raises(SimulationError):
            make_vm().pa_of(0x5000)

    def test_frames_exhaust(self):
        vm = VirtualMemory(4096, 4, 1, 4 * 4096)
        for p in range(4):
            vm.touch(p)
        with pytest.raises(SimulationError):
            vm.touch(99)


class TestPteLayout:
    def test_neighbor_pages_share_upper_level_entries(self):
        vm = make_vm()
        for level in (1, 2, 3):
            assert vm.pte_address(0x1000, level) == vm.pte_address(0x1001, level)
        assert vm.pte_address(0x1000, 4) != vm.pte_address(0x1001, 4)

    def test_levels_never_collide(self):
        vm = make_vm()
        addrs = {vm.pte_address(0x12345, level) for level in (1, 2, 3, 4)}
        assert len(addrs) == 4


def drive_translations(machine, pages, max_ticks=200_000):
    """Push TRANSLATION packets for each page through core 0's DTLB."""
    dtlb = machine.cores[0].dtlb
    page_size = machine.vm.page_size
    for vpage in pages:
        done = []
        pkt = Packet(vpage * page_size, TRANSLATION, core_id=0,
                     on_done=done.append)
        while not dtlb.add_packet(pkt, "RQ"):
            machine.tick()
        start = machine.clock.now
        while not done or machine.clock.now <= done[0]:
            machine.tick()
            assert machine.clock.now - start < max_ticks


class TestWalks:
    def test_cold_walk_issues_pt_levels_reads(self):
        machine = Machine(parse_config("{}"))
        l1d = machine.cores[0].l1d
        drive_translations(machine, [0x400])
        reads = l1d.stats.hits["READ"] + l1d.stats.misses["READ"]
        assert reads == 4
        assert machine.ptws[0].walks == 1

    def test_warm_page_skips_the_walk(self):
        machine = Machine(parse_config("{}"))
        l1d = machine.cores[0].l1d
        drive_translations(machine, [0x400])
        before = l1d.stats.hits["READ"] + l1d.stats.misses["READ"]
        drive_translations(machine, [0x400])
        after = l1d.stats.hits["READ"] + l1d.stats.misses["READ"]
        assert after == before

    def test_second_walk_hits_shared_pte_blocks(self):
        machine = Machine(parse_config("{}"))
        l1d = machine.cores[0].l1d
        drive_translations(machine, [0x400])
        hits_before = l1d.stats.hits["READ"]
        # adjacent page: levels 1..3 share PTE entries, level 4 shares a block
        drive_translations(machine, [0x401])
        assert l1d.stats.hits["READ"] >= hits_before + 3
        assert machine.ptws[0].walks == 2

    def test_distinct_upper_regions_produce_more_misses(self):
        machine = Machine(parse_config("{}"))
        drive_translations(machine, [0x400])
        walked = machine.ptws[0].walk_reads
        assert walked == 4
        # far-away page shares no prefix: all four reads go out again
        drive_translations(machine, [0x400 + (1 << 27)])
        assert machine.ptws[0].walk_reads == 8
