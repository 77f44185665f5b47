"""Machine assembly and the global simulation loop.

A Machine builds every component from a validated SystemConfig, binds the
named modules out of a registry, and advances a single global clock.  The
global tick rate is the fastest component frequency; slower components
skip ticks proportionally (integer arithmetic, so runs are reproducible).
Within one tick the order is cores, page walkers, cache/TLB nodes from the
top of the hierarchy down, then DRAM; components interact only by
enqueuing packets and by completion callbacks carrying ready times.

``run`` realizes the two-phase protocol: all counters are zeroed once
every core has retired its warmup budget (state is preserved), and each
core's counters freeze exactly at its measurement budget while the core
keeps executing to preserve contention until every core is done.
"""

from __future__ import annotations

from .cache import CacheNode
from .config import SystemConfig, validate_topology
from .core import Core, TraceCursor, file_cursor
from .dram import Dram
from .errors import ConfigError, SimulationError
from .metrics import CoreStats, NodeStats, build_report
from .modules import CoreView, default_registry
from .vm import PageWalker, VirtualMemory, WalkerRouter


class Clock:
    __slots__ = ("now",)

    def __init__(self):
        self.now = 0


def _ceil_div(a, b):
    return -(-a // b)


class Machine:
    def __init__(self, cfg: SystemConfig, registry=None, cursors=None,
                 vm_seed=None, disable_prefetching=False):
        self.cfg = cfg
        self.topology = validate_topology(cfg)
        self.registry = registry if registry is not None else default_registry()
        self.clock = Clock()

        freqs = [core.frequency for core in cfg.cores]
        freqs.extend(n.frequency for n in cfg.cache_nodes if n.frequency)
        freqs.append(cfg.dram.frequency)
        self.global_freq = max(freqs)
        default_node_freq = max(core.frequency for core in cfg.cores)

        def scale_for(freq):
            return lambda cycles: _ceil_div(cycles * self.global_freq, freq)

        seed = cfg.vm_seed if vm_seed is None else vm_seed
        self.dram = Dram(cfg.dram, self.topology.dram_block_size,
                         scale_for(cfg.dram.frequency))
        self.vm = VirtualMemory(cfg.page_size, cfg.pt_levels, seed,
                                self.dram.capacity_bytes)

        self.nodes = {}
        node_freq = {}
        for node_cfg in cfg.cache_nodes:
            freq = node_cfg.frequency or default_node_freq
            node = CacheNode(node_cfg, self.clock, scale_for(freq), NodeStats())
            self.nodes[node_cfg.name] = node
            node_freq[node_cfg.name] = freq

        self.ptws = [PageWalker(i, self.vm, self.clock)
                     for i in range(cfg.num_cores)]
        router = WalkerRouter(self.ptws)
        for name, node in self.nodes.items():
            low = node.cfg.lower_level
            if low == "dram":
                node.lower = self.dram
            elif low == "ptw":
                node.lower = router
            else:
                node.lower = self.nodes[low]

        self.cores = []
        for i, core_cfg in enumerate(cfg.cores):
            core = Core(i, core_cfg, self.clock,
                        scale_for(core_cfg.frequency), CoreStats())
            core.itlb = self.nodes[core_cfg.itlb]
            core.dtlb = self.nodes[core_cfg.dtlb]
            core.l1i = self.nodes[core_cfg.l1i]
            core.l1d = self.nodes[core_cfg.l1d]
            core.vm = self.vm
            self.ptws[i].l1d = core.l1d
            self.cores.append(core)

        self._bind_modules(disable_prefetching)
        if cursors is not None:
            self.attach_cursors(cursors)

        # per-tick service order: cores, walkers, upper levels first, DRAM
        self._schedule = []
        for core in self.cores:
            self._schedule.append((core.advance, core.cfg.frequency))
        for walker in self.ptws:
            self._schedule.append((walker.operate,
                                   self.cores[walker.core_id].cfg.frequency))
        for name in self.topology.order:
            self._schedule.append((self.nodes[name].operate, node_freq[name]))
        self._schedule.append((self.dram.operate, cfg.dram.frequency))

        self._initialize_modules()

    # --- construction helpers ----------------------------------------------

    def _bind_modules(self, disable_prefetching):
        ipref = {}
        for i, core_cfg in enumerate(self.cfg.cores):
            if not core_cfg.instruction_prefetcher:
                continue
            name = core_cfg.l1i
            if ipref.get(name, core_cfg.instruction_prefetcher) \
                    != core_cfg.instruction_prefetcher:
                raise ConfigError(
                    f"cores disagree on the instruction prefetcher for {name}")
            ipref[name] = core_cfg.instruction_prefetcher

        for name, node in self.nodes.items():
            pref_name = ipref.get(name, node.cfg.prefetcher)
            if not disable_prefetching:
                node.prefetcher = self.registry.create("prefetcher", pref_name)
            node.replacement = self.registry.create(
                "replacement", node.cfg.replacement)
        for core, core_cfg in zip(self.cores, self.cfg.cores):
            core.bp = self.registry.create(
                "branch_predictor", core_cfg.branch_predictor)
            core.btb = self.registry.create("btb", core_cfg.btb)

    def _initialize_modules(self):
        for core in self.cores:
            view = CoreView(core)
            core.bp.initialize(view)
            core.btb.initialize(view)
        for name in self.topology.order:
            node = self.nodes[name]
            if node.prefetcher is not None:
                node.prefetcher.initialize(node.view)
            node.replacement.initialize(node.view)

    def attach_cursors(self, cursors):
        if len(cursors) != len(self.cores):
            raise ConfigError(
                f"{len(self.cores)} cores need {len(self.cores)} traces, "
                f"got {len(cursors)}")
        for core, cursor in zip(self.cores, cursors):
            if isinstance(cursor, (str, bytes)) or hasattr(cursor, "__fspath__"):
                cursor = file_cursor(cursor)
            if not isinstance(cursor, TraceCursor):
                raise ConfigError("traces must be paths or TraceCursor objects")
            if cursor.empty:
                raise SimulationError("trace contains no records")
            core.cursor = cursor

    # --- simulation ----------------------------------------------------------

    def tick(self):
        now = self.clock.now
        F = self.global_freq
        for operate, freq in self._schedule:
            if freq == F or ((now + 1) * freq) // F > (now * freq) // F:
                operate(now)
        self.clock.now += 1

    def reset_for_measurement(self, simulate):
        """Zero every counter; cache, predictor, and page state persist."""
        for core in self.cores:
            core.stats.reset()
            core.measure_target = simulate
            core.frozen = simulate == 0
        for node in self.nodes.values():
            node.stats.reset()
        for walker in self.ptws:
            walker.walks = 0
            walker.walk_reads = 0
        self.dram.reset_stats()

    def run(self, warmup, simulate, max_ticks=None) -> dict:
        """Warm up, measure, and return the flat report dict."""
        if any(core.cursor is None for core in self.cores):
            raise SimulationError("every core needs an attached trace")

        def cores_unfinished(target):
            return any(c.retired_total < target and not c.drained
                       for c in self.cores)

        while cores_unfinished(warmup):
            self.tick()
            if max_ticks is not None and self.clock.now >= max_ticks:
                raise SimulationError("warmup exceeded the tick budget")
        self.reset_for_measurement(simulate)
        while any(not c.frozen and not c.drained for c in self.cores):
            self.tick()
            if max_ticks is not None and self.clock.now >= max_ticks:
                raise SimulationError("simulation exceeded the tick budget")
        self.final_stats()
        return build_report(self, warmup, simulate)

    def final_stats(self):
        for core in self.cores:
            core.bp.final_stats()
            core.btb.final_stats()
        for name in self.topology.order:
            node = self.nodes[name]
            if node.prefetcher is not None:
                node.prefetcher.final_stats()
            node.replacement.final_stats()
