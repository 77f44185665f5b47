"""Counters, warmup separation, and report generation.

Counters belong to the component that produces them and are zeroed once
when every core finishes warmup; microarchitectural state (cache contents,
predictor tables, the page map) survives the reset.  The final report is a
flat dict of dotted keys so JSON output diffs cleanly; ratios whose
denominator is zero are reported as 0 and the affected key is listed under
``zero_division_flags``.
"""

from __future__ import annotations

import json

from .packet import PREFETCH, READ, TRANSLATION, WRITE
from .traceio import BranchClass

PACKET_TYPES = (READ, WRITE, PREFETCH, TRANSLATION)

BRANCH_CLASSES = tuple(c for c in BranchClass if c is not BranchClass.NOT_BRANCH)


class CoreStats:
    def __init__(self):
        self.reset()

    def reset(self):
        self.instructions = 0
        self.cycles = 0
        self.loads = 0
        self.stores = 0
        self.predictions = {c: 0 for c in BRANCH_CLASSES}
        self.mispredictions = {c: 0 for c in BRANCH_CLASSES}

    @property
    def total_predictions(self):
        return sum(self.predictions.values())

    @property
    def total_mispredictions(self):
        return sum(self.mispredictions.values())


class NodeStats:
    def __init__(self):
        self.reset()

    def reset(self):
        self.hits = {t: 0 for t in PACKET_TYPES}
        self.misses = {t: 0 for t in PACKET_TYPES}
        self.miss_completions = 0
        self.fills = 0
        self.bypasses = 0
        self.writebacks = 0
        self.pf_issued = 0
        self.pf_filled = 0
        self.pf_useful = 0
        self.pf_useless = 0
        self.miss_latency_sum = 0

    def total_hits(self):
        return sum(self.hits.values())

    def total_misses(self):
        return sum(self.misses.values())

    def demand_misses(self):
        return sum(v for t, v in self.misses.items() if t != PREFETCH)


def _ratio(numerator, denominator, key, flags):
    if denominator == 0:
        flags.append(key)
        return 0.0
    return numerator / denominator


def build_report(machine, warmup, simulate) -> dict:
    """Flatten every component's measurement counters into one dict."""
    flags = []
    report = {
        "meta.warmup_instructions": warmup,
        "meta.simulation_instructions": simulate,
        "meta.num_cores": machine.cfg.num_cores,
    }

    total_instructions = sum(c.stats.instructions for c in machine.cores)
    for core in machine.cores:
        s = core.stats
        p = f"core.{core.core_id}"
        report[f"{p}.instructions"] = s.instructions
        report[f"{p}.cycles"] = s.cycles
        report[f"{p}.ipc"] = _ratio(s.instructions, s.cycles, f"{p}.ipc", flags)
        report[f"{p}.loads"] = s.loads
        report[f"{p}.stores"] = s.stores
        preds = s.total_predictions
        mis = s.total_mispredictions
        report[f"{p}.branch.predictions"] = preds
        report[f"{p}.branch.mispredictions"] = mis
        report[f"{p}.branch.accuracy"] = _ratio(
            preds - mis, preds, f"{p}.branch.accuracy", flags)
        report[f"{p}.branch.mpki"] = _ratio(
            mis * 1000, s.instructions, f"{p}.branch.mpki", flags)
        for cls in BRANCH_CLASSES:
            report[f"{p}.branch.mpki.{cls.value}"] = _ratio(
                s.mispredictions[cls] * 1000, s.instructions,
                f"{p}.branch.mpki.{cls.value}", flags)

    for name in sorted(machine.nodes):
        node = machine.nodes[name]
        s = node.stats
        p = f"node.{name}"
        report[f"{p}.kind"] = node.kind
        for t in PACKET_TYPES:
            key = t.lower()
            report[f"{p}.{key}.hits"] = s.hits[t]
            report[f"{p}.{key}.misses"] = s.misses[t]
        report[f"{p}.hits"] = s.total_hits()
        report[f"{p}.misses"] = s.total_misses()
        report[f"{p}.mpki"] = _ratio(
            s.demand_misses() * 1000, total_instructions, f"{p}.mpki", flags)
        report[f"{p}.fills"] = s.fills
        report[f"{p}.bypasses"] = s.bypasses
        report[f"{p}.writebacks"] = s.writebacks
        report[f"{p}.avg_miss_latency"] = _ratio(
            s.miss_latency_sum, s.miss_completions,
            f"{p}.avg_miss_latency", flags)
        report[f"{p}.prefetch.issued"] = s.pf_issued
        report[f"{p}.prefetch.filled"] = s.pf_filled
        report[f"{p}.prefetch.useful"] = s.pf_useful
        report[f"{p}.prefetch.useless"] = s.pf_useless
        report[f"{p}.prefetch.accuracy"] = _ratio(
            s.pf_useful, s.pf_useful + s.pf_useless,
            f"{p}.prefetch.accuracy", flags)

    for core_id, walker in enumerate(machine.ptws):
        report[f"ptw.{core_id}.walks"] = walker.walks
        report[f"ptw.{core_id}.walk_reads"] = walker.walk_reads

    dram = machine.dram
    report["dram.row_hits"] = dram.row_hits
    report["dram.row_misses"] = dram.row_misses
    report["dram.reads"] = dram.reads
    report["dram.writes"] = dram.writes
    report["dram.bus_busy_fraction"] = _ratio(
        dram.bus_busy_cycles, dram.measured_cycles * dram.cfg.channels,
        "dram.bus_busy_fraction", flags)

    report["zero_division_flags"] = sorted(flags)
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_text(report: dict) -> str:
    """Human-readable summary of the flat report."""
    lines = []
    num_cores = report["meta.num_cores"]
    lines.append("=== simulation report ===")
    lines.append(f"warmup instructions/core:     {report['meta.warmup_instructions']}")
    lines.append(f"simulation instructions/core: {report['meta.simulation_instructions']}")
    for cid in range(num_cores):
        p = f"core.{cid}"
        lines.append(f"- core {cid}")
        lines.append(
            f"    instructions {report[f'{p}.instructions']}"
            f"  cycles {report[f'{p}.cycles']}"
            f"  IPC {report[f'{p}.ipc']:.4f}")
        lines.append(
            f"    branches {report[f'{p}.branch.predictions']}"
            f"  mispredicted {report[f'{p}.branch.mispredictions']}"
            f"  accuracy {report[f'{p}.branch.accuracy']:.4f}"
            f"  MPKI {report[f'{p}.branch.mpki']:.3f}")
    node_names = sorted(
        key.split(".", 2)[1] for key in report
        if key.startswith("node.") and key.endswith(".kind"))
    for name in node_names:
        p = f"node.{name}"
        lines.append(f"- {name} ({report[f'{p}.kind']})")
        lines.append(
            f"    hits {report[f'{p}.hits']}  misses {report[f'{p}.misses']}"
            f"  MPKI {report[f'{p}.mpki']:.3f}"
            f"  avg miss latency {report[f'{p}.avg_miss_latency']:.1f}")
        if report[f"{p}.prefetch.issued"]:
            lines.append(
                f"    prefetches issued {report[f'{p}.prefetch.issued']}"
                f"  filled {report[f'{p}.prefetch.filled']}"
                f"  useful {report[f'{p}.prefetch.useful']}"
                f"  useless {report[f'{p}.prefetch.useless']}"
                f"  accuracy {report[f'{p}.prefetch.accuracy']:.3f}")
    lines.append("- dram")
    lines.append(
        f"    row hits {report['dram.row_hits']}"
        f"  row misses {report['dram.row_misses']}"
        f"  bus busy {report['dram.bus_busy_fraction']:.3f}")
    return "\n".join(lines) + "\n"
