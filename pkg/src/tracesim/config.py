"""Machine description: JSON parsing, defaults, and topology validation.

A configuration document is a JSON object; every field is optional and
falls back to a documented default.  `{}` describes a single default core
behind a private two-level cache hierarchy, a shared last level cache, and
one DRAM channel.  With ``num_cores`` > 1 the default topology is
replicated per core with the last level cache shared (its capacity scales
at 2 MiB per core).

Declared defaults (not taken from any published machine):

    core     4000 MHz, ROB 256, LQ 72, SQ 56, all widths 4,
             mispredict penalty 20, arithmetic latency 1
    L1I/L1D  32 KiB, 8-way, 64 B blocks, hit 4, fill 4
    L2       512 KiB, 8-way, hit 10
    LLC      2 MiB per core, 16-way, shared, hit 20
    ITLB/DTLB  64 entries, 4-way, hit 1
    STLB     1536 entries, 12-way, hit 8
    queues   RQ 32, WQ 32, PQ 32, MSHR 16 per node; 1 tag lookup/cycle
    DRAM     1 channel, 1 rank, 8 banks, 64 Ki rows, 128 columns,
             1600 MHz, tRP = tRCD = tCAS = 24, burst 4, RQ/WQ 64
    VM       4 KiB pages, 4-level walks

``cache_nodes`` entries override the generated defaults by name; unmatched
names are added as extra nodes.  ``lower_level`` accepts a node name or
the sinks "dram" (memory requests) and "ptw" (translation requests, routed
to the requesting core's page walker).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

from .errors import ConfigError, ConfigWarning

PACKET_TYPES = ("READ", "WRITE", "PREFETCH", "TRANSLATION")

# default hook activation: demand loads, upper-level prefetches, and (for
# TLBs, which never see plain reads) demand translations
DEFAULT_ACTIVATE_ON = ("READ", "PREFETCH", "TRANSLATION")


@dataclass
class CoreConfig:
    frequency: int = 4000
    rob_size: int = 256
    lq_size: int = 72
    sq_size: int = 56
    fetch_width: int = 4
    decode_width: int = 4
    execute_width: int = 4
    retire_width: int = 4
    mispredict_penalty: int = 20
    arithmetic_latency: int = 1
    branch_predictor: str = "gshare"
    btb: str = "basic_btb"
    instruction_prefetcher: str = ""
    itlb: str = ""
    dtlb: str = ""
    l1i: str = ""
    l1d: str = ""


@dataclass
class CacheNodeConfig:
    name: str
    kind: str = "cache"  # "cache" | "tlb"
    sets: int = 64
    ways: int = 8
    block_size: int = 64  # page granularity for TLBs
    hit_latency: int = 4
    fill_latency: int = 4
    rq_size: int = 32
    wq_size: int = 32
    pq_size: int = 32
    mshr_size: int = 16
    max_tag_lookups_per_cycle: int = 1
    prefetch_as_fill_here: bool = True
    prefetch_activate_on: tuple = DEFAULT_ACTIVATE_ON
    lower_level: str = "dram"
    prefetcher: str = "no"
    replacement: str = "lru"
    frequency: int = 0  # 0: use the fastest core clock


@dataclass
class DramConfig:
    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    rows_per_bank: int = 65536
    columns_per_row: int = 128
    frequency: int = 1600
    tRP: int = 24
    tRCD: int = 24
    tCAS: int = 24
    burst_cycles_per_block: int = 4
    rq_size: int = 64
    wq_size: int = 64


@dataclass
class SystemConfig:
    num_cores: int = 1
    cores: list = field(default_factory=list)
    cache_nodes: list = field(default_factory=list)
    dram: DramConfig = field(default_factory=DramConfig)
    page_size: int = 4096
    pt_levels: int = 4
    vm_seed: int = 1

    def node(self, name: str) -> CacheNodeConfig:
        for n in self.cache_nodes:
            if n.name == name:
                return n
        raise ConfigError(f"no cache node named {name!r}")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        for n in d["cache_nodes"]:
            n["prefetch_activate_on"] = list(n["prefetch_activate_on"])
        return d


def _default_core_nodes(i: int) -> list:
    """Private hierarchy for core i, following the default topology."""
    return [
        CacheNodeConfig(
            name=f"cpu{i}_ITLB", kind="tlb", sets=16, ways=4, block_size=4096,
            hit_latency=1, fill_latency=1, lower_level=f"cpu{i}_STLB",
        ),
        CacheNodeConfig(
            name=f"cpu{i}_DTLB", kind="tlb", sets=16, ways=4, block_size=4096,
            hit_latency=1, fill_latency=1, lower_level=f"cpu{i}_STLB",
        ),
        CacheNodeConfig(
            name=f"cpu{i}_STLB", kind="tlb", sets=128, ways=12, block_size=4096,
            hit_latency=8, fill_latency=8, lower_level="ptw",
        ),
        CacheNodeConfig(
            name=f"cpu{i}_L1I", sets=64, ways=8,
            hit_latency=4, fill_latency=4, lower_level=f"cpu{i}_L2",
        ),
        CacheNodeConfig(
            name=f"cpu{i}_L1D", sets=64, ways=8,
            hit_latency=4, fill_latency=4, lower_level=f"cpu{i}_L2",
        ),
        CacheNodeConfig(
            name=f"cpu{i}_L2", sets=1024, ways=8,
            hit_latency=10, fill_latency=10, lower_level="LLC",
        ),
    ]


def _default_llc(num_cores: int) -> CacheNodeConfig:
    return CacheNodeConfig(
        name="LLC", sets=2048 * num_cores, ways=16,
        hit_latency=20, fill_latency=20, lower_level="dram",
    )


def _default_core(i: int) -> CoreConfig:
    return CoreConfig(
        instruction_prefetcher="no",
        itlb=f"cpu{i}_ITLB", dtlb=f"cpu{i}_DTLB",
        l1i=f"cpu{i}_L1I", l1d=f"cpu{i}_L1D",
    )


def _set_fields(obj, values: dict, where: str):
    for key, value in values.items():
        if not hasattr(obj, key):
            warnings.warn(f"unknown key {where}.{key}", ConfigWarning, stacklevel=3)
            continue
        current = getattr(obj, key)
        if key == "prefetch_activate_on":
            if not isinstance(value, (list, tuple)) or not all(
                v in PACKET_TYPES for v in value
            ):
                raise ConfigError(f"{where}.{key} must be a list of packet types")
            value = tuple(value)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be a boolean")
        elif isinstance(current, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be an integer")
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"{where}.{key} must be a string")
        setattr(obj, key, value)


def _check_positive(obj, fields_, where: str):
    for f in fields_:
        if getattr(obj, f) < 1:
            raise ConfigError(f"{where}.{f} must be >= 1")


def _check_pow2(obj, fields_, where: str):
    for f in fields_:
        v = getattr(obj, f)
        if v < 1 or v & (v - 1):
            raise ConfigError(f"{where}.{f} must be a power of two")


def parse_config(text: str) -> SystemConfig:
    """Parse a JSON machine description, applying defaults.

    Unknown keys produce a ConfigWarning; wrongly-typed values raise
    ConfigError naming the offending key.
    """
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")

    cfg = SystemConfig()
    core_docs = doc.get("cores", [])
    if not isinstance(core_docs, list):
        raise ConfigError("cores must be an array")
    num_cores = doc.get("num_cores", len(core_docs) or 1)
    if not isinstance(num_cores, int) or num_cores < 1:
        raise ConfigError("num_cores must be a positive integer")
    if core_docs and len(core_docs) != num_cores:
        raise ConfigError(
            f"num_cores is {num_cores} but cores lists {len(core_docs)} entries"
        )
    cfg.num_cores = num_cores

    for key in ("page_size", "pt_levels", "vm_seed"):
        if key in doc:
            if not isinstance(doc[key], int) or isinstance(doc[key], bool):
                raise ConfigError(f"{key} must be an integer")
            setattr(cfg, key, doc[key])
    if cfg.page_size < 1 or cfg.page_size & (cfg.page_size - 1):
        raise ConfigError("page_size must be a power of two")
    if cfg.pt_levels < 1:
        raise ConfigError("pt_levels must be >= 1")

    cfg.cores = [_default_core(i) for i in range(num_cores)]
    for i, entry in enumerate(core_docs):
        if not isinstance(entry, dict):
            raise ConfigError(f"cores[{i}] must be an object")
        _set_fields(cfg.cores[i], entry, f"cores[{i}]")

    # generated topology, overridable per node by name
    nodes = []
    for i in range(num_cores):
        nodes.extend(_default_core_nodes(i))
    nodes.append(_default_llc(num_cores))
    by_name = {n.name: n for n in nodes}

    node_docs = doc.get("cache_nodes", [])
    if not isinstance(node_docs, list):
        raise ConfigError("cache_nodes must be an array")
    for i, entry in enumerate(node_docs):
        if not isinstance(entry, dict):
            raise ConfigError(f"cache_nodes[{i}] must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ConfigError(f"cache_nodes[{i}].name is required")
        node = by_name.get(name)
        if node is None:
            node = CacheNodeConfig(name=name)
            if entry.get("kind") == "tlb":
                node.kind = "tlb"
                node.block_size = cfg.page_size
                node.hit_latency = node.fill_latency = 1
            nodes.append(node)
            by_name[name] = node
        _set_fields(node, entry, f"cache_nodes[{i}]")
        if node.kind not in ("cache", "tlb"):
            raise ConfigError(f"cache_nodes[{i}].kind must be 'cache' or 'tlb'")
    cfg.cache_nodes = nodes

    if "dram" in doc:
        if not isinstance(doc["dram"], dict):
            raise ConfigError("dram must be an object")
        _set_fields(cfg.dram, doc["dram"], "dram")

    for key in doc:
        if key not in (
            "num_cores", "cores", "cache_nodes", "dram",
            "page_size", "pt_levels", "vm_seed",
        ):
            warnings.warn(f"unknown key {key}", ConfigWarning, stacklevel=2)

    _validate_values(cfg)
    return cfg


def _validate_values(cfg: SystemConfig):
    for i, core in enumerate(cfg.cores):
        where = f"cores[{i}]"
        _check_positive(core, (
            "frequency", "rob_size", "lq_size", "sq_size",
            "fetch_width", "decode_width", "execute_width", "retire_width",
            "arithmetic_latency",
        ), where)
        if core.mispredict_penalty < 0:
            raise ConfigError(f"{where}.mispredict_penalty must be >= 0")
    for node in cfg.cache_nodes:
        where = f"cache_nodes[{node.name}]"
        _check_positive(node, (
            "sets", "ways", "hit_latency", "fill_latency",
            "rq_size", "wq_size", "pq_size", "mshr_size",
            "max_tag_lookups_per_cycle",
        ), where)
        _check_pow2(node, ("block_size",), where)
        if node.frequency < 0:
            raise ConfigError(f"{where}.frequency must be >= 0")
    _check_pow2(cfg.dram, (
        "channels", "ranks_per_channel", "banks_per_rank",
        "rows_per_bank", "columns_per_row",
    ), "dram")
    _check_positive(cfg.dram, (
        "frequency", "tRP", "tRCD", "tCAS", "burst_cycles_per_block",
        "rq_size", "wq_size",
    ), "dram")


def load_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


@dataclass
class Topology:
    """Validated hierarchy: name -> config plus a top-down service order."""

    nodes: dict
    order: list  # upper levels before lower levels
    dram_block_size: int


def validate_topology(cfg: SystemConfig) -> Topology:
    """Check sink rules and the DAG shape of lower_level links.

    Every TLB chain must end at the sink "ptw" (the requesting core's page
    walker, whose own lower level is that core's L1D); every cache chain
    must end at "dram".  Sharing and non-uniform depths are fine.
    """
    by_name = {}
    for node in cfg.cache_nodes:
        if node.name in by_name:
            raise ConfigError(f"duplicate cache node name {node.name!r}")
        if node.name in ("dram", "ptw"):
            raise ConfigError(f"reserved node name {node.name!r}")
        by_name[node.name] = node

    for node in cfg.cache_nodes:
        low = node.lower_level
        if low in ("dram", "ptw"):
            continue
        if low not in by_name:
            raise ConfigError(
                f"{node.name}.lower_level names unknown node {low!r}"
            )

    # sink discipline, plus cycle detection along the way
    sink_cache = {}
    for node in cfg.cache_nodes:
        seen = []
        cur = node
        while True:
            if cur.name in sink_cache:
                sink = sink_cache[cur.name]
                break
            if cur.name in seen:
                raise ConfigError(
                    "cycle in hierarchy: " + " -> ".join(seen + [cur.name])
                )
            seen.append(cur.name)
            if cur.lower_level in ("dram", "ptw"):
                sink = cur.lower_level
                break
            cur = by_name[cur.lower_level]
        for name in seen:
            sink_cache[name] = sink
        if node.kind == "tlb" and sink != "ptw":
            raise ConfigError(f"TLB chain from {node.name} must sink at PTW")
        if node.kind == "cache" and sink != "dram":
            raise ConfigError(
                f"cache chain from {node.name} must sink at physical memory"
            )

    for node in cfg.cache_nodes:
        low = node.lower_level
        if low in ("dram", "ptw"):
            continue
        if by_name[low].kind != node.kind:
            raise ConfigError(
                f"{node.name} ({node.kind}) may not feed {low} ({by_name[low].kind})"
            )
        if node.kind == "tlb" and by_name[low].block_size != node.block_size:
            raise ConfigError(
                f"TLB {node.name} and {low} must share page granularity"
            )

    for i, core in enumerate(cfg.cores):
        for role in ("itlb", "dtlb", "l1i", "l1d"):
            name = getattr(core, role)
            if name not in by_name:
                raise ConfigError(f"cores[{i}].{role} names unknown node {name!r}")
            want = "tlb" if role.endswith("tlb") else "cache"
            if by_name[name].kind != want:
                raise ConfigError(f"cores[{i}].{role} must be a {want} node")

    # depth-sorted service order: upper levels operate before lower ones
    depth = {}

    def depth_of(name):
        if name in depth:
            return depth[name]
        low = by_name[name].lower_level
        d = 0 if low in ("dram", "ptw") else depth_of(low) + 1
        depth[name] = d
        return d

    for node in cfg.cache_nodes:
        depth_of(node.name)
    order = sorted(by_name, key=lambda n: (-depth[n], n))

    blocks = {n.block_size for n in cfg.cache_nodes
              if n.kind == "cache" and n.lower_level == "dram"}
    dram_block = max(blocks) if blocks else 64

    return Topology(nodes=by_name, order=order, dram_block_size=dram_block)
