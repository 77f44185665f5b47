"""Trace-driven cycle-level multicore simulator with pluggable modules."""

from .config import SystemConfig, load_config, parse_config, validate_topology
from .core import TraceCursor, file_cursor, list_cursor
from .errors import (
    ConfigError,
    ConfigWarning,
    CorruptTraceError,
    ModuleContractError,
    SimulationError,
    TraceSimError,
)
from .machine import Machine
from .metrics import build_report, render_text, report_to_json
from .modules import (
    BranchPredictor,
    BranchTargetPredictor,
    ModuleRegistry,
    Prefetcher,
    PrefetchContext,
    ReplacementPolicy,
    default_registry,
)
from .traceio import (
    BranchClass,
    SyntheticSpec,
    TraceInstruction,
    classify_branch,
    generate_synthetic_trace,
    open_trace,
    read_next_instruction,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "SystemConfig", "load_config", "parse_config", "validate_topology",
    "TraceCursor", "file_cursor", "list_cursor",
    "ConfigError", "ConfigWarning", "CorruptTraceError",
    "ModuleContractError", "SimulationError", "TraceSimError",
    "Machine", "build_report", "render_text", "report_to_json",
    "BranchPredictor", "BranchTargetPredictor", "ModuleRegistry",
    "Prefetcher", "PrefetchContext", "ReplacementPolicy", "default_registry",
    "BranchClass", "SyntheticSpec", "TraceInstruction", "classify_branch",
    "generate_synthetic_trace", "open_trace", "read_next_instruction",
    "read_trace", "write_trace",
    "__version__",
]
