"""Exception types shared across the simulator."""


class TraceSimError(Exception):
    """Base class for all simulator errors."""


class CorruptTraceError(TraceSimError):
    """A trace stream is truncated, misaligned, or fails to decompress."""


class ConfigError(TraceSimError):
    """A machine description is malformed or violates a topology rule."""


class ConfigWarning(UserWarning):
    """Non-fatal configuration issue, e.g. an unknown key."""


class ModuleContractError(TraceSimError):
    """A user module returned a value outside its hook contract."""


class SimulationError(TraceSimError):
    """The simulation reached a state it cannot continue from."""
