"""Memory request packets exchanged between hierarchy components."""

from __future__ import annotations

READ = "READ"
WRITE = "WRITE"
PREFETCH = "PREFETCH"
TRANSLATION = "TRANSLATION"


class Packet:
    """One request flowing through the hierarchy.

    ``address`` is a physical byte address, except in TLB nodes where it is
    the virtual address being translated.  ``on_done`` is invoked exactly
    once with the global tick at which the response is ready; it is None
    for posted writes.  ``fill_this_level`` only matters for prefetches and
    applies at the node named by ``pf_origin``.
    """

    __slots__ = (
        "address", "type", "core_id", "instr_id", "ip", "metadata",
        "fill_this_level", "pf_origin", "enqueue_tick", "on_done", "merged",
    )

    def __init__(self, address, type, core_id=0, instr_id=0, ip=0,
                 metadata=0, fill_this_level=True, pf_origin=None,
                 on_done=None):
        self.address = address
        self.type = type
        self.core_id = core_id
        self.instr_id = instr_id
        self.ip = ip
        self.metadata = metadata
        self.fill_this_level = fill_this_level
        self.pf_origin = pf_origin
        self.enqueue_tick = 0
        self.on_done = on_done
        self.merged = None  # queue-merged packets completed with this one

    def __repr__(self):
        return (f"Packet({self.type} @0x{self.address:x} core={self.core_id}"
                f" instr={self.instr_id})")
