"""Instruction trace format: binary codec, streamed readers, synthetic generation.

A trace is a flat sequence of fixed 64-byte little-endian records:

    offset  size  field
    0       8     ip          (u64 virtual byte address)
    8       1     is_branch   (0 or 1)
    9       1     branch_taken
    10      2     dest_regs   (2 x u8 register ids, 0 = unused slot)
    12      4     src_regs    (4 x u8)
    16      16    dest_mem    (2 x u64 virtual addresses, 0 = unused slot)
    32      32    src_mem     (4 x u64)

Register ids use a fixed convention: 0 means "no operand", REG_SP = 6,
REG_FLAGS = 25, REG_IP = 26.  Branch kind is not encoded explicitly; it is
recovered from which special registers appear in the operand arrays (see
``classify_branch``).

Trace files may be stored raw, gzip-compressed, or xz-compressed; the
container is detected from magic bytes and decompressed inline, so a trace
is never held in memory as a whole.
"""

from __future__ import annotations

import enum
import gzip
import io
import lzma
import random
import struct
import zlib
from dataclasses import dataclass

from .errors import CorruptTraceError, TraceSimError

RECORD_SIZE = 64
_RECORD = struct.Struct("<Q8B6Q")
assert _RECORD.size == RECORD_SIZE

# special register ids (0 = unused operand slot)
REG_SP = 6
REG_FLAGS = 25
REG_IP = 26

_GZIP_MAGIC = b"\x1f\x8b"
_XZ_MAGIC = b"\xfd7zXZ\x00"


class BranchClass(enum.Enum):
    NOT_BRANCH = "not_branch"
    DIRECT_JUMP = "direct_jump"
    INDIRECT_JUMP = "indirect_jump"
    CONDITIONAL = "conditional"
    DIRECT_CALL = "direct_call"
    INDIRECT_CALL = "indirect_call"
    RETURN = "return"


@dataclass
class TraceInstruction:
    """One decoded instruction record."""

    ip: int
    is_branch: bool = False
    branch_taken: bool = False
    dest_regs: tuple = (0, 0)
    src_regs: tuple = (0, 0, 0, 0)
    dest_mem: tuple = (0, 0)
    src_mem: tuple = (0, 0, 0, 0)

    def to_bytes(self) -> bytes:
        return _RECORD.pack(
            self.ip,
            1 if self.is_branch else 0,
            1 if self.branch_taken else 0,
            *self.dest_regs,
            *self.src_regs,
            *self.dest_mem,
            *self.src_mem,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TraceInstruction":
        if len(raw) != RECORD_SIZE:
            raise CorruptTraceError(
                f"record must be {RECORD_SIZE} bytes, got {len(raw)}"
            )
        f = _RECORD.unpack(raw)
        return cls(
            ip=f[0],
            is_branch=bool(f[1]),
            branch_taken=bool(f[2]),
            dest_regs=(f[3], f[4]),
            src_regs=(f[5], f[6], f[7], f[8]),
            dest_mem=(f[9], f[10]),
            src_mem=(f[11], f[12], f[13], f[14]),
        )


def classify_branch(rec: TraceInstruction) -> BranchClass:
    """Recover the branch kind from the operand arrays.

    All true branch classes write REG_IP.  Rules are checked in order;
    operand patterns matching none of them fall back to INDIRECT_JUMP.
    """
    if not rec.is_branch:
        return BranchClass.NOT_BRANCH

    src = set(r for r in rec.src_regs if r)
    dest = set(r for r in rec.dest_regs if r)
    if REG_IP not in dest:
        return BranchClass.INDIRECT_JUMP

    reads_other = any(r not in (REG_SP, REG_FLAGS, REG_IP) for r in src)
    if REG_FLAGS in src:
        return BranchClass.CONDITIONAL
    if not src:
        return BranchClass.DIRECT_JUMP
    if reads_other and REG_SP not in src:
        return BranchClass.INDIRECT_JUMP
    if REG_SP in dest and REG_IP in src:
        return BranchClass.DIRECT_CALL
    if REG_SP in dest and reads_other:
        return BranchClass.INDIRECT_CALL
    if REG_SP in src and REG_IP not in src:
        return BranchClass.RETURN
    return BranchClass.INDIRECT_JUMP


def open_trace(path) -> io.BufferedIOBase:
    """Open a trace file for streaming reads, decompressing inline.

    The container is detected from the first bytes of the file: gzip and xz
    are recognized, anything else is treated as a raw record stream.
    """
    probe = open(path, "rb")
    try:
        magic = probe.read(6)
    except OSError:
        probe.close()
        raise
    probe.seek(0)
    if magic[:2] == _GZIP_MAGIC:
        probe.close()
        return gzip.open(path, "rb")
    if magic[:6] == _XZ_MAGIC:
        probe.close()
        return lzma.open(path, "rb")
    return probe


def _read_exact(stream, n: int) -> bytes:
    """Read exactly n bytes, tolerating short reads from decompressors."""
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = stream.read(remaining)
        except (OSError, EOFError, zlib.error, lzma.LZMAError) as exc:
            raise CorruptTraceError(f"decompression failure: {exc}") from exc
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_next_instruction(stream):
    """Return the next record, or None exactly at end of trace.

    A trailing partial record (1..63 bytes) raises CorruptTraceError.
    """
    raw = _read_exact(stream, RECORD_SIZE)
    if not raw:
        return None
    if len(raw) != RECORD_SIZE:
        raise CorruptTraceError(
            f"truncated trace: {len(raw)} trailing bytes (record is {RECORD_SIZE})"
        )
    return TraceInstruction.from_bytes(raw)


def read_trace(path):
    """Yield every record of a trace file as a generator."""
    stream = open_trace(path)
    try:
        while True:
            rec = read_next_instruction(stream)
            if rec is None:
                return
            yield rec
    finally:
        stream.close()


def write_trace(path, records) -> int:
    """Write records to a trace file; a .gz or .xz suffix selects compression.

    Returns the number of records written.
    """
    name = str(path)
    if name.endswith(".gz"):
        opener = gzip.open
    elif name.endswith(".xz"):
        opener = lzma.open
    else:
        opener = open
    count = 0
    with opener(name, "wb") as out:
        for rec in records:
            out.write(rec.to_bytes())
            count += 1
    return count


# --- synthetic trace generation -------------------------------------------

PATTERNS = (
    "streaming-load",
    "strided-load",
    "random-load",
    "loop-branch",
    "pointer-chase",
    "pure-arithmetic",
)


@dataclass
class SyntheticSpec:
    """Parameters for one synthetic workload.

    ``length`` counts emitted instructions.  ``body`` inserts that many
    plain arithmetic instructions between consecutive "interesting"
    instructions (loads for the load patterns, the back edge for
    loop-branch).  ``code_window`` bounds the instruction-address footprint:
    ips advance by 4 bytes and wrap inside the window, so small windows
    model tight loops and large ones model streaming code.
    """

    pattern: str
    length: int
    seed: int = 0
    stride: int = 64
    body: int = 0
    taken_rate: float = 1.0
    addr_base: int = 0x1000_0000
    addr_range: int = 1 << 24
    code_base: int = 0x40_0000
    code_window: int = 4096

    def validate(self):
        if self.pattern not in PATTERNS:
            raise TraceSimError(f"unknown pattern {self.pattern!r}")
        if self.length <= 0:
            raise TraceSimError("length must be positive")
        if self.pattern == "strided-load" and self.stride == 0:
            raise TraceSimError("strided-load requires a nonzero stride")
        if not 0.0 <= self.taken_rate <= 1.0:
            raise TraceSimError("taken_rate must be within [0, 1]")
        if self.body < 0:
            raise TraceSimError("body must be >= 0")
        if self.addr_range <= 0 or self.code_window <= 0:
            raise TraceSimError("address ranges must be positive")


def _arith(ip) -> TraceInstruction:
    return TraceInstruction(ip=ip, dest_regs=(1, 0), src_regs=(2, 3, 0, 0))


def _load(ip, addr) -> TraceInstruction:
    return TraceInstruction(ip=ip, dest_regs=(1, 0), src_mem=(addr, 0, 0, 0))


def generate_synthetic_trace(spec: SyntheticSpec):
    """Yield ``spec.length`` records, deterministic in (spec, seed)."""
    spec.validate()
    rng = random.Random(spec.seed)
    pattern = spec.pattern

    window = max(4, spec.code_window & ~3)
    loop_top = spec.code_base

    def ip_of(i):
        return spec.code_base + (i * 4) % window

    if pattern == "pure-arithmetic":
        for i in range(spec.length):
            yield _arith(ip_of(i))
        return

    if pattern == "loop-branch":
        # one conditional back edge closing each loop body
        period = spec.body + 1
        for i in range(spec.length):
            ip = loop_top + (i % period) * 4
            if i % period == spec.body:
                taken = rng.random() < spec.taken_rate
                yield TraceInstruction(
                    ip=ip,
                    is_branch=True,
                    branch_taken=taken,
                    dest_regs=(REG_IP, 0),
                    src_regs=(REG_FLAGS, 0, 0, 0),
                )
            else:
                yield _arith(ip)
        return

    # load patterns: one load every (body + 1) instructions
    stride = spec.stride if spec.stride else 64
    period = spec.body + 1
    n_blocks = max(1, spec.addr_range // 64)
    chase_next = rng.randrange(n_blocks)
    load_index = 0
    for i in range(spec.length):
        ip = ip_of(i)
        if i % period != 0:
            yield _arith(ip)
            continue
        if pattern in ("streaming-load", "strided-load"):
            addr = (spec.addr_base + load_index * stride) & 0xFFFF_FFFF_FFFF
        elif pattern == "random-load":
            addr = spec.addr_base + rng.randrange(n_blocks) * 64
        else:  # pointer-chase
            addr = spec.addr_base + chase_next * 64
            chase_next = (chase_next * 2862933555777941757 + 3037000493) % n_blocks
        load_index += 1
        yield _load(ip, addr)
