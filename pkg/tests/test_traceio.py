"""Trace format, containers, classification, and the synthetic generator."""

import gzip
import io
import lzma
import tracemalloc

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracesim.errors import CorruptTraceError, TraceSimError
from tracesim.traceio import (
    RECORD_SIZE,
    REG_FLAGS,
    REG_IP,
    REG_SP,
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

reg_ids = st.integers(min_value=0, max_value=255)
addrs = st.integers(min_value=0, max_value=(1 << 64) - 1)


@st.composite
def records(draw):
    is_branch = draw(st.booleans())
    return TraceInstruction(
        ip=draw(addrs),
        is_branch=is_branch,
        branch_taken=draw(st.booleans()) if is_branch else False,
        dest_regs=tuple(draw(st.lists(reg_ids, min_size=2, max_size=2))),
        src_regs=tuple(draw(st.lists(reg_ids, min_size=4, max_size=4))),
        dest_mem=tuple(draw(st.lists(addrs, min_size=2, max_size=2))),
        src_mem=tuple(draw(st.lists(addrs, min_size=4, max_size=4))),
    )


class TestCodec:
    def test_record_is_64_bytes(self):
        assert len(TraceInstruction(ip=0).to_bytes()) == RECORD_SIZE == 64

    @given(records())
    @settings(max_examples=200)
    def test_round_trip_identity(self, rec):
        assert TraceInstruction.from_bytes(rec.to_bytes()) == rec

    def test_plain_decode(self):
        raw = TraceInstruction(ip=0x400000).to_bytes()
        rec = TraceInstruction.from_bytes(raw)
        assert rec.ip == 0x400000
        assert not rec.is_branch
        assert classify_branch(rec) is BranchClass.NOT_BRANCH
        assert rec.dest_mem == (0, 0) and rec.src_mem == (0, 0, 0, 0)

    def test_two_records_then_eof(self):
        stream = io.BytesIO(TraceInstruction(ip=1).to_bytes()
                            + TraceInstruction(ip=2).to_bytes())
        assert read_next_instruction(stream).ip == 1
        assert read_next_instruction(stream).ip == 2
        assert read_next_instruction(stream) is None

    def test_truncated_stream(self):
        stream = io.BytesIO(bytes(100))  # 100 % 64 != 0
        assert read_next_instruction(stream) is not None
        with pytest.raises(CorruptTraceError):
            read_next_instruction(stream)


class TestContainers:
    def _records(self, n):
        return [TraceInstruction(ip=0x1000 + 4 * i) for i in range(n)]

    def test_gzip_transparency(self, tmp_path):
        recs = self._records(1000)
        raw = tmp_path / "t.trace"
        gz = tmp_path / "t.trace.gz"
        write_trace(raw, recs)
        write_trace(gz, recs)
        assert list(read_trace(raw)) == list(read_trace(gz)) == recs

    def test_xz_transparency(self, tmp_path):
        recs = self._records(200)
        path = tmp_path / "t.trace.xz"
        write_trace(path, recs)
        assert list(read_trace(path)) == recs

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_bytes(b"")
        with open_trace(path) as stream:
            assert read_next_instruction(stream) is None

    def test_unknown_magic_is_raw(self, tmp_path):
        rec = TraceInstruction(ip=0xABCD)
        path = tmp_path / "odd.bin"
        path.write_bytes(rec.to_bytes())
        assert list(read_trace(path)) == [rec]

    def test_corrupt_gzip_payload(self, tmp_path):
        path = tmp_path / "bad.gz"
        good = gzip.compress(TraceInstruction(ip=1).to_bytes() * 4)
        path.write_bytes(good[:-20])  # chop the deflate stream
        with pytest.raises(CorruptTraceError):
            list(read_trace(path))

    def test_streamed_memory_is_bounded(self, tmp_path):
        # peak memory while reading must not scale with trace length
        def peak_reading(n):
            path = tmp_path / f"mem{n}.trace"
            write_trace(path, (TraceInstruction(ip=i) for i in range(n)))
            tracemalloc.start()
            count = sum(1 for _ in read_trace(path))
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            assert count == n
            return peak

        small = peak_reading(100_000)
        large = peak_reading(1_000_000)
        assert large < small * 1.5 + 1_000_000


def _branch(src=(), dest=()):
    src = tuple(src) + (0,) * (4 - len(src))
    dest = tuple(dest) + (0,) * (2 - len(dest))
    return TraceInstruction(ip=0x400, is_branch=True, branch_taken=True,
                            src_regs=src, dest_regs=dest)


class TestClassify:
    @pytest.mark.parametrize("src,dest,expected", [
        ((REG_FLAGS,), (REG_IP,), BranchClass.CONDITIONAL),
        ((), (REG_IP,), BranchClass.DIRECT_JUMP),
        ((REG_SP,), (REG_IP, REG_SP), BranchClass.RETURN),
        ((7,), (REG_IP,), BranchClass.INDIRECT_JUMP),
        ((REG_IP, REG_SP), (REG_IP, REG_SP), BranchClass.DIRECT_CALL),
        ((7, REG_SP), (REG_IP, REG_SP), BranchClass.INDIRECT_CALL),
        ((REG_IP,), (REG_IP,), BranchClass.INDIRECT_JUMP),  # fallback row
    ])
    def test_table(self, src, dest, expected):
        assert classify_branch(_branch(src, dest)) is expected

    def test_not_branch_iff_flag_clear(self):
        rec = TraceInstruction(ip=0x10, dest_regs=(REG_IP, 0))
        assert classify_branch(rec) is BranchClass.NOT_BRANCH

    @given(records())
    @settings(max_examples=200)
    def test_total_and_deterministic(self, rec):
        first = classify_branch(rec)
        assert first is classify_branch(rec)
        assert isinstance(first, BranchClass)
        assert (first is BranchClass.NOT_BRANCH) == (not rec.is_branch)


class TestGenerator:
    def test_streaming_sequence(self):
        spec = SyntheticSpec("streaming-load", 3, stride=64, addr_base=0x10000)
        loads = [rec.src_mem[0] for rec in generate_synthetic_trace(spec)]
        assert loads == [0x10000, 0x10040, 0x10080]

    def test_loop_branch_always_taken(self):
        spec = SyntheticSpec("loop-branch", 500, body=4, taken_rate=1.0)
        recs = list(generate_synthetic_trace(spec))
        branches = [r for r in recs if r.is_branch]
        assert branches and all(r.branch_taken for r in branches)
        assert all(classify_branch(r) is BranchClass.CONDITIONAL
                   for r in branches)
        assert len(branches) == 100

    def test_seed_determinism(self):
        spec1 = SyntheticSpec("random-load", 200, seed=1)
        spec2 = SyntheticSpec("random-load", 200, seed=2)
        once = [r.to_bytes() for r in generate_synthetic_trace(spec1)]
        again = [r.to_bytes() for r in generate_synthetic_trace(
            SyntheticSpec("random-load", 200, seed=1))]
        other = [r.to_bytes() for r in generate_synthetic_trace(spec2)]
        assert once == again
        assert once != other

    def test_zero_stride_rejected(self):
        spec = SyntheticSpec("strided-load", 10, stride=0)
        with pytest.raises(TraceSimError):
            list(generate_synthetic_trace(spec))

    def test_bad_length_rejected(self):
        with pytest.raises(TraceSimError):
            list(generate_synthetic_trace(SyntheticSpec("random-load", 0)))

    @pytest.mark.parametrize("pattern", [
        "streaming-load", "strided-load", "random-load",
        "loop-branch", "pointer-chase", "pure-arithmetic",
    ])
    def test_patterns_round_trip(self, pattern, tmp_path):
        spec = SyntheticSpec(pattern, 128, seed=3)
        recs = list(generate_synthetic_trace(spec))
        assert len(recs) == 128
        path = tmp_path / "p.trace.gz"
        write_trace(path, recs)
        assert list(read_trace(path)) == recs
