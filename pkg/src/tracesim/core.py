"""Per-core pipeline: in-order front end, out-of-order back end.

Stages run retire -> execute -> dispatch -> fetch within one cycle, so
nothing passes through two stages in the same cycle.  Fetch consumes trace
records; each instruction-cache block crossing checks the ITLB and L1I
(a present block costs nothing, a miss stalls fetch until the fill
returns).  Branches are predicted at fetch against the trace outcome; a
mispredicted branch halts fetch until it executes and then charges the
fixed penalty.  Loads translate through the DTLB and read the L1D, and
must complete before retiring; stores translate at execute but post their
write to the L1D write queue at retirement.  Arithmetic instructions all
share one configurable latency.  There is no wrong-path work and no
register dependency tracking: scheduling is bounded by structure sizes,
widths, and memory readiness only.
"""

from __future__ import annotations

from collections import deque

from .errors import SimulationError
from .packet import READ, TRANSLATION, WRITE, Packet
from .traceio import BranchClass, classify_branch

# operand progress
_NEED_TRANSLATE, _TRANSLATING, _NEED_READ, _READING, _DONE = range(5)


class TraceCursor:
    """Sequential record cursor with one-record lookahead.

    ``replay`` wraps to the first record at end of trace so instruction
    ids keep increasing; without it the cursor just ends.
    """

    def __init__(self, open_fn, replay=True):
        self._open = open_fn
        self.replay = replay
        self._it = iter(open_fn())
        self._next = next(self._it, None)
        self.empty = self._next is None
        self._after = self._pull() if not self.empty else None

    def _pull(self):
        rec = next(self._it, None)
        if rec is None and self.replay and not self.empty:
            self._it = iter(self._open())
            rec = next(self._it, None)
        return rec

    def peek(self):
        """(record, following ip) or None at end of trace."""
        if self._next is None:
            return None
        return self._next, (self._after.ip if self._after else 0)

    def advance(self):
        self._next = self._after
        self._after = self._pull() if self._next is not None else None


def file_cursor(path, replay=True):
    from .traceio import read_trace
    return TraceCursor(lambda: read_trace(path), replay=replay)


def list_cursor(records, replay=True):
    records = list(records)
    return TraceCursor(lambda: iter(records), replay=replay)


class _Operand:
    __slots__ = ("vaddr", "is_load", "stage", "ready", "pa", "posted")

    def __init__(self, vaddr, is_load):
        self.vaddr = vaddr
        self.is_load = is_load
        self.stage = _NEED_TRANSLATE
        self.ready = 0
        self.pa = 0
        self.posted = False

    def _done(self, ready):
        self.ready = ready


class DecodedInstruction:
    __slots__ = (
        "instr_id", "ip", "cls", "branch_class", "taken", "actual_target",
        "predicted_target", "mispredicted", "ops", "n_loads", "n_stores",
        "issued", "completed_at",
    )

    def __init__(self, instr_id, rec, actual_target):
        self.instr_id = instr_id
        self.ip = rec.ip
        self.branch_class = classify_branch(rec)
        self.taken = rec.branch_taken
        self.actual_target = actual_target if rec.branch_taken else 0
        self.predicted_target = 0
        self.mispredicted = False
        self.ops = []
        self.n_loads = 0
        self.n_stores = 0
        for vaddr in rec.src_mem:
            if vaddr:
                self.ops.append(_Operand(vaddr, True))
                self.n_loads += 1
        for vaddr in rec.dest_mem:
            if vaddr:
                self.ops.append(_Operand(vaddr, False))
                self.n_stores += 1
        if rec.is_branch:
            self.cls = "branch"
        elif self.n_loads:
            self.cls = "load"
        elif self.n_stores:
            self.cls = "store"
        else:
            self.cls = "arithmetic"
        self.issued = False
        self.completed_at = None


class Core:
    """One simulated core, fed by one statically assigned trace."""

    def __init__(self, core_id, cfg, clock, latency_scale, stats):
        self.core_id = core_id
        self.cfg = cfg
        self.clock = clock
        self.stats = stats
        self.arith_ticks = latency_scale(cfg.arithmetic_latency)
        self.penalty_ticks = latency_scale(cfg.mispredict_penalty)
        # wired by the machine
        self.itlb = None
        self.dtlb = None
        self.l1i = None
        self.l1d = None
        self.bp = None
        self.btb = None
        self.vm = None
        self.cursor = None

        self.cycle = 0
        self.rob = deque()
        self.issue_idx = 0
        self.lq_used = 0
        self.sq_used = 0
        self.fetch_queue = deque()
        self.fetch_cap = max(2 * cfg.fetch_width, 8)
        self.pending_mem = []
        self.next_instr_id = 0
        self.retired_total = 0
        self.frozen = False
        self.measure_target = None  # set once measurement starts
        self.drained = False
        self.fetch_stall_until = 0
        self.fetch_halted = False
        self.last_fetch_block = None
        self.ifetch = None  # in-flight instruction block lookup

    # --- pipeline ----------------------------------------------------------

    def advance(self, now):
        self.cycle += 1
        if not self.frozen:
            self.stats.cycles += 1
        self._retire(now)
        self._execute(now)
        self._dispatch()
        self._fetch(now)

    def _retire(self, now):
        width = self.cfg.retire_width
        while width and self.rob:
            instr = self.rob[0]
            if (not instr.issued or instr.completed_at is None
                    or now < instr.completed_at):
                break
            if not self._post_stores(instr):
                break  # L1D write queue full; retry next cycle
            self.rob.popleft()
            if self.issue_idx:
                self.issue_idx -= 1
            self.lq_used -= instr.n_loads
            self.sq_used -= instr.n_stores
            self.retired_total += 1
            if not self.frozen:
                s = self.stats
                s.instructions += 1
                s.loads += instr.n_loads
                s.stores += instr.n_stores
                if instr.cls == "branch":
                    s.predictions[instr.branch_class] += 1
                    if instr.mispredicted:
                        s.mispredictions[instr.branch_class] += 1
                if (self.measure_target is not None
                        and s.instructions >= self.measure_target):
                    self.frozen = True  # counters stop exactly at the target
            width -= 1

    def _post_stores(self, instr) -> bool:
        for op in instr.ops:
            if op.is_load or op.posted:
                continue
            packet = Packet(op.pa & ~(self.l1d.block_size - 1), WRITE,
                            core_id=self.core_id, instr_id=instr.instr_id,
                            ip=instr.ip)
            if not self.l1d.add_packet(packet, "WQ"):
                return False
            op.posted = True
        return True

    def _execute(self, now):
        if self.pending_mem:
            self.pending_mem = [
                instr for instr in self.pending_mem
                if not self._step_mem(instr, now)
            ]
        width = self.cfg.execute_width
        while width and self.issue_idx < len(self.rob):
            instr = self.rob[self.issue_idx]
            self._start_execute(instr, now)
            self.issue_idx += 1
            width -= 1

    def _start_execute(self, instr, now):
        instr.issued = True
        if instr.cls == "branch":
            self.btb.update_btb(instr.ip, instr.actual_target, instr.taken,
                                instr.branch_class)
            self.bp.last_branch_result(instr.ip, instr.actual_target,
                                       instr.taken, instr.branch_class)
            if instr.mispredicted:
                self.fetch_stall_until = now + self.penalty_ticks
                self.fetch_halted = False
        if instr.ops:
            if not self._step_mem(instr, now):
                self.pending_mem.append(instr)
        else:
            instr.completed_at = now + self.arith_ticks

    def _step_mem(self, instr, now) -> bool:
        """Advance one instruction's memory operands; True when all done."""
        done = True
        for op in instr.ops:
            if op.stage == _NEED_TRANSLATE:
                page = op.vaddr & ~(self.vm.page_size - 1)
                packet = Packet(page, TRANSLATION, core_id=self.core_id,
                                instr_id=instr.instr_id, ip=instr.ip,
                                on_done=op._done)
                if self.dtlb.add_packet(packet, "RQ"):
                    op.stage = _TRANSLATING
                    op.ready = None
                done = False
            elif op.stage == _TRANSLATING:
                if op.ready is not None and now >= op.ready:
                    op.pa = self.vm.pa_of(op.vaddr)
                    op.stage = _NEED_READ if op.is_load else _DONE
                    if op.stage == _NEED_READ:
                        done = False
                else:
                    done = False
            if op.stage == _NEED_READ:
                packet = Packet(op.pa & ~(self.l1d.block_size - 1), READ,
                                core_id=self.core_id, instr_id=instr.instr_id,
                                ip=instr.ip, on_done=op._done)
                if self.l1d.add_packet(packet, "RQ"):
                    op.stage = _READING
                    op.ready = None
                done = False
            elif op.stage == _READING:
                if op.ready is not None and now >= op.ready:
                    op.stage = _DONE
                else:
                    done = False
        if done:
            instr.completed_at = now
        return done

    def _dispatch(self):
        width = self.cfg.decode_width
        while width and self.fetch_queue:
            instr = self.fetch_queue[0]
            if len(self.rob) >= self.cfg.rob_size:
                break
            if self.lq_used + instr.n_loads > self.cfg.lq_size:
                break
            if self.sq_used + instr.n_stores > self.cfg.sq_size:
                break
            self.fetch_queue.popleft()
            self.rob.append(instr)
            self.lq_used += instr.n_loads
            self.sq_used += instr.n_stores
            width -= 1

    # --- fetch ---------------------------------------------------------------

    def _fetch(self, now):
        if self.cursor is None:  # idle core, e.g. a bare memory-system test
            return
        if self.fetch_halted or now < self.fetch_stall_until or self.drained:
            return
        width = self.cfg.fetch_width
        while width and len(self.fetch_queue) < self.fetch_cap:
            if self.ifetch is not None and not self._advance_ifetch(now):
                return
            peeked = self.cursor.peek()
            if peeked is None:
                self.drained = True
                return
            rec, next_ip = peeked
            block = rec.ip & ~(self.l1i.block_size - 1)
            if block != self.last_fetch_block:
                if not self._begin_iblock(block, rec.ip, now):
                    return
            self.cursor.advance()
            instr = DecodedInstruction(self.next_instr_id, rec, next_ip)
            self.next_instr_id += 1
            if instr.cls == "branch":
                self._predict_branch(instr)
            self.fetch_queue.append(instr)
            width -= 1
            if instr.mispredicted:
                self.fetch_halted = True
                return

    def _predict_branch(self, instr):
        cls = instr.branch_class
        target, always_taken = self.btb.btb_prediction(instr.ip, cls)
        taken_dir = self.bp.predict_branch(instr.ip, target, always_taken, cls)
        if cls is BranchClass.CONDITIONAL:
            # either side predicting not-taken wins
            predicted_taken = taken_dir and target != 0
        else:
            predicted_taken = True
        instr.predicted_target = target
        instr.mispredicted = (
            predicted_taken != instr.taken
            or (instr.taken and target != instr.actual_target)
        )
        if self.l1i.prefetcher is not None:
            self.l1i.prefetcher.branch_operate(instr.ip, cls, target)

    def _begin_iblock(self, block, ip, now) -> bool:
        """Make the instruction block at ``block`` fetchable.

        Present ITLB/L1I entries cost nothing; any miss leaves an in-flight
        lookup in ``self.ifetch`` and stalls fetch until it resolves.
        """
        page = block & ~(self.vm.page_size - 1)
        if self.itlb.probe_access(page, self.core_id, ip, TRANSLATION):
            pa_block = self.vm.pa_of(block)
            if self.l1i.probe_access(pa_block, self.core_id, ip, READ):
                self.last_fetch_block = block
                return True
            state = {"block": block, "ip": ip, "phase": "read_send",
                     "pa": pa_block, "ready": None}
            self.ifetch = state
            self._advance_ifetch(now)
            return False
        state = {"block": block, "ip": ip, "phase": "tlb_send",
                 "pa": 0, "ready": None}
        self.ifetch = state
        self._advance_ifetch(now)
        return False

    def _advance_ifetch(self, now) -> bool:
        state = self.ifetch
        phase = state["phase"]

        def ready_cb(tick):
            state["ready"] = tick

        if phase == "tlb_send":
            page = state["block"] & ~(self.vm.page_size - 1)
            packet = Packet(page, TRANSLATION, core_id=self.core_id,
                            ip=state["ip"], on_done=ready_cb)
            if self.itlb.add_packet(packet, "RQ"):
                state["phase"] = "tlb_wait"
            return False
        if phase == "tlb_wait":
            if state["ready"] is None or now < state["ready"]:
                return False
            state["pa"] = self.vm.pa_of(state["block"])
            if self.l1i.probe_access(state["pa"], self.core_id, state["ip"],
                                     READ):
                self._iblock_done(state)
                return True
            state["phase"] = "read_send"
            state["ready"] = None
            phase = "read_send"
        if phase == "read_send":
            packet = Packet(state["pa"], READ, core_id=self.core_id,
                            ip=state["ip"], on_done=ready_cb)
            if self.l1i.add_packet(packet, "RQ"):
                state["phase"] = "read_wait"
            return False
        if phase == "read_wait":
            if state["ready"] is None or now < state["ready"]:
                return False
            self._iblock_done(state)
            return True
        raise SimulationError(f"bad ifetch phase {phase!r}")

    def _iblock_done(self, state):
        self.last_fetch_block = state["block"]
        self.ifetch = None
