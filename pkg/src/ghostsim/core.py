"""Out-of-order core: fetch, rename, timestamp-ordered issue, execute,
in-order commit, with branch squash and a load/store queue.

Scheduling rules that keep committed timing independent of transient
execution (active in "ghostminion" mode):

* issue is strictly oldest-ready-first by timestamp, so younger ops can
  never displace older ones from issue slots or pipelined units;
* non-pipelined units (the divider) issue speculative ops in timestamp
  order: a speculative op may start only once every older live op of the
  same class has started;
* a squash frees non-pipelined units held by squashed ops and cancels
  their in-flight misses, so rollback cost is a constant independent of
  how much transient work was discarded;
* the branch predictor and BTB are trained at commit only.

The committed timeline - (sequence, pc, opcode, per-stage cycles,
architectural result) for every committed instruction - is the
observable over which noninterference is checked.
"""

from collections import deque

from . import isa
from .isa import ALU, MUL, DIV, LOAD, STORE, BRANCH, JMP, RDCYCLE, FENCE, HALT, NOP
from .order import TimestampAllocator

MASK64 = (1 << 64) - 1


def s64(v):
    v &= MASK64
    return v - (1 << 64) if v >= (1 << 63) else v


class DynInstr:
    __slots__ = (
        "seq", "pc", "op", "cls", "dst", "s1", "s2", "imm", "target",
        "ts", "uts", "state", "stage", "dep1", "dep2", "v1", "v2",
        "result", "addr", "line", "pred_taken", "taken", "done_at",
        "origin", "noncoherent", "rename_idx", "akey", "ablated",
        "div_unit", "mem_state", "commit_mem",
    )

    def __init__(self, seq, si, ts, uts):
        self.seq = seq
        self.pc = si.pc
        self.op = si.op
        self.cls = si.cls
        self.dst = si.dst
        self.s1 = si.s1
        self.s2 = si.s2
        self.imm = si.imm
        self.target = si.target
        self.ts = ts
        self.uts = uts
        self.state = "FETQ"       # FETQ ROB EXEC DONE COMMITTED SQUASHED
        self.stage = {}
        self.dep1 = None
        self.dep2 = None
        self.v1 = 0
        self.v2 = 0
        self.result = None
        self.addr = None
        self.line = None
        self.pred_taken = False
        self.taken = False
        self.done_at = None
        self.origin = None
        self.noncoherent = False
        self.rename_idx = None
        self.akey = None
        self.ablated = False
        self.div_unit = None
        self.mem_state = None     # None | "wait" | "retrywait"
        self.commit_mem = None    # store/replay commit progress

    @property
    def committed(self):
        return self.state == "COMMITTED"

    def writes_reg(self):
        return self.cls in (ALU, MUL, DIV, LOAD, RDCYCLE) and self.dst != 0


_DONE_AT_RENAME = (NOP, JMP, FENCE, HALT)


class Core:
    def __init__(self, core_id, program, cfg, mem, machine, ablation=None):
        self.core_id = core_id
        self.program = program
        self.cfg = cfg
        self.mem = mem
        self.machine = machine
        self.ablation = ablation

        self.alloc = TimestampAllocator(window=cfg.window)
        self.regs = [0] * isa.NUM_REGS
        self.rat = {}
        self.rob = deque()
        self.fetchq = deque()
        self.lq_used = 0
        self.sq_used = 0

        self.pc = 0
        self.fetch_stall_until = 0
        self.fetch_done = False
        self.line_buf = None
        self.line_req = None
        self.line_ready_at = None
        self.fetch_retry_wait = False

        self.bp_counters = {}
        self.btb = {}

        self.div_busy = [0] * cfg.div_units

        self.fetch_seq = 0
        self.rename_count = 0
        self.commit_count = 0
        # ablation bookkeeping: dynamic instances are identified by
        # (core, epoch, position-within-epoch), where an epoch is the span
        # between two squashes.  Within an epoch the renamed instruction
        # sequence is deterministic, so the key lines up across the normal
        # and the ablated run even when wrong-path *lengths* differ.
        self.epoch = 0
        self.epoch_pos = 0
        self.fates = {}        # akey -> "committed" | "squashed"
        self.squash_log = {}   # akey of squashing instr -> (cycle, redirect)
        self.timeline = []
        self.halted = False

        self.not_after = machine.not_after
        self.line_mask = ~(cfg.line_bytes - 1)
        # instruction lines live in a per-core region of the physical
        # address space, so two cores' images never alias in the shared L2
        self.code_base = core_id << 32

    def _iline(self, pc):
        return (pc & self.line_mask) + self.code_base

    # ----------------------------------------------------------------- fetch

    def _predict(self, pc):
        ctr = self.bp_counters.get(pc, 1)
        return ctr >= 2 and pc in self.btb

    def do_fetch(self, cycle):
        if self.fetch_done or self.halted or cycle < self.fetch_stall_until:
            return
        cfg = self.cfg
        fetched = 0
        while (fetched < cfg.width and len(self.fetchq) < cfg.fetchq
               and self.alloc.live < cfg.rob):
            raw_line = self.pc & self.line_mask
            line = self._iline(self.pc)
            if self.line_buf != line:
                if self.line_req == line and self.line_ready_at is not None \
                        and cycle >= self.line_ready_at:
                    self.line_buf = line
                    self.line_req = None
                    self.line_ready_at = None
                    continue
                if self.line_req is None and not self.fetch_retry_wait:
                    res = self.mem.ifetch_access(self.core_id, line,
                                                 self.alloc.peek(),
                                                 self.alloc.next_unbounded, cycle)
                    if res[0] == "hit":
                        self.line_req = line
                        self.line_ready_at = res[1]
                    elif res[0] == "pending":
                        self.line_req = line
                        self.line_ready_at = None
                    else:
                        self.fetch_retry_wait = True
                break
            si = self.program.get(self.pc)
            ts, uts = self.alloc.allocate()
            di = DynInstr(self.fetch_seq, si, ts, uts)
            self.fetch_seq += 1
            di.stage["fetch"] = cycle
            self.fetchq.append(di)
            fetched += 1
            if si.cls == BRANCH:
                di.pred_taken = self._predict(si.pc)
                if di.pred_taken:
                    self.pc = si.target
                    break
                self.pc += isa.INSTR_BYTES
            elif si.cls == JMP:
                self.pc = si.target
                break
            elif si.cls == HALT:
                self.fetch_done = True
                break
            else:
                self.pc += isa.INSTR_BYTES
            if self.pc & self.line_mask != raw_line:
                break

    def fetch_line_ready(self, line, cycle):
        if self.line_req == line:
            self.line_buf = line
            self.line_req = None
            self.line_ready_at = None

    def fetch_retry_wake(self):
        self.fetch_retry_wait = False

    # ---------------------------------------------------------------- rename

    def do_rename(self, cycle):
        cfg = self.cfg
        budget = cfg.width
        while budget and self.fetchq:
            di = self.fetchq[0]
            if len(self.rob) >= cfg.rob:
                break
            if di.cls == FENCE and self.rob:
                break
            if di.cls == LOAD and self.lq_used >= cfg.lq:
                break
            if di.cls == STORE and self.sq_used >= cfg.sq:
                break
            self.fetchq.popleft()
            di.rename_idx = self.rename_count
            self.rename_count += 1
            di.akey = (self.core_id, self.epoch, self.epoch_pos)
            self.epoch_pos += 1
            di.stage["rename"] = cycle
            di.state = "ROB"
            if self.ablation is not None \
                    and self.ablation["fates"].get(di.akey, "squashed") == "squashed":
                # transient-ablation: a would-be-squashed op becomes a
                # zero-latency no-op.  It keeps its class so front-end
                # resource accounting (LQ/SQ slots, fence drains) matches
                # the normal run; it never executes.  A branch that caused
                # a squash in the normal run replays that squash verbatim
                # (same cycle, same redirect) to reproduce the wrong-path
                # fetch stream.
                di.ablated = True
                if di.cls == LOAD:
                    self.lq_used += 1
                elif di.cls == STORE:
                    self.sq_used += 1
                event = self.ablation["events"].get(di.akey)
                if di.cls == BRANCH and event is not None:
                    di.state = "EXEC"
                    di.stage["issue"] = cycle
                    di.done_at = event[0]
                else:
                    di.state = "DONE"
                    di.stage["issue"] = cycle
                    di.stage["complete"] = cycle
                self.rob.append(di)
                budget -= 1
                continue
            if di.cls == LOAD:
                self.lq_used += 1
                di.dep1 = self.rat.get(di.s1)
            elif di.cls == STORE:
                self.sq_used += 1
                di.dep1 = self.rat.get(di.s1)
                di.dep2 = self.rat.get(di.s2)
            elif di.cls in (ALU, MUL, DIV, BRANCH):
                di.dep1 = self.rat.get(di.s1)
                di.dep2 = self.rat.get(di.s2)
            if di.cls in _DONE_AT_RENAME:
                di.state = "DONE"
                di.stage["issue"] = cycle
                di.stage["complete"] = cycle
            if di.writes_reg():
                self.rat[di.dst] = di
            self.rob.append(di)
            budget -= 1

    # ----------------------------------------------------------------- issue

    def _ready(self, dep):
        return dep is None or dep.state in ("DONE", "COMMITTED")

    def _val(self, dep, reg):
        if dep is not None:
            return dep.result
        return self.regs[reg]

    def _alu_result(self, di):
        a, b = di.v1, di.v2
        op = di.op
        if op in ("add", "addi"):
            return s64(a + b)
        if op == "sub":
            return s64(a - b)
        if op in ("and", "andi"):
            return s64(a & b)
        if op in ("or", "ori"):
            return s64(a | b)
        if op in ("xor", "xori"):
            return s64(a ^ b)
        if op in ("sll", "slli"):
            return s64(a << (b % 64))
        if op in ("srl", "srli"):
            return s64((a & MASK64) >> (b % 64))
        if op in ("slt", "slti"):
            return 1 if a < b else 0
        raise AssertionError(op)

    def do_issue(self, cycle):
        cfg = self.cfg
        budget = cfg.width
        alu_slots = cfg.alu_units
        mul_slots = cfg.mul_units
        mem_slots = cfg.mem_ports
        inorder_divs = cfg.mode == "ghostminion"
        div_blocked = False
        pending_store = False   # an older store without known address/data
        head = self.rob[0] if self.rob else None

        for di in list(self.rob):
            if budget == 0:
                break
            if di.state != "ROB":
                continue
            if di.cls == STORE:
                if alu_slots and self._ready(di.dep1) and self._ready(di.dep2):
                    di.v1 = self._val(di.dep1, di.s1)
                    di.v2 = self._val(di.dep2, di.s2)
                    di.addr = s64(di.v1 + di.imm) & ~(isa.WORD_BYTES - 1)
                    di.line = di.addr & self.line_mask
                    di.result = di.v2          # value to be written at commit
                    di.state = "EXEC"
                    di.stage["issue"] = cycle
                    di.done_at = cycle + 1
                    alu_slots -= 1
                    budget -= 1
                else:
                    pending_store = True
                continue
            if di.cls == LOAD:
                if di.mem_state == "retrywait":
                    continue
                if not mem_slots or not self._ready(di.dep1):
                    continue
                if pending_store:
                    continue   # conservative: wait for older store addresses
                fwd = self._forward_store(di)
                di.v1 = self._val(di.dep1, di.s1)
                di.addr = s64(di.v1 + di.imm) & ~(isa.WORD_BYTES - 1)
                di.line = di.addr & self.line_mask
                di.stage["issue"] = cycle
                mem_slots -= 1
                budget -= 1
                if fwd is not None:
                    di.result = fwd.result
                    di.origin = "fwd"
                    di.state = "EXEC"
                    di.done_at = cycle + 1
                    continue
                spec = di is not head
                res = self.mem.data_access(self.core_id, di, di.line,
                                           di.ts, di.uts, spec, cycle)
                if res[0] == "hit":
                    di.state = "EXEC"
                    di.done_at = res[1]
                    di.origin = res[2]
                    di.noncoherent = res[3]
                elif res[0] == "pending":
                    di.state = "EXEC"
                    di.mem_state = "wait"
                else:
                    di.mem_state = "retrywait"
                continue
            # register-to-register classes
            if not (self._ready(di.dep1) and self._ready(di.dep2)):
                if di.cls == DIV:
                    div_blocked = True
                continue
            if di.cls == DIV:
                if inorder_divs and div_blocked and di is not head:
                    continue
                unit = next((u for u in range(cfg.div_units)
                             if self.div_busy[u] <= cycle), None)
                if unit is None:
                    div_blocked = True
                    continue
                di.v1 = self._val(di.dep1, di.s1)
                di.v2 = self._val(di.dep2, di.s2)
                if di.v2 == 0:
                    di.result = 0
                else:
                    q = abs(di.v1) // abs(di.v2)
                    di.result = s64(-q if (di.v1 < 0) != (di.v2 < 0) else q)
                di.state = "EXEC"
                di.stage["issue"] = cycle
                di.done_at = cycle + cfg.div_lat
                di.div_unit = unit
                self.div_busy[unit] = cycle + cfg.div_lat
                budget -= 1
                continue
            if di.cls == MUL:
                if not mul_slots:
                    continue
                di.v1 = self._val(di.dep1, di.s1)
                di.v2 = self._val(di.dep2, di.s2)
                di.result = s64(di.v1 * di.v2)
                di.state = "EXEC"
                di.stage["issue"] = cycle
                di.done_at = cycle + cfg.mul_lat
                mul_slots -= 1
                budget -= 1
                continue
            # ALU, BRANCH, RDCYCLE
            if not alu_slots:
                continue
            di.v1 = self._val(di.dep1, di.s1)
            if di.op in isa._ALU_RRI:
                di.v2 = di.imm
            else:
                di.v2 = self._val(di.dep2, di.s2)
            if di.cls == ALU:
                di.result = self._alu_result(di)
            elif di.cls == RDCYCLE:
                di.result = cycle
            di.state = "EXEC"
            di.stage["issue"] = cycle
            di.done_at = cycle + cfg.alu_lat
            alu_slots -= 1
            budget -= 1

    def _forward_store(self, di):
        """Youngest older store to the same word.  Only called once every
        older store has executed, so all addresses and data are known."""
        addr = s64(self._val(di.dep1, di.s1) + di.imm) & ~(isa.WORD_BYTES - 1)
        best = None
        for other in self.rob:
            if other is di:
                break
            if other.cls == STORE and other.state != "SQUASHED" and other.addr == addr:
                best = other
        return best

    # -------------------------------------------------------------- complete

    def do_complete(self, cycle):
        for di in list(self.rob):
            if di.state != "EXEC" or di.done_at is None or di.done_at > cycle:
                continue
            if di.mem_state == "wait":
                continue
            di.state = "DONE"
            di.stage["complete"] = cycle
            if di.ablated:
                # replayed squash from the recorded run (ablated branch)
                cyc, redirect = self.ablation["events"][di.akey]
                self._squash_after(di, cycle, redirect)
                continue
            if di.cls == LOAD and di.origin != "fwd":
                di.result = self.machine.read_word(di.addr)
            if di.cls == BRANCH:
                self._resolve_branch(di, cycle)
                if di.state == "SQUASHED":   # a just-resolved older branch wiped us
                    continue

    def load_complete(self, di, cycle, origin):
        if di.state != "EXEC":
            return   # squashed while the miss was in flight
        di.mem_state = None
        di.result = self.machine.read_word(di.addr)
        di.origin = origin
        di.state = "DONE"
        di.stage["complete"] = cycle

    def load_retry_wake(self, di):
        if di.commit_mem == "retrywait":   # committing store or replay
            di.commit_mem = None
        elif di.state in ("ROB", "EXEC") and di.cls == LOAD:
            di.state = "ROB"
            di.mem_state = None
            di.done_at = None

    def store_write_complete(self, di, cycle):
        if di.state == "DONE":
            di.commit_mem = cycle

    def replay_complete(self, di, cycle):
        if di.state == "DONE":
            di.commit_mem = cycle

    # ---------------------------------------------------------------- branch

    def _branch_taken(self, di):
        a, b = di.v1, di.v2
        return {"beq": a == b, "bne": a != b,
                "blt": a < b, "bge": a >= b}[di.op]

    def _resolve_branch(self, di, cycle):
        di.taken = self._branch_taken(di)
        if di.taken != di.pred_taken:
            self._squash_after(di, cycle,
                               di.target if di.taken else di.pc + isa.INSTR_BYTES)

    def _squash_after(self, di, cycle, redirect_pc):
        """Wipe everything younger than ``di`` and restart fetch at
        ``redirect_pc`` after the fixed penalty."""
        keep = deque()
        for other in self.rob:
            if other.uts <= di.uts:
                keep.append(other)
                continue
            other.state = "SQUASHED"
            if other.akey is not None:
                self.fates.setdefault(other.akey, "squashed")
            if other.cls == LOAD:
                self.lq_used -= 1
            elif other.cls == STORE:
                self.sq_used -= 1
            if other.div_unit is not None and self.cfg.mode == "ghostminion" \
                    and self.div_busy[other.div_unit] > cycle:
                self.div_busy[other.div_unit] = cycle
        self.rob = keep
        self.epoch += 1
        self.epoch_pos = 0
        self.squash_log[di.akey] = (cycle, redirect_pc)
        self.fetchq.clear()
        self.alloc.rewind(di.ts, di.uts, len(self.rob))
        self.mem.squash_flush(self.core_id, di.ts, di.uts, cycle)
        self.rat = {}
        for other in self.rob:
            if other.writes_reg():
                self.rat[other.dst] = other
        self.pc = redirect_pc
        self.fetch_stall_until = cycle + self.cfg.squash_penalty
        self.fetch_done = False
        self.line_buf = None
        self.line_req = None
        self.line_ready_at = None
        self.fetch_retry_wait = False

    # ---------------------------------------------------------------- commit

    def do_commit(self, cycle):
        cfg = self.cfg
        commits = 0
        while commits < cfg.width and self.rob and not self.halted:
            di = self.rob[0]
            if di.state != "DONE":
                break
            if di.cls == STORE and not di.ablated:
                if di.commit_mem is None:
                    self.machine.write_word(di.addr, di.result)
                    res = self.mem.store_access(self.core_id, di, di.line, cycle)
                    if res[0] == "hit":
                        di.commit_mem = res[1]
                    else:
                        di.commit_mem = ("wait" if res[0] == "pending"
                                         else "retrywait")
                if not isinstance(di.commit_mem, int) or cycle < di.commit_mem:
                    break
            if di.cls == LOAD and di.noncoherent and not di.ablated:
                if di.commit_mem is None:
                    res = self.mem.replay_access(self.core_id, di, di.line, cycle)
                    di.commit_mem = (res[1] if res[0] == "hit"
                                     else "wait" if res[0] == "pending"
                                     else "retrywait")
                if not isinstance(di.commit_mem, int) or cycle < di.commit_mem:
                    break
                fresh = self.machine.read_word(di.addr)
                if fresh != di.result:
                    # the forwarded value went stale: re-execute with the
                    # fresh value and restart everything younger
                    di.result = fresh
                    self._squash_after(di, cycle, di.pc + isa.INSTR_BYTES)
            self._commit_one(di, cycle)
            commits += 1

    def _commit_one(self, di, cycle):
        di.state = "COMMITTED"
        di.stage["commit"] = cycle
        self.fates[di.akey] = "committed"
        if not di.ablated:
            self.mem.commit_extract(self.core_id, "i", self._iline(di.pc),
                                    di.ts, di.uts, cycle)
            if di.cls == LOAD:
                if not di.noncoherent:
                    self.mem.commit_extract(self.core_id, "d", di.line,
                                            di.ts, di.uts, cycle)
                if di.origin not in (None, "fwd"):
                    self.mem.prefetch_notify(di.pc, di.line, di.origin, cycle)
            elif di.cls == BRANCH:
                ctr = self.bp_counters.get(di.pc, 1)
                self.bp_counters[di.pc] = min(ctr + 1, 3) if di.taken else max(ctr - 1, 0)
                if di.taken:
                    self.btb[di.pc] = di.target
        if di.writes_reg():
            self.regs[di.dst] = di.result
            if self.rat.get(di.dst) is di:
                del self.rat[di.dst]
        if di.cls == LOAD:
            self.lq_used -= 1
        elif di.cls == STORE:
            self.sq_used -= 1
        stages = (di.stage.get("fetch", -1), di.stage.get("rename", -1),
                  di.stage.get("issue", -1), di.stage.get("complete", -1), cycle)
        result = di.result if (di.writes_reg() or di.cls == STORE) else None
        self.timeline.append((self.commit_count, di.pc, di.op, stages, result))
        self.commit_count += 1
        self.alloc.retire(1)
        self.rob.popleft()
        if di.cls == HALT:
            self.halted = True
