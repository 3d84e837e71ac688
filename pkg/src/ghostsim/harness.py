"""Run drivers: single runs, differential leak checks, transient-ablation
equivalence checks, and the random-program fuzzer.

The central claim these drivers test is timing noninterference: a secret
touched only by squashed instructions must leave no trace in the
committed timeline.  All comparisons are bitwise — two runs either
produce identical committed timelines (every stage cycle and every
architectural value) or they do not; there is no statistical
thresholding.
"""

import csv
import hashlib
import json
import random
from dataclasses import dataclass, field, replace

from .config import RunConfig
from .isa import load_program
from .machine import Machine
from .memory import COUNTER_KEYS

SCHEMA = 1


@dataclass
class Report:
    """Summary of one simulation run."""

    schema: int
    mode: str
    cycles: int
    commits: int
    ipc: float
    digest: str                      # stable hash of all committed timelines
    counters: dict = field(default_factory=dict)

    def to_text(self):
        doc = {
            "schema": self.schema,
            "mode": self.mode,
            "cycles": self.cycles,
            "commits": self.commits,
            "ipc": round(self.ipc, 4),
            "digest": self.digest,
            "counters": self.counters,
        }
        return json.dumps(doc, indent=2)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["counter", "value"])
            w.writerow(["cycles", self.cycles])
            w.writerow(["commits", self.commits])
            for k in COUNTER_KEYS:
                w.writerow([k, self.counters.get(k, 0)])


def timeline_digest(machine):
    h = hashlib.sha256()
    for core in machine.cores:
        h.update(repr(core.timeline).encode())
        h.update(b"\x00")
    return h.hexdigest()


def _make_machine(programs, cfg, ablation=None):
    progs = [load_program(p) if isinstance(p, str) else p for p in programs]
    return Machine(progs, cfg, ablation)


def run(programs, cfg: RunConfig, max_cycles=None):
    """Simulate to HALT and return (machine, Report)."""
    m = _make_machine(programs, cfg)
    cycles = m.run(max_cycles)
    commits = sum(c.commit_count for c in m.cores)
    rep = Report(SCHEMA, cfg.mode, cycles, commits,
                 commits / cycles if cycles else 0.0,
                 timeline_digest(m), dict(m.mem.counters))
    return m, rep


def _first_divergence(cores_a, cores_b):
    """Locate the first committed instruction that differs between two
    runs, as (core, commit index, entry_a, entry_b)."""
    for cid, (a, b) in enumerate(zip(cores_a, cores_b)):
        for i, (ea, eb) in enumerate(zip(a.timeline, b.timeline)):
            if ea != eb:
                return (cid, i, ea, eb)
        if len(a.timeline) != len(b.timeline):
            i = min(len(a.timeline), len(b.timeline))
            return (cid, i,
                    a.timeline[i] if i < len(a.timeline) else None,
                    b.timeline[i] if i < len(b.timeline) else None)
    return None


@dataclass
class DiffResult:
    verdict: str                 # "SAFE" | "LEAKS" | "ERROR"
    secrets: tuple
    divergence: object = None    # (secret, core, index, entry_a, entry_b)
    detail: str = ""


def run_differential(gadget, cfg: RunConfig, max_cycles=None):
    """Run a gadget once per secret value and compare committed timelines.

    LEAKS if any two timelines differ in any stage cycle or value; SAFE
    if all are bitwise identical.  If the committed *instruction streams*
    differ structurally (sequence of pc/op), the gadget itself is
    secret-dependent and the comparison is meaningless: verdict ERROR.
    """
    if gadget.cfg_overrides:
        cfg = replace(cfg, **gadget.cfg_overrides)
    secrets = tuple(gadget.secrets)
    baseline = None
    base_secret = None
    for s in secrets:
        m = _make_machine(gadget.programs(s), cfg)
        m.run(max_cycles)
        if baseline is None:
            baseline, base_secret = m, s
            continue
        # structural check: the committed (pc, op) stream must match
        for a, b in zip(baseline.cores, m.cores):
            sa = [(e[1], e[2]) for e in a.timeline]
            sb = [(e[1], e[2]) for e in b.timeline]
            if sa != sb:
                return DiffResult(
                    "ERROR", secrets,
                    detail=f"committed instruction streams differ "
                           f"structurally between secrets {base_secret} "
                           f"and {s} on core {a.core_id}")
        div = _first_divergence(baseline.cores, m.cores)
        if div is not None:
            cid, idx, ea, eb = div
            return DiffResult(
                "LEAKS", secrets, (s, cid, idx, ea, eb),
                detail=f"secret {base_secret} vs {s}: core {cid} commit "
                       f"#{idx} differs: {ea} != {eb}")
    return DiffResult("SAFE", secrets)


@dataclass
class AblationResult:
    verdict: str                 # "PASS" | "FAIL"
    divergence: object = None    # (core, index, entry_normal, entry_ablated)
    detail: str = ""
    pure: bool = True            # cache + prefetcher state identical at HALT


def run_ablation(programs, cfg: RunConfig, max_cycles=None):
    """Run normally, then re-run with every would-be-squashed instruction
    replaced at rename by a zero-latency no-op (fates taken from the
    first run).  PASS iff the committed timelines are identical — i.e.
    squashed work contributed nothing to committed timing.
    """
    m1 = _make_machine(programs, cfg)
    m1.run(max_cycles)
    fates, events = {}, {}
    for c in m1.cores:
        fates.update(c.fates)
        events.update(c.squash_log)
    m2 = _make_machine(programs, cfg,
                       ablation={"fates": fates, "events": events})
    m2.run(max_cycles)
    pure = (m1.mem.nonspec_state() == m2.mem.nonspec_state()
            and m1.mem.rpt_state() == m2.mem.rpt_state())
    div = _first_divergence(m1.cores, m2.cores)
    if div is not None:
        cid, idx, ea, eb = div
        return AblationResult(
            "FAIL", div, pure=pure,
            detail=f"core {cid} commit #{idx} differs between normal and "
                   f"ablated run: {ea} != {eb}")
    return AblationResult("PASS", pure=pure)


# ------------------------------------------------------------------ fuzzer

FUZZ_BASE = 0x1000       # small data region: 128 words / 16 lines
FUZZ_MASK = 0x3F8


def _gen_program(rng):
    """One random well-formed program: straight-line ALU work, loads and
    stores over a small address region, DIVs, forward branches on
    data-dependent conditions (a rich source of mispredictions), and a
    bounded loop.  Always halts."""
    lines = []
    for i in range(rng.randrange(4, 12)):
        lines.append(f".word {FUZZ_BASE + 8 * rng.randrange(128)} "
                     f"{rng.randrange(256)}")
    for r in range(1, 8):
        lines.append(f"li r{r}, {rng.randrange(64)}")
    label = 0
    for _ in range(rng.randrange(4, 14)):
        kind = rng.randrange(10)
        rd = rng.randrange(1, 8)
        ra = rng.randrange(1, 8)
        rb = rng.randrange(1, 8)
        if kind < 3:
            op = rng.choice(["add", "sub", "xor", "or", "and", "sll", "srl"])
            lines.append(f"{op} r{rd}, r{ra}, r{rb}")
        elif kind < 5:        # load from the data region
            lines.append(f"andi r{rd}, r{ra}, {FUZZ_MASK}")
            lines.append(f"ld r{rd}, r{rd}, {FUZZ_BASE}")
        elif kind == 5:       # store into the data region
            lines.append(f"andi r{rd}, r{ra}, {FUZZ_MASK}")
            lines.append(f"st r{rb}, r{rd}, {FUZZ_BASE}")
        elif kind == 6:
            lines.append(f"div r{rd}, r{ra}, r{rb}")
        elif kind == 7:
            lines.append(f"mul r{rd}, r{ra}, r{rb}")
        else:                 # forward branch over a small body
            cond = rng.choice(["beq", "bne", "blt", "bge"])
            lines.append(f"{cond} r{ra}, r{rb}, skip{label}")
            for _ in range(rng.randrange(1, 4)):
                rc = rng.randrange(1, 8)
                if rng.randrange(2):
                    lines.append(f"andi r{rc}, r{rb}, {FUZZ_MASK}")
                    lines.append(f"ld r{rc}, r{rc}, {FUZZ_BASE}")
                else:
                    lines.append(f"addi r{rc}, r{rc}, {rng.randrange(8)}")
            lines.append(f"skip{label}:")
            label += 1
    # one bounded loop with a load in the body: its exit branch
    # mispredicts once trained, giving a late transient window
    n = rng.randrange(2, 6)
    lines += [
        f"li r8, {n}",
        "loop:",
        f"andi r9, r8, {FUZZ_MASK}",
        f"ld r9, r9, {FUZZ_BASE}",
        "add r1, r1, r9",
        "addi r8, r8, -1",
        "bne r8, r0, loop",
        "halt",
    ]
    return "\n".join(lines) + "\n"


def fuzz_programs(count, cfg: RunConfig, seed=0, max_cycles=None):
    """Generate ``count`` seeded random programs and run the ablation
    check on each.  Returns (passes, fails, first_failure) where
    first_failure is (index, program_text, AblationResult) or None."""
    rng = random.Random(seed)
    passes = fails = 0
    first_failure = None
    for i in range(count):
        text = _gen_program(rng)
        res = run_ablation([text], cfg, max_cycles)
        if res.verdict == "PASS":
            passes += 1
        else:
            fails += 1
            if first_failure is None:
                first_failure = (i, text, res)
    return passes, fails, first_failure
