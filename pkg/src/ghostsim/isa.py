"""A minimal 16-register load/store ISA and its two-pass assembler.

The machine is word-oriented: 64-bit registers, 8-byte memory words,
4-byte instruction slots.  This is the smallest ISA that can express the
leak-gadget families the harness needs: indirect loads, divider
pressure, cycle-counter reads, and (mis)predictable branches.

Text format, one instruction per line::

    op dst, src1, src2|imm     # comment
    name:                      # label
    .word addr value           # data directive
    .align n                   # pad code with nops to an n-byte boundary
"""

from dataclasses import dataclass, field

NUM_REGS = 16
INSTR_BYTES = 4
WORD_BYTES = 8

# instruction classes
ALU = "ALU"
MUL = "MUL"
DIV = "DIV"
LOAD = "LOAD"
STORE = "STORE"
BRANCH = "BRANCH"
JMP = "JMP"
RDCYCLE = "RDCYCLE"
FENCE = "FENCE"
HALT = "HALT"
NOP = "NOP"


class ParseError(Exception):
    pass


@dataclass(frozen=True)
class StaticInstr:
    pc: int
    op: str
    cls: str
    dst: int = 0
    s1: int = 0
    s2: int = 0
    imm: int = 0
    target: int = 0  # branch/jump target address
    line: int = 0    # source line, for diagnostics


@dataclass
class Program:
    instrs: list = field(default_factory=list)
    data: dict = field(default_factory=dict)   # word address -> value
    labels: dict = field(default_factory=dict)

    _nop_cache: dict = field(default_factory=dict, repr=False)

    def get(self, pc: int):
        """Decoded instruction at ``pc``; wrong-path fetches of addresses
        outside the image decode as no-ops."""
        idx = pc // INSTR_BYTES
        if 0 <= idx < len(self.instrs):
            return self.instrs[idx]
        if pc not in self._nop_cache:
            self._nop_cache[pc] = StaticInstr(pc=pc, op="nop", cls=NOP)
        return self._nop_cache[pc]

    @property
    def end_pc(self) -> int:
        return len(self.instrs) * INSTR_BYTES


_ALU_RRR = {"add", "sub", "and", "or", "xor", "sll", "srl", "slt"}
_ALU_RRI = {"addi", "andi", "ori", "xori", "slli", "srli", "slti"}
_BRANCHES = {"beq", "bne", "blt", "bge"}


def _reg(tok: str, lineno: int) -> int:
    tok = tok.strip()
    if not tok.startswith("r"):
        raise ParseError(f"line {lineno}: expected register, got {tok!r}")
    try:
        n = int(tok[1:])
    except ValueError:
        raise ParseError(f"line {lineno}: bad register {tok!r}")
    if not 0 <= n < NUM_REGS:
        raise ParseError(f"line {lineno}: register {tok!r} out of range")
    return n


def _imm(tok: str, lineno: int) -> int:
    try:
        return int(tok.strip(), 0)
    except ValueError:
        raise ParseError(f"line {lineno}: bad immediate {tok!r}")


def load_program(text: str) -> Program:
    """Assemble ``text`` into a program image.

    Raises ParseError (with source line numbers) for malformed lines,
    unknown opcodes/registers, and undefined labels.
    """
    # pass 1: strip comments, collect labels and raw statements
    stmts = []       # (lineno, op, [operand tokens])
    labels = {}
    data = {}
    pc = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        while ":" in line:
            label, _, line = line.partition(":")
            label = label.strip()
            if not label.isidentifier():
                raise ParseError(f"line {lineno}: bad label {label!r}")
            labels[label] = pc
            line = line.strip()
        if not line:
            continue
        parts = line.split(None, 1)
        op = parts[0].lower()
        args = [a.strip() for a in parts[1].split(",")] if len(parts) > 1 else []
        if op == ".word":
            toks = parts[1].split() if len(parts) > 1 else []
            if len(toks) != 2:
                raise ParseError(f"line {lineno}: .word needs address and value")
            addr, val = _imm(toks[0], lineno), _imm(toks[1], lineno)
            if addr < 0 or addr % WORD_BYTES:
                raise ParseError(f"line {lineno}: .word address must be {WORD_BYTES}-byte aligned")
            data[addr] = val
            continue
        if op == ".align":
            n = _imm(parts[1], lineno) if len(parts) > 1 else 0
            if n <= 0 or n % INSTR_BYTES:
                raise ParseError(f"line {lineno}: bad alignment {parts[1] if len(parts) > 1 else ''!r}")
            while pc % n:
                stmts.append((lineno, "nop", []))
                pc += INSTR_BYTES
            continue
        stmts.append((lineno, op, args))
        pc += INSTR_BYTES

    # pass 2: encode
    def target(tok, lineno):
        tok = tok.strip()
        if tok in labels:
            return labels[tok]
        return _imm(tok, lineno)

    instrs = []
    pc = 0
    for lineno, op, args in stmts:
        def need(n):
            if len(args) != n:
                raise ParseError(f"line {lineno}: {op} expects {n} operands")
        if op in _ALU_RRR:
            need(3)
            si = StaticInstr(pc, op, ALU, _reg(args[0], lineno), _reg(args[1], lineno),
                             _reg(args[2], lineno))
        elif op in _ALU_RRI:
            need(3)
            si = StaticInstr(pc, op, ALU, _reg(args[0], lineno), _reg(args[1], lineno),
                             imm=_imm(args[2], lineno))
        elif op == "li":
            need(2)
            si = StaticInstr(pc, "addi", ALU, _reg(args[0], lineno), 0,
                             imm=_imm(args[1], lineno))
        elif op == "mv":
            need(2)
            si = StaticInstr(pc, "add", ALU, _reg(args[0], lineno), _reg(args[1], lineno), 0)
        elif op == "mul":
            need(3)
            si = StaticInstr(pc, op, MUL, _reg(args[0], lineno), _reg(args[1], lineno),
                             _reg(args[2], lineno))
        elif op == "div":
            need(3)
            si = StaticInstr(pc, op, DIV, _reg(args[0], lineno), _reg(args[1], lineno),
                             _reg(args[2], lineno))
        elif op == "ld":
            need(3)
            si = StaticInstr(pc, op, LOAD, _reg(args[0], lineno), _reg(args[1], lineno),
                             imm=_imm(args[2], lineno))
        elif op == "st":
            need(3)
            # st rs2, rs1, imm : mem[rs1+imm] <- rs2
            si = StaticInstr(pc, op, STORE, 0, _reg(args[1], lineno), _reg(args[0], lineno),
                             imm=_imm(args[2], lineno))
        elif op in _BRANCHES:
            need(3)
            si = StaticInstr(pc, op, BRANCH, 0, _reg(args[0], lineno), _reg(args[1], lineno),
                             target=target(args[2], lineno))
        elif op == "jmp":
            need(1)
            si = StaticInstr(pc, op, JMP, target=target(args[0], lineno))
        elif op == "rdcycle":
            need(1)
            si = StaticInstr(pc, op, RDCYCLE, _reg(args[0], lineno))
        elif op == "fence":
            si = StaticInstr(pc, op, FENCE)
        elif op == "halt":
            si = StaticInstr(pc, op, HALT)
        elif op == "nop":
            si = StaticInstr(pc, op, NOP)
        else:
            raise ParseError(f"line {lineno}: unknown opcode {op!r}")
        si = StaticInstr(si.pc, si.op, si.cls, si.dst, si.s1, si.s2, si.imm, si.target, lineno)
        instrs.append(si)
        pc += INSTR_BYTES

    for si in instrs:
        if si.cls in (BRANCH, JMP) and si.target % INSTR_BYTES:
            raise ParseError(f"line {si.line}: misaligned branch target {si.target:#x}")
    return Program(instrs=instrs, data=data, labels=labels)
