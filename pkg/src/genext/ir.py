"""
Subject-language IR: programs made of basic blocks over sixteen 64-bit
registers and a word-addressed memory divided into named regions.

The same representation is used for residual programs, so one interpreter
runs both sides of an equivalence check.
"""

from __future__ import annotations

import bisect
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import Protocol

import numpy as np

from genext.errors import FuelExhausted, InputError, MachineFault, ParseError

logger = logging.getLogger(__name__)

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1
NUM_REGISTERS = 16
REGISTERS = tuple(f"r{i}" for i in range(NUM_REGISTERS))
DEFAULT_PAGE_WORDS = 512
DEFAULT_MAX_PAGES = 2**20


class Opcode(StrEnum):
    CONST = "const"
    MOV = "mov"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    XOR = "xor"
    AND = "and"
    OR = "or"
    SHL = "shl"
    SHR = "shr"
    LOAD = "load"
    STORE = "store"
    OUT = "out"
    JMP = "jmp"
    JZ = "jz"
    HALT = "halt"


ARITHMETIC = frozenset(
    {Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.XOR, Opcode.AND, Opcode.OR, Opcode.SHL, Opcode.SHR}
)
TERMINATORS = frozenset({Opcode.JMP, Opcode.JZ, Opcode.HALT})
OBSERVABLE = frozenset({Opcode.OUT, Opcode.HALT})


class RegionClass(StrEnum):
    SUPPLIED = "supplied"
    DELAYED = "delayed"
    SCRATCH = "scratch"


class BindingTime(StrEnum):
    SUPPLIED = "supplied"
    DELAYED = "delayed"


def reg_index(name: str) -> int:
    return int(name[1:])


def is_register(name: object) -> bool:
    return isinstance(name, str) and name in REGISTERS


@dataclass(frozen=True)
class Region:
    name: str
    words: int
    cls: RegionClass
    base: int

    @property
    def end(self) -> int:
        return self.base + self.words

    def contains(self, address: int) -> bool:
        return self.base <= address < self.end


@dataclass(frozen=True)
class InputBinding:
    target: str
    cls: BindingTime
    points_to: str | None = None

    @property
    def is_register(self) -> bool:
        return is_register(self.target)


@dataclass(frozen=True)
class Address:
    base: str
    offset: int = 0

    def __str__(self) -> str:
        if self.offset < 0:
            return f"[{self.base}-{-self.offset}]"
        return f"[{self.base}+{self.offset}]"


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    dest: str | None = None
    src: str | int | None = None
    addr: Address | None = None
    targets: tuple[str, ...] = ()
    symbol: str | None = field(default=None, compare=False)
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def is_observable(self) -> bool:
        return self.opcode in OBSERVABLE

    def defs(self) -> tuple[str, ...]:
        """Registers written by this instruction."""
        if self.dest is not None and self.opcode not in (Opcode.STORE, Opcode.OUT, Opcode.JZ):
            return (self.dest,)
        return ()

    def uses(self) -> tuple[str, ...]:
        """Registers read by this instruction (halt reads r0, the exit value)."""
        op = self.opcode
        used: list[str] = []
        if op in ARITHMETIC:
            used.append(self.dest)
        if op in ARITHMETIC or op in (Opcode.MOV, Opcode.STORE, Opcode.OUT, Opcode.JZ):
            if is_register(self.src):
                used.append(self.src)
        if self.addr is not None:
            used.append(self.addr.base)
        if op is Opcode.HALT:
            used.append("r0")
        return tuple(dict.fromkeys(used))

    def __str__(self) -> str:
        return format_instruction(self)


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]

    @property
    def terminator(self) -> Instruction | None:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    @property
    def body(self) -> tuple[Instruction, ...]:
        if self.terminator is not None:
            return self.instructions[:-1]
        return self.instructions


@dataclass(frozen=True)
class Program:
    name: str
    regions: tuple[Region, ...]
    blocks: tuple[BasicBlock, ...]
    entry: str
    input_spec: tuple[InputBinding, ...] = ()
    page_words: int = DEFAULT_PAGE_WORDS

    def block(self, label: str) -> BasicBlock:
        for block in self.blocks:
            if block.label == label:
                return block
        raise KeyError(label)

    def region(self, name: str) -> Region:
        for region in self.regions:
            if region.name == name:
                return region
        raise KeyError(name)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.blocks)

    @property
    def address_space_words(self) -> int:
        return max((r.end for r in self.regions), default=0)

    @property
    def page_count(self) -> int:
        return -(-self.address_space_words // self.page_words)

    @cached_property
    def _regions_by_base(self) -> tuple[tuple[Region, ...], list[int]]:
        ordered = tuple(sorted(self.regions, key=lambda r: r.base))
        return ordered, [r.base for r in ordered]

    def region_at(self, address: int) -> Region | None:
        ordered, bases = self._regions_by_base
        i = bisect.bisect_right(bases, address) - 1
        if i >= 0 and ordered[i].contains(address):
            return ordered[i]
        return None

    def binding(self, target: str) -> InputBinding | None:
        for binding in self.input_spec:
            if binding.target == target:
                return binding
        return None

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)


@dataclass
class InputAssignment:
    """Values for bound registers and regions; region values are zero-padded."""

    registers: dict[str, int] = field(default_factory=dict)
    regions: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def merge(self, other: InputAssignment) -> InputAssignment:
        overlap = (self.registers.keys() & other.registers.keys()) | (
            self.regions.keys() & other.regions.keys()
        )
        if overlap:
            raise InputError(f"targets bound twice: {', '.join(sorted(overlap))}")
        return InputAssignment(
            registers={**self.registers, **other.registers},
            regions={**self.regions, **other.regions},
        )

    def targets(self) -> set[str]:
        return set(self.registers) | set(self.regions)


OutputTape = tuple[int, ...]


@dataclass(frozen=True)
class RunResult:
    tape: OutputTape
    r0: int
    steps: int


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_ADDR_RE = re.compile(rf"^\[\s*({_IDENT})\s*(?:([+-])\s*(\S+?))?\s*\]$")
_REGION_RE = re.compile(rf"^region\s+({_IDENT})\s+(\w+)\s+words\s*=\s*(\S+)$")


def _strip_comment(line: str) -> str:
    in_char = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_char = not in_char
        elif ch == "#" and not in_char:
            return line[:i]
    return line


def parse_int(text: str) -> int:
    """Parse a decimal, hex or character-literal immediate, wrapped to 64 bits."""
    text = text.strip()
    if len(text) == 3 and text[0] == text[2] == "'":
        return ord(text[1])
    return int(text, 0) & WORD_MASK


def _split_operands(rest: str, offset: int) -> list[tuple[str, int]]:
    operands: list[tuple[str, int]] = []
    start = 0
    depth = 0
    in_char = False
    for i, ch in enumerate(rest + ","):
        if ch == "'":
            in_char = not in_char
        elif in_char:
            continue
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0:
            token = rest[start:i]
            stripped = token.strip()
            column = offset + start + (len(token) - len(token.lstrip())) + 1
            if stripped:
                operands.append((stripped, column))
            start = i + 1
    return operands


class _Parser:
    def __init__(self, text: str, page_words: int, max_pages: int) -> None:
        self.lines = text.splitlines()
        self.page_words = page_words
        self.max_pages = max_pages
        self.regions: dict[str, Region] = {}

    def error(self, message: str, line: int, column: int = 1) -> ParseError:
        return ParseError(message, line, column)

    def _declare_regions(self) -> None:
        next_base = 0
        for lineno, raw in enumerate(self.lines, start=1):
            line = _strip_comment(raw).strip()
            if not line.startswith("region"):
                continue
            m = _REGION_RE.match(line)
            if not m:
                raise self.error(f"malformed region declaration '{line}'", lineno)
            name, cls_text, words_text = m.groups()
            if name in self.regions:
                raise self.error(f"duplicate region {name}", lineno, raw.find(name) + 1)
            try:
                cls = RegionClass(cls_text)
            except ValueError:
                raise self.error(f"unknown region class '{cls_text}'", lineno, raw.find(cls_text) + 1)
            try:
                words = int(words_text, 0)
            except ValueError:
                raise self.error(f"bad word count '{words_text}'", lineno, raw.find(words_text) + 1)
            if words < 1:
                raise self.error(f"region {name} must hold at least one word", lineno)
            region = Region(name=name, words=words, cls=cls, base=next_base)
            pages = -(-region.end // self.page_words)
            if pages > self.max_pages:
                raise self.error(
                    f"region {name} overflows the address space ({pages} > {self.max_pages} pages)",
                    lineno,
                )
            self.regions[name] = region
            next_base = pages * self.page_words

    def immediate(self, token: str, line: int, column: int) -> tuple[int, str | None]:
        if token.startswith("&"):
            name = token[1:]
            if name not in self.regions:
                raise self.error(f"unknown region {name}", line, column)
            return self.regions[name].base, token
        try:
            return parse_int(token), None
        except ValueError:
            raise self.error(f"bad immediate '{token}'", line, column)

    def register(self, token: str, line: int, column: int) -> str:
        if not is_register(token):
            raise self.error(f"expected a register, got '{token}'", line, column)
        return token

    def value(self, token: str, line: int, column: int) -> tuple[str | int, str | None]:
        if is_register(token):
            return token, None
        return self.immediate(token, line, column)

    def address(self, token: str, line: int, column: int) -> Address:
        m = _ADDR_RE.match(token)
        if not m:
            raise self.error(f"malformed address '{token}'", line, column)
        base, sign, offset_text = m.groups()
        self.register(base, line, column)
        offset = 0
        if offset_text is not None:
            try:
                offset = int(offset_text, 0)
            except ValueError:
                raise self.error(f"bad address offset '{offset_text}'", line, column)
            if sign == "-":
                offset = -offset
        return Address(base, offset)

    def label(self, token: str, line: int, column: int) -> str:
        if not _IDENT_RE.match(token):
            raise self.error(f"bad label '{token}'", line, column)
        return token

    def instruction(self, text: str, line: int, column: int) -> Instruction:
        head, *tail = text.split(None, 1)
        rest = tail[0] if tail else ""
        try:
            op = Opcode(head)
        except ValueError:
            raise self.error(f"unknown opcode '{head}'", line, column)
        operands = _split_operands(rest, column - 1 + (text.index(rest) if rest else len(text)))
        arity = {
            Opcode.OUT: 1, Opcode.JMP: 1, Opcode.JZ: 3, Opcode.HALT: 0,
        }.get(op, 2)
        if len(operands) != arity:
            raise self.error(
                f"'{op}' takes {arity} operand{'s' if arity != 1 else ''}, got {len(operands)}",
                line,
                column,
            )
        kw: dict = {"opcode": op, "line": line, "column": column}
        if op is Opcode.CONST:
            kw["dest"] = self.register(operands[0][0], line, operands[0][1])
            kw["src"], kw["symbol"] = self.immediate(operands[1][0], line, operands[1][1])
        elif op is Opcode.MOV or op in ARITHMETIC:
            kw["dest"] = self.register(operands[0][0], line, operands[0][1])
            kw["src"], kw["symbol"] = self.value(operands[1][0], line, operands[1][1])
        elif op is Opcode.LOAD:
            kw["dest"] = self.register(operands[0][0], line, operands[0][1])
            kw["addr"] = self.address(operands[1][0], line, operands[1][1])
        elif op is Opcode.STORE:
            kw["addr"] = self.address(operands[0][0], line, operands[0][1])
            kw["src"] = self.register(operands[1][0], line, operands[1][1])
        elif op is Opcode.OUT:
            kw["src"] = self.register(operands[0][0], line, operands[0][1])
        elif op is Opcode.JMP:
            kw["targets"] = (self.label(operands[0][0], line, operands[0][1]),)
        elif op is Opcode.JZ:
            kw["src"] = self.register(operands[0][0], line, operands[0][1])
            kw["targets"] = tuple(self.label(tok, line, col) for tok, col in operands[1:])
        return Instruction(**kw)

    def parse(self) -> tuple[Program, dict[tuple[str, int], tuple[int, int]], dict[str, int]]:
        self._declare_regions()
        name: str | None = None
        entry: str | None = None
        bindings: list[InputBinding] = []
        blocks: list[tuple[str, list[Instruction]]] = []
        block_lines: dict[str, int] = {}
        positions: dict[tuple[str, int], tuple[int, int]] = {}

        for lineno, raw in enumerate(self.lines, start=1):
            stripped = _strip_comment(raw).rstrip()
            line = stripped.strip()
            if not line:
                continue
            column = len(stripped) - len(stripped.lstrip()) + 1
            keyword = line.split()[0]
            if keyword == "program":
                parts = line.split()
                if len(parts) != 2 or not _IDENT_RE.match(parts[1]):
                    raise self.error("expected 'program <name>'", lineno, column)
                if name is not None:
                    raise self.error("program name declared twice", lineno, column)
                name = parts[1]
            elif keyword == "region":
                continue
            elif keyword == "input":
                parts = line.split()
                if len(parts) not in (3, 4):
                    raise self.error("expected 'input <target> <supplied|delayed> [&region]'", lineno, column)
                try:
                    cls = BindingTime(parts[2])
                except ValueError:
                    raise self.error(f"unknown binding class '{parts[2]}'", lineno, raw.find(parts[2]) + 1)
                points_to = None
                if len(parts) == 4:
                    if not parts[3].startswith("&"):
                        raise self.error(f"expected '&region', got '{parts[3]}'", lineno, raw.find(parts[3]) + 1)
                    points_to = parts[3][1:]
                bindings.append(InputBinding(parts[1], cls, points_to))
            elif keyword == "entry":
                parts = line.split()
                if len(parts) != 2:
                    raise self.error("expected 'entry <label>'", lineno, column)
                entry = self.label(parts[1], lineno, column)
            elif keyword == "block":
                m = re.match(rf"^block\s+({_IDENT})\s*:$", line)
                if not m:
                    raise self.error("expected 'block <label>:'", lineno, column)
                label = m.group(1)
                if label in block_lines:
                    raise self.error(f"duplicate label {label}", lineno, raw.find(label) + 1)
                block_lines[label] = lineno
                blocks.append((label, []))
            else:
                if not blocks:
                    raise self.error("instruction outside of a block", lineno, column)
                label, instructions = blocks[-1]
                if instructions and instructions[-1].is_terminator:
                    raise self.error(f"instruction after terminator in block {label}", lineno, column)
                instr = self.instruction(line, lineno, column)
                positions[(label, len(instructions))] = (lineno, column)
                instructions.append(instr)

        if name is None:
            raise self.error("missing 'program <name>' header", 1)
        if not blocks:
            raise self.error("program has no blocks", len(self.lines) or 1)

        program = Program(
            name=name,
            regions=tuple(self.regions.values()),
            blocks=tuple(BasicBlock(label, tuple(instrs)) for label, instrs in blocks),
            entry=entry or blocks[0][0],
            input_spec=tuple(bindings),
            page_words=self.page_words,
        )
        return program, positions, block_lines


_DIAG_SITE_RE = re.compile(rf"^block ({_IDENT})\[(\d+)\]")
_DIAG_BLOCK_RE = re.compile(rf"^block ({_IDENT}):")


def parse_program(
    text: str,
    page_words: int = DEFAULT_PAGE_WORDS,
    *,
    check: bool = True,
    max_pages: int = DEFAULT_MAX_PAGES,
) -> Program:
    """
    Parse IR text into a Program.

    Args:
        text: Program source in the line-oriented IR format.
        page_words: Words per page; region bases are aligned to it.
        check: Run validate() and raise the first diagnostic as a ParseError.
        max_pages: Largest address space accepted, in pages.

    Returns:
        The parsed program.
    """
    program, positions, block_lines = _Parser(text, page_words, max_pages).parse()
    if check:
        diagnostics = validate(program)
        if diagnostics:
            first = diagnostics[0]
            line, column = 1, 1
            if m := _DIAG_SITE_RE.match(first):
                line, column = positions.get((m.group(1), int(m.group(2))), (1, 1))
            elif m := _DIAG_BLOCK_RE.match(first):
                line = block_lines.get(m.group(1), 1)
            raise ParseError(first, line, column)
    return program


_OPERAND_SHAPES: dict[Opcode, tuple[bool, bool, bool, int]] = {
    # dest, src, addr, targets
    Opcode.CONST: (True, True, False, 0),
    Opcode.MOV: (True, True, False, 0),
    Opcode.LOAD: (True, False, True, 0),
    Opcode.STORE: (False, True, True, 0),
    Opcode.OUT: (False, True, False, 0),
    Opcode.JMP: (False, False, False, 1),
    Opcode.JZ: (False, True, False, 2),
    Opcode.HALT: (False, False, False, 0),
    **{op: (True, True, False, 0) for op in ARITHMETIC},
}


def _check_instruction(site: str, instr: Instruction, labels: set[str]) -> list[str]:
    problems = []
    wants_dest, wants_src, wants_addr, n_targets = _OPERAND_SHAPES[instr.opcode]
    if wants_dest and not is_register(instr.dest):
        problems.append(f"{site}: {instr.opcode} needs a destination register")
    if wants_src and instr.src is None:
        problems.append(f"{site}: {instr.opcode} needs a source operand")
    if instr.opcode in (Opcode.STORE, Opcode.OUT, Opcode.JZ) and not is_register(instr.src):
        problems.append(f"{site}: {instr.opcode} source must be a register")
    if instr.opcode is Opcode.CONST and not isinstance(instr.src, int):
        problems.append(f"{site}: const source must be an immediate")
    if isinstance(instr.src, str) and not is_register(instr.src):
        problems.append(f"{site}: unknown register {instr.src}")
    if wants_addr and (instr.addr is None or not is_register(instr.addr.base)):
        problems.append(f"{site}: {instr.opcode} needs a [register+offset] address")
    if len(instr.targets) != n_targets:
        problems.append(f"{site}: {instr.opcode} needs {n_targets} target(s), has {len(instr.targets)}")
    for target in instr.targets:
        if target not in labels:
            problems.append(f"{site}: unknown label {target}")
    return problems


def validate(p: Program) -> list[str]:
    """
    Check every Program invariant.

    Returns:
        Diagnostics, one string per problem; empty iff the program is well formed.
    """
    diagnostics: list[str] = []
    labels = [b.label for b in p.blocks]
    seen: set[str] = set()
    for label in labels:
        if label in seen:
            diagnostics.append(f"block {label}: duplicate label")
        seen.add(label)
    if p.entry not in seen:
        diagnostics.append(f"entry label {p.entry} does not name a block")

    for block in p.blocks:
        if not block.instructions or not block.instructions[-1].is_terminator:
            diagnostics.append(f"block {block.label}: missing terminator")
        for index, instr in enumerate(block.instructions):
            site = f"block {block.label}[{index}]"
            if instr.is_terminator and index != len(block.instructions) - 1:
                diagnostics.append(f"{site}: terminator before end of block")
            diagnostics.extend(_check_instruction(site, instr, seen))

    names: set[str] = set()
    for region in p.regions:
        if region.name in names:
            diagnostics.append(f"region {region.name}: declared twice")
        names.add(region.name)
        if region.words < 1:
            diagnostics.append(f"region {region.name}: must hold at least one word")
        if region.base % p.page_words:
            diagnostics.append(f"region {region.name}: base {region.base} is not page-aligned")
    for i, a in enumerate(p.regions):
        for b in p.regions[i + 1:]:
            if a.base < b.end and b.base < a.end:
                diagnostics.append(f"regions {a.name}/{b.name} overlap")

    bound: set[str] = set()
    for binding in p.input_spec:
        if binding.target in bound:
            diagnostics.append(f"input {binding.target}: bound more than once")
        bound.add(binding.target)
        if binding.is_register:
            if binding.points_to is not None and binding.points_to not in names:
                diagnostics.append(f"input {binding.target}: unknown region {binding.points_to}")
            continue
        if binding.points_to is not None:
            diagnostics.append(f"input {binding.target}: only registers take a pointer hint")
        if binding.target not in names:
            diagnostics.append(f"input {binding.target}: not a register or region")
            continue
        region = p.region(binding.target)
        if region.cls is RegionClass.SCRATCH or region.cls.value != binding.cls.value:
            diagnostics.append(
                f"input {binding.target}: binding class {binding.cls} does not match region class {region.cls}"
            )
    for region in p.regions:
        if region.cls is not RegionClass.SCRATCH and region.name not in bound:
            diagnostics.append(f"region {region.name}: {region.cls} region has no input binding")
    return diagnostics


def _format_value(value: str | int | None, symbol: str | None) -> str:
    if symbol is not None:
        return symbol
    return str(value)


def format_instruction(instr: Instruction) -> str:
    op = instr.opcode
    if op is Opcode.HALT:
        return "halt"
    if op is Opcode.JMP:
        return f"jmp {instr.targets[0]}"
    if op is Opcode.JZ:
        return f"jz {instr.src}, {', '.join(instr.targets)}"
    if op is Opcode.OUT:
        return f"out {instr.src}"
    if op is Opcode.LOAD:
        return f"load {instr.dest}, {instr.addr}"
    if op is Opcode.STORE:
        return f"store {instr.addr}, {instr.src}"
    return f"{op} {instr.dest}, {_format_value(instr.src, instr.symbol)}"


def pretty_print(p: Program) -> str:
    """Render a Program in the IR text format."""
    lines = [f"program {p.name}"]
    for region in p.regions:
        lines.append(f"region {region.name} {region.cls} words={region.words}")
    for binding in p.input_spec:
        hint = f" &{binding.points_to}" if binding.points_to else ""
        lines.append(f"input {binding.target} {binding.cls}{hint}")
    if p.blocks and p.entry != p.blocks[0].label:
        lines.append(f"entry {p.entry}")
    for block in p.blocks:
        lines.append(f"block {block.label}:")
        lines.extend(f"  {format_instruction(instr)}" for instr in block.instructions)
    return "\n".join(lines) + "\n"


def cfg(p: Program) -> dict[str, tuple[str, ...]]:
    """Successor labels of every block: jmp has one, jz two, halt none."""
    successors: dict[str, tuple[str, ...]] = {}
    for block in p.blocks:
        term = block.terminator
        successors[block.label] = tuple(dict.fromkeys(term.targets)) if term is not None else ()
    return successors


def parse_value(text: str, program: Program | None = None) -> int | tuple[int, ...]:
    """
    Parse a command-line input value.

    ``"hat"`` becomes one word per character plus a zero terminator,
    ``1,2,3`` a word list, ``&name`` a region's base address, anything else
    a single integer.
    """
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return tuple(ord(ch) for ch in text[1:-1]) + (0,)
    if text.startswith("&"):
        if program is None:
            raise InputError(f"cannot resolve {text} without a program")
        try:
            return program.region(text[1:]).base
        except KeyError:
            raise InputError(f"unknown region {text[1:]}")
    try:
        if "," in text:
            return tuple(parse_int(part) for part in text.split(",") if part.strip())
        return parse_int(text)
    except ValueError:
        raise InputError(f"cannot parse input value '{text}'")


def make_assignment(p: Program, values: Mapping[str, int | Sequence[int] | str]) -> InputAssignment:
    """Build an InputAssignment from raw values keyed by register or region name."""
    assignment = InputAssignment()
    for target, raw in values.items():
        value = parse_value(raw, p) if isinstance(raw, str) else raw
        if is_register(target):
            if not isinstance(value, int):
                raise InputError(f"register {target} takes a single word")
            assignment.registers[target] = value & WORD_MASK
        else:
            words = (value,) if isinstance(value, int) else tuple(value)
            assignment.regions[target] = tuple(w & WORD_MASK for w in words)
    return assignment


def check_assignment(
    p: Program, a: InputAssignment, classes: Iterable[BindingTime] = tuple(BindingTime)
) -> None:
    """
    Raise InputError unless ``a`` binds exactly the input_spec targets of the given classes.
    """
    wanted = {b.target: b for b in p.input_spec if b.cls in set(classes)}
    extra = a.targets() - set(wanted)
    if extra:
        raise InputError(f"unexpected input targets: {', '.join(sorted(extra))}")
    missing = set(wanted) - a.targets()
    if missing:
        raise InputError(f"missing input targets: {', '.join(sorted(missing))}")
    for name, words in a.regions.items():
        if not wanted[name].is_register:
            region = p.region(name)
            if len(words) > region.words:
                raise InputError(f"region {name} holds {region.words} words, got {len(words)}")
        else:
            raise InputError(f"register {name} takes a single word")
    for name, value in a.registers.items():
        binding = wanted[name]
        if not binding.is_register:
            raise InputError(f"region {name} needs a word list")
        if binding.points_to is not None and not p.region(binding.points_to).contains(value):
            raise InputError(f"register {name} must point into region {binding.points_to}")


class Memory(Protocol):
    def read_word(self, address: int) -> int: ...

    def write_word(self, address: int, value: int) -> None: ...


class FlatMemory:
    """The whole address space as one array; the reference model of memory."""

    def __init__(self, p: Program) -> None:
        self.program = p
        self.words = np.zeros(p.page_count * p.page_words, dtype=np.uint64)

    def _check(self, address: int) -> None:
        if self.program.region_at(address) is None:
            raise MachineFault(f"out-of-region access at address {address}", address)

    def read_word(self, address: int) -> int:
        self._check(address)
        return int(self.words[address])

    def write_word(self, address: int, value: int) -> None:
        self._check(address)
        self.words[address] = value & WORD_MASK

    def load(self, a: InputAssignment) -> None:
        for name, values in a.regions.items():
            region = self.program.region(name)
            self.words[region.base:region.base + len(values)] = np.asarray(values, dtype=np.uint64)


def alu(op: Opcode, a: int, b: int) -> int:
    if op is Opcode.ADD:
        return (a + b) & WORD_MASK
    if op is Opcode.SUB:
        return (a - b) & WORD_MASK
    if op is Opcode.MUL:
        return (a * b) & WORD_MASK
    if op is Opcode.XOR:
        return a ^ b
    if op is Opcode.AND:
        return a & b
    if op is Opcode.OR:
        return a | b
    if op is Opcode.SHL:
        return (a << (b % WORD_BITS)) & WORD_MASK
    if op is Opcode.SHR:
        return a >> (b % WORD_BITS)
    raise ValueError(f"{op} is not an arithmetic opcode")


def effective_address(instr: Instruction, regs: Sequence[int]) -> int:
    return (regs[reg_index(instr.addr.base)] + instr.addr.offset) & WORD_MASK


def operand(instr: Instruction, regs: Sequence[int]) -> int:
    if isinstance(instr.src, str):
        return regs[reg_index(instr.src)]
    return instr.src


def step(instr: Instruction, regs: list[int], memory: Memory, tape: list[int] | None = None) -> None:
    """Execute one non-terminator instruction in place."""
    op = instr.opcode
    if op is Opcode.CONST or op is Opcode.MOV:
        regs[reg_index(instr.dest)] = operand(instr, regs) & WORD_MASK
    elif op in ARITHMETIC:
        d = reg_index(instr.dest)
        regs[d] = alu(op, regs[d], operand(instr, regs))
    elif op is Opcode.LOAD:
        regs[reg_index(instr.dest)] = memory.read_word(effective_address(instr, regs))
    elif op is Opcode.STORE:
        memory.write_word(effective_address(instr, regs), operand(instr, regs))
    elif op is Opcode.OUT:
        if tape is not None:
            tape.append(operand(instr, regs))
    else:
        raise ValueError(f"{op} is a terminator")


def next_block(term: Instruction, regs: Sequence[int]) -> str | None:
    """Successor chosen by a terminator, or None on halt."""
    if term.opcode is Opcode.JMP:
        return term.targets[0]
    if term.opcode is Opcode.JZ:
        return term.targets[0] if operand(term, regs) == 0 else term.targets[1]
    return None


def run_program(p: Program, a: InputAssignment, fuel: int = 10_000_000) -> RunResult:
    """
    Run a program from its entry block until it halts.

    Args:
        p: The program.
        a: Values for every input_spec target.
        fuel: Maximum number of instructions to execute.

    Returns:
        The output tape, the final r0 and the number of executed instructions.
    """
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    check_assignment(p, a)
    memory = FlatMemory(p)
    memory.load(a)
    regs = [0] * NUM_REGISTERS
    for name, value in a.registers.items():
        regs[reg_index(name)] = value & WORD_MASK
    tape: list[int] = []
    blocks = {b.label: b for b in p.blocks}
    label: str | None = p.entry
    steps = 0
    while label is not None:
        block = blocks[label]
        for index, instr in enumerate(block.instructions):
            steps += 1
            if steps > fuel:
                raise FuelExhausted(f"{p.name}: fuel of {fuel} steps exhausted in block {label}")
            if instr.is_terminator:
                label = next_block(instr, regs)
                break
            try:
                step(instr, regs, memory, tape)
            except MachineFault as e:
                raise MachineFault("out-of-region access", e.address, label, index) from e
    return RunResult(tape=tuple(tape), r0=regs[0], steps=steps)
