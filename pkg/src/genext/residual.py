from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from genext.errors import ResidualError
from genext.ir import (
    BasicBlock,
    BindingTime,
    Instruction,
    Opcode,
    Program,
    Region,
    RegionClass,
    validate,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpecLabel:
    """A block of the original program specialized to one state key."""

    origin: str
    key: str

    @property
    def fp16(self) -> str:
        return self.key[:16]

    @property
    def text(self) -> str:
        return f"{self.origin}__{self.fp16}"


class ResidualBuilder:
    """
    Accumulates residual blocks while the specializer walks (state, block) pairs.

    Blocks come out in first-opened order. Lifts are memoized per open block,
    so a register already holding a value is not re-materialized.
    """

    def __init__(self, program: Program) -> None:
        self.program = program
        self._blocks: dict[SpecLabel, list[Instruction]] = {}
        self._names: dict[SpecLabel, str] = {}
        self._taken: dict[str, SpecLabel] = {}
        self._referenced: dict[SpecLabel, None] = {}
        self._current: SpecLabel | None = None
        self._lifts: dict[str, int] = {}

    def name(self, label: SpecLabel) -> str:
        """Label text; a 16-digit prefix shared by two keys gets a numeric suffix."""
        text = self._names.get(label)
        if text is None:
            text = label.text
            suffix = 1
            while text in self._taken:
                suffix += 1
                text = f"{label.text}_{suffix}"
            self._names[label] = text
            self._taken[text] = label
        return text

    def _body(self) -> list[Instruction]:
        if self._current is None:
            raise ResidualError("no residual block is open")
        body = self._blocks[self._current]
        if body and body[-1].is_terminator:
            raise ResidualError(f"block {self.name(self._current)} is already terminated")
        return body

    def open_block(self, label: SpecLabel) -> None:
        if label in self._blocks:
            raise ResidualError(f"block {self.name(label)} opened twice")
        if self._current is not None:
            body = self._blocks[self._current]
            if not body or not body[-1].is_terminator:
                raise ResidualError(f"block {self.name(self._current)} left without a terminator")
        self.name(label)
        self._blocks[label] = []
        self._current = label
        self._lifts = {}

    def emit_instr(self, instr: Instruction) -> None:
        body = self._body()
        if instr.is_terminator:
            raise ResidualError(f"use the jump emitters for '{instr}'")
        body.append(replace(instr, line=0, column=0))
        for reg in instr.defs():
            self._lifts.pop(reg, None)

    def emit_lift(self, reg: str, value: int) -> None:
        """Materialize a supplied value as ``const reg, value``."""
        body = self._body()
        if self._lifts.get(reg) == value:
            return
        body.append(Instruction(Opcode.CONST, dest=reg, src=value))
        self._lifts[reg] = value

    def emit_jump(self, target: SpecLabel) -> None:
        body = self._body()
        self._referenced[target] = None
        body.append(Instruction(Opcode.JMP, targets=(self.name(target),)))

    def emit_cond_jump(self, reg: str, if_zero: SpecLabel, if_nonzero: SpecLabel) -> None:
        body = self._body()
        self._referenced[if_zero] = None
        self._referenced[if_nonzero] = None
        body.append(Instruction(Opcode.JZ, src=reg, targets=(self.name(if_zero), self.name(if_nonzero))))

    def emit_halt(self) -> None:
        self._body().append(Instruction(Opcode.HALT))

    def residual_regions(self) -> tuple[Region, ...]:
        # Same layout as the original so lifted addresses stay valid.
        return tuple(
            replace(r, cls=RegionClass.SCRATCH) if r.cls is RegionClass.SUPPLIED else r
            for r in self.program.regions
        )

    def finalize(self, entry: SpecLabel) -> Program:
        """
        Close the residual program.

        Args:
            entry: Label of the entry block in the initial state.

        Returns:
            A validated Program whose input spec holds only the delayed bindings.
        """
        for label in self._referenced:
            if label not in self._blocks:
                raise ResidualError(f"dangling label {self.name(label)}")
        if entry not in self._blocks:
            raise ResidualError(f"dangling label {self.name(entry)}")
        for label, body in self._blocks.items():
            if not body or not body[-1].is_terminator:
                raise ResidualError(f"block {self.name(label)} left without a terminator")

        residual = Program(
            name=f"{self.program.name}_residual",
            regions=self.residual_regions(),
            blocks=tuple(BasicBlock(self.name(label), tuple(body)) for label, body in self._blocks.items()),
            entry=self.name(entry),
            input_spec=tuple(b for b in self.program.input_spec if b.cls is BindingTime.DELAYED),
            page_words=self.program.page_words,
        )
        diagnostics = validate(residual)
        if diagnostics:
            raise ResidualError(f"residual program is invalid: {diagnostics[0]}")
        logger.debug("Residual %s: %d blocks", residual.name, len(residual.blocks))
        return residual


def canonicalize_labels(p: Program) -> Program:
    """Rename blocks to S0, S1, ... in block order."""
    mapping = {block.label: f"S{i}" for i, block in enumerate(p.blocks)}
    blocks = tuple(
        BasicBlock(
            mapping[block.label],
            tuple(
                replace(instr, targets=tuple(mapping[t] for t in instr.targets)) if instr.targets else instr
                for instr in block.instructions
            ),
        )
        for block in p.blocks
    )
    return replace(p, blocks=blocks, entry=mapping[p.entry])
