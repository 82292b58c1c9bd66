"""
Worklist-driven specialization of a program to its supplied inputs.

Each dequeued (state, block) pair runs the block once: supplied instructions
execute on a CoW working state, delayed ones are copied into the residual,
and lifted supplied results are materialized as constants. Successor states
are sealed, fingerprinted and enqueued unless already seen.
"""

from __future__ import annotations

import logging
import time
from collections import Counter, deque
from dataclasses import dataclass, field

from genext.bta import BtaResult, InputNode, Site
from genext.conf import Settings
from genext.errors import BudgetExhausted, CongruenceViolation, FuelExhausted, MachineFault
from genext.fingerprint import FingerprintContext
from genext.ir import (
    NUM_REGISTERS,
    REGISTERS,
    BasicBlock,
    BindingTime,
    InputAssignment,
    Instruction,
    Opcode,
    Program,
    RegionClass,
    check_assignment,
    effective_address,
    reg_index,
    step,
)
from genext.residual import ResidualBuilder, SpecLabel
from genext.statestore import Metrics, MutableState, Snapshot, StateId, StateStore, VisitedSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpecConfig:
    cow_enabled: bool = True
    fingerprint_enabled: bool = True
    max_states: int = 100_000
    block_fuel: int = 10_000

    def __post_init__(self) -> None:
        if self.max_states <= 0 or self.block_fuel <= 0:
            raise ValueError("specialization budgets must be positive")

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> SpecConfig:
        values = {
            "cow_enabled": settings.cow_enabled,
            "fingerprint_enabled": settings.fingerprint_enabled,
            "max_states": settings.max_states,
            "block_fuel": settings.block_fuel,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def mode(self) -> str:
        return f"{'yes' if self.cow_enabled else 'no'}-{'yes' if self.fingerprint_enabled else 'no'}"


@dataclass(frozen=True)
class WorklistItem:
    state: StateId
    block: str


@dataclass
class SpecializationResult:
    residual: Program
    metrics: Metrics
    decisions: list[tuple[str, bool]] = field(default_factory=list)
    entry_label: str = ""


class Specializer:
    """One specialization run of ``program`` under a fixed binding-time division."""

    def __init__(self, program: Program, bta: BtaResult, ctx: FingerprintContext, config: SpecConfig) -> None:
        self.program = program
        self.bta = bta
        self.config = config
        self.metrics = Metrics()
        self.store = StateStore(
            program,
            ctx,
            cow=config.cow_enabled,
            fingerprint=config.fingerprint_enabled,
            metrics=self.metrics,
        )
        self.visited = VisitedSet(self.store, fingerprint=config.fingerprint_enabled)
        self.builder = ResidualBuilder(program)
        self.worklist: deque[WorklistItem] = deque()
        self.decisions: list[tuple[str, bool]] = []
        self._pending: Counter[StateId] = Counter()
        self._blocks = {b.label: b for b in program.blocks}
        self._entry_lifts = sorted(
            (n.reg for n in bta.lifted if isinstance(n, InputNode)), key=reg_index
        )

    def _key(self, s: Snapshot, state: StateId) -> str:
        if self.config.fingerprint_enabled:
            return s.fp.hex()
        return f"{state:016x}"

    def canonical_registers(self, regs: list[int], block: str) -> list[int]:
        """Zero every register that is dead on entry to ``block``."""
        live = self.bta.live_in[block]
        return [regs[i] if REGISTERS[i] in live else 0 for i in range(NUM_REGISTERS)]

    def _settle(self, s: Snapshot) -> None:
        # fingerprint mode keeps only (label, residue); the pages can go
        if self._pending[s.id] == 0 and not self.visited.retains(s):
            self._pending.pop(s.id, None)
            self.store.release(s)

    def enqueue(self, s: Snapshot, block: str) -> SpecLabel:
        """Queue (s, block) unless the pair was seen; returns the residual label for it."""
        self.metrics.enqueues += 1
        visit = self.visited.check_and_insert(block, s)
        self.decisions.append((block, visit.fresh))
        if visit.fresh:
            self.worklist.append(WorklistItem(s.id, block))
            self._pending[s.id] += 1
        else:
            self.metrics.dedup_hits += 1
        return SpecLabel(block, self._key(s, visit.state))

    def _check_supplied_access(self, site: Site, instr: Instruction, m: MutableState) -> None:
        address = effective_address(instr, m.regs)
        region = self.program.region_at(address)
        if region is not None and region.name not in self.bta.region_targets[site]:
            raise CongruenceViolation(
                f"{site}: supplied {instr.opcode} reached region {region.name}, "
                f"outside the analysed targets {sorted(self.bta.region_targets[site])}"
            )

    def _check_delayed_access(self, site: Site, instr: Instruction, m: MutableState) -> None:
        if site not in self.bta.supplied_base:
            return
        address = effective_address(instr, m.regs)
        region = self.program.region_at(address)
        if region is not None and region.cls is RegionClass.SUPPLIED:
            raise CongruenceViolation(
                f"{site}: delayed {instr.opcode} at address {address} touches supplied-input region {region.name}"
            )

    def exec_block(self, item: WorklistItem, *, initial: bool = False) -> None:
        """Run one block of the original program in the state named by ``item``."""
        s = self.store.snapshots[item.state]
        self._pending[s.id] -= 1
        self.metrics.states_visited += 1
        if self.metrics.states_visited > self.config.max_states:
            raise BudgetExhausted(
                f"{self.program.name}: more than {self.config.max_states} states visited; "
                "the supplied state may grow without bound"
            )
        block = self._blocks[item.block]
        if len(block.instructions) > self.config.block_fuel:
            raise FuelExhausted(f"block {block.label} exceeds the per-block fuel of {self.config.block_fuel}")

        m = self.store.restore(s)
        self.builder.open_block(SpecLabel(block.label, self._key(s, s.id)))
        if initial:
            for reg in self._entry_lifts:
                self.builder.emit_lift(reg, m.register(reg))

        for index, instr in enumerate(block.body):
            site = Site(block.label, index)
            if self.bta.is_delayed(site) or instr.opcode is Opcode.OUT:
                if instr.addr is not None:
                    self._check_delayed_access(site, instr, m)
                self.builder.emit_instr(instr)
                for reg in instr.defs():
                    m.regs[reg_index(reg)] = 0
                continue
            if instr.addr is not None:
                self._check_supplied_access(site, instr, m)
            try:
                step(instr, m.regs, m)
            except MachineFault as e:
                raise MachineFault("out-of-region access", e.address, block.label, index) from e
            if site in self.bta.lifted:
                for reg in instr.defs():
                    self.builder.emit_lift(reg, m.register(reg))

        self.handle_branch(m, block)
        self._settle(s)

    def _successor(self, m: MutableState, target: str) -> SpecLabel:
        sealed = self.store.seal(m, self.canonical_registers(m.regs, target))
        label = self.enqueue(sealed, target)
        self._settle(sealed)
        return label

    def handle_branch(self, m: MutableState, block: BasicBlock) -> None:
        term = block.terminator
        site = Site(block.label, len(block.instructions) - 1)
        if term.opcode is Opcode.HALT:
            self.builder.emit_halt()
            m.discard()
        elif term.opcode is Opcode.JMP:
            self.builder.emit_jump(self._successor(m, term.targets[0]))
        elif not self.bta.is_delayed(site):
            taken = term.targets[0] if m.register(term.src) == 0 else term.targets[1]
            self.builder.emit_jump(self._successor(m, taken))
        else:
            if_zero, if_nonzero = term.targets
            zero_state = self.store.seal(m, self.canonical_registers(m.regs, if_zero))
            nonzero_state = self.store.with_registers(
                zero_state, self.canonical_registers(m.regs, if_nonzero)
            )
            zero_label = self.enqueue(zero_state, if_zero)
            nonzero_label = self.enqueue(nonzero_state, if_nonzero)
            self._settle(zero_state)
            if nonzero_state is not zero_state:
                self._settle(nonzero_state)
            self.builder.emit_cond_jump(term.src, zero_label, nonzero_label)

    def _check_residual_regions(self) -> None:
        # supplied-input regions become scratch in the residual, so delayed code must not touch them
        for region in self.program.regions:
            if region.cls is RegionClass.SUPPLIED and region.name in self.bta.delayed_regions:
                raise CongruenceViolation(
                    f"{self.program.name}: supplied-input region {region.name} is accessed by delayed code"
                )

    def run(self, supplied: InputAssignment) -> SpecializationResult:
        started = time.perf_counter()
        self._check_residual_regions()
        check_assignment(self.program, supplied, [BindingTime.SUPPLIED])
        logger.info("Specializing %s in mode %s", self.program.name, self.config.mode)

        initial = self.store.create_initial(supplied)
        canonical = self.store.with_registers(initial, self.canonical_registers(list(initial.regs), self.program.entry))
        if canonical is not initial:
            self.store.release(initial)
        entry = self.enqueue(canonical, self.program.entry)
        self._settle(canonical)

        first = True
        while self.worklist:
            item = self.worklist.popleft()
            logger.debug("Dequeued state %d at block %s", item.state, item.block)
            self.exec_block(item, initial=first)
            first = False

        residual = self.builder.finalize(entry)
        self.metrics.wall_ms = (time.perf_counter() - started) * 1000
        logger.info(
            "Specialized %s: %d states, %d dedup hits, %d residual instructions",
            self.program.name,
            self.metrics.states_visited,
            self.metrics.dedup_hits,
            residual.instruction_count(),
        )
        return SpecializationResult(
            residual=residual,
            metrics=self.metrics,
            decisions=self.decisions,
            entry_label=self.builder.name(entry),
        )


def specialize(
    p: Program,
    bta: BtaResult,
    supplied: InputAssignment,
    config: SpecConfig,
    ctx: FingerprintContext,
) -> SpecializationResult:
    """
    Build the residual program of ``p`` for the supplied inputs.

    Args:
        p: The original program.
        bta: Its binding-time division.
        supplied: Values for every supplied input binding.
        config: CoW / fingerprint mode and budgets.
        ctx: Fingerprint context matching the program's page size.

    Returns:
        The residual program, the run's metrics and its fresh/duplicate log.
    """
    return Specializer(p, bta, ctx, config).run(supplied)
