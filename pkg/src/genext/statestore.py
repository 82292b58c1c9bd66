"""
Partial-state storage: copy-on-write page tables, sealed snapshots,
the visited set and the instrumentation counters.

A page is a numpy uint64 array of ``page_words`` words. Pages reachable from
a sealed snapshot are frozen (``flags.writeable = False``) and shared; a
MutableState copies a page on its first write and logs the pre-image, which
is what the incremental fingerprint update consumes.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field
from types import MappingProxyType

import numpy as np

from genext.errors import MachineFault
from genext.fingerprint import (
    Fingerprint,
    FingerprintContext,
    full_hash,
    incremental_update,
    page_term,
)
from genext.ir import (
    NUM_REGISTERS,
    WORD_MASK,
    BindingTime,
    InputAssignment,
    Program,
    check_assignment,
    reg_index,
)

logger = logging.getLogger(__name__)

StateId = int


@dataclass
class Metrics:
    states_visited: int = 0
    enqueues: int = 0
    dedup_hits: int = 0
    pages_allocated_total: int = 0
    live_pages_max: int = 0
    pages_hashed: int = 0
    words_compared: int = 0
    cow_faults: int = 0
    wall_ms: float = 0.0

    def as_dict(self) -> dict[str, int | float]:
        return asdict(self)

    def format(self) -> str:
        """Render the stable ``key=value`` block."""
        lines = []
        for key, value in self.as_dict().items():
            lines.append(f"{key}={value:.3f}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines) + "\n"


class PagePool:
    """Ownership counts for shared pages; drives the allocation metrics."""

    def __init__(self, metrics: Metrics) -> None:
        self.metrics = metrics
        self._pages: dict[int, np.ndarray] = {}
        self._owners: dict[int, int] = {}

    @property
    def live(self) -> int:
        return len(self._pages)

    def allocate(self, page: np.ndarray) -> np.ndarray:
        self._pages[id(page)] = page
        self._owners[id(page)] = 0
        self.metrics.pages_allocated_total += 1
        self.metrics.live_pages_max = max(self.metrics.live_pages_max, self.live)
        return page

    def retain(self, page: np.ndarray) -> None:
        self._owners[id(page)] += 1

    def release(self, page: np.ndarray) -> None:
        key = id(page)
        self._owners[key] -= 1
        if self._owners[key] <= 0:
            del self._owners[key]
            del self._pages[key]

    def drop_unowned(self, pages: Iterable[np.ndarray]) -> None:
        for page in pages:
            if self._owners.get(id(page)) == 0:
                del self._owners[id(page)]
                del self._pages[id(page)]


@dataclass(frozen=True, eq=False)
class Snapshot:
    id: StateId
    table: Mapping[int, np.ndarray]
    regs: tuple[int, ...]
    fp: Fingerprint | None
    parent: StateId | None = None


class MutableState:
    """A working copy of a snapshot; pages are copied on first write."""

    def __init__(self, store: StateStore, parent: Snapshot) -> None:
        self.store = store
        self.parent = parent
        self.regs = list(parent.regs)
        self.private: dict[int, np.ndarray] = {}
        self.dirty: dict[int, np.ndarray | None] = {}
        self.closed = False

    def _locate(self, address: int) -> tuple[int, int]:
        if self.store.program.region_at(address) is None:
            raise MachineFault(f"out-of-region access at address {address}", address)
        return divmod(address, self.store.page_words)

    def read_word(self, address: int) -> int:
        index, offset = self._locate(address)
        page = self.private.get(index)
        if page is None:
            page = self.parent.table.get(index)
        return int(page[offset]) if page is not None else 0

    def write_word(self, address: int, value: int) -> None:
        if self.closed:
            raise ValueError("write to a sealed state")
        index, offset = self._locate(address)
        page = self.private.get(index)
        if page is None:
            page = self.store.copy_page(self.parent.table.get(index))
            self.private[index] = page
            self.dirty[index] = self.parent.table.get(index)
            self.store.metrics.cow_faults += 1
        page[offset] = value & WORD_MASK

    def register(self, name: str) -> int:
        return self.regs[reg_index(name)]

    def discard(self) -> None:
        """Drop private pages of a state that will never be sealed."""
        self.store.pool.drop_unowned(self.private.values())
        self.private.clear()
        self.closed = True


class StateStore:
    """
    Snapshots of one program's partial state.

    Args:
        program: The program whose address space is stored.
        ctx: Fingerprint context; its page size must match the program's.
        cow: Share unchanged pages between snapshots; when off every seal copies every page.
        fingerprint: Keep an incrementally updated fingerprint per snapshot.
        metrics: Counters to update; a fresh Metrics by default.
    """

    def __init__(
        self,
        program: Program,
        ctx: FingerprintContext,
        *,
        cow: bool = True,
        fingerprint: bool = True,
        metrics: Metrics | None = None,
    ) -> None:
        if program.page_words < NUM_REGISTERS:
            raise ValueError(f"pages must hold at least {NUM_REGISTERS} words")
        if ctx.page_bits != program.page_words * 64:
            raise ValueError(
                f"fingerprint page size {ctx.page_bits} bits does not match {program.page_words}-word pages"
            )
        self.program = program
        self.ctx = ctx
        self.cow = cow
        self.fingerprint = fingerprint
        self.metrics = metrics or Metrics()
        self.pool = PagePool(self.metrics)
        self.page_words = program.page_words
        self.n_pages = program.page_count
        self.register_page_index = self.n_pages
        self.snapshots: dict[StateId, Snapshot] = {}
        self._next_id = 0
        self._zero = np.zeros(self.page_words, dtype=np.uint64)
        self._zero.flags.writeable = False

    def copy_page(self, page: np.ndarray | None) -> np.ndarray:
        fresh = page.copy() if page is not None else np.zeros(self.page_words, dtype=np.uint64)
        return self.pool.allocate(fresh)

    def register_page(self, regs: Iterable[int]) -> np.ndarray:
        page = np.zeros(self.page_words, dtype=np.uint64)
        page[:NUM_REGISTERS] = np.fromiter(regs, dtype=np.uint64, count=NUM_REGISTERS)
        return page

    def _register_term(self, regs: Iterable[int]) -> int:
        self.metrics.pages_hashed += 1
        return page_term(self.register_page_index, self.register_page(regs), self.ctx).residue

    def _new_snapshot(
        self, table: dict[int, np.ndarray], regs: Iterable[int], fp: Fingerprint | None, parent: StateId | None
    ) -> Snapshot:
        for page in table.values():
            page.flags.writeable = False
            self.pool.retain(page)
        snapshot = Snapshot(
            id=self._next_id,
            table=MappingProxyType(table),
            regs=tuple(regs),
            fp=fp,
            parent=parent,
        )
        self._next_id += 1
        self.snapshots[snapshot.id] = snapshot
        return snapshot

    def create_initial(self, supplied: InputAssignment) -> Snapshot:
        """
        Zero state overlaid with the supplied inputs.

        Only nonzero pages are allocated and hashed, plus the register pseudo-page.
        """
        check_assignment(self.program, supplied, [BindingTime.SUPPLIED])
        table: dict[int, np.ndarray] = {}
        for name, values in supplied.regions.items():
            region = self.program.region(name)
            for offset, value in enumerate(values):
                if not value:
                    continue
                index, word = divmod(region.base + offset, self.page_words)
                if index not in table:
                    table[index] = self.copy_page(None)
                table[index][word] = value & WORD_MASK
        regs = [0] * NUM_REGISTERS
        for name, value in supplied.registers.items():
            regs[reg_index(name)] = value & WORD_MASK

        fp = None
        if self.fingerprint:
            residue = self._register_term(regs)
            for index, page in table.items():
                self.metrics.pages_hashed += 1
                residue ^= page_term(index, page, self.ctx).residue
            fp = Fingerprint(residue)
        snapshot = self._new_snapshot(table, regs, fp, None)
        logger.debug("Initial state %d: %d nonzero pages", snapshot.id, len(table))
        return snapshot

    def fork(self, s: Snapshot) -> MutableState:
        return MutableState(self, s)

    restore = fork

    def seal(self, m: MutableState, regs: Iterable[int] | None = None) -> Snapshot:
        """
        Freeze a working state into a new snapshot.

        Args:
            m: The working state; it cannot be written afterwards.
            regs: Register file to store instead of ``m.regs``.

        Returns:
            The sealed snapshot with its updated fingerprint.
        """
        if m.closed:
            raise ValueError("state already sealed")
        parent = m.parent
        regs = list(m.regs if regs is None else regs)
        if not self.cow:
            # force every page so each snapshot owns a full copy of the address space
            forced = 0
            for index in range(self.n_pages):
                if index not in m.private:
                    m.private[index] = self.copy_page(parent.table.get(index))
                    self.metrics.cow_faults += 1
                    forced += 1
            logger.debug("Forced %d page copies for state derived from %d", forced, parent.id)

        table = dict(parent.table)
        table.update(m.private)

        fp = None
        if self.fingerprint:
            changes = [
                (index, old if old is not None else self._zero, m.private[index])
                for index, old in m.dirty.items()
            ]
            changes.append(
                (self.register_page_index, self.register_page(parent.regs), self.register_page(regs))
            )
            self.metrics.pages_hashed += 2 * len(changes)
            fp = incremental_update(parent.fp, changes, self.ctx)

        m.closed = True
        return self._new_snapshot(table, regs, fp, parent.id)

    def with_registers(self, s: Snapshot, regs: Iterable[int]) -> Snapshot:
        """A sibling of ``s`` with the same pages and another register file."""
        regs = tuple(regs)
        if regs == s.regs:
            return s
        fp = None
        if self.fingerprint:
            residue = s.fp.residue ^ self._register_term(s.regs) ^ self._register_term(regs)
            fp = Fingerprint(residue)
        return self._new_snapshot(dict(s.table), regs, fp, s.parent)

    def release(self, s: Snapshot) -> None:
        """Give up a snapshot; its pages are reclaimed once no snapshot owns them."""
        if self.snapshots.pop(s.id, None) is None:
            return
        for page in s.table.values():
            self.pool.release(page)

    def full_fingerprint(self, s: Snapshot) -> Fingerprint:
        """Fingerprint of ``s`` computed from scratch."""
        pages = [s.table.get(i) for i in range(self.n_pages)]
        pages.append(self.register_page(s.regs))
        return full_hash(pages, self.ctx)

    def materialize(self, s: Snapshot) -> np.ndarray:
        """The whole address space of ``s`` as one flat array."""
        flat = np.zeros(self.n_pages * self.page_words, dtype=np.uint64)
        for index, page in s.table.items():
            flat[index * self.page_words:(index + 1) * self.page_words] = page
        return flat

    def equal_states(self, a: Snapshot, b: Snapshot) -> bool:
        """Word-by-word comparison, counting scanned words into words_compared."""
        ra = np.asarray(a.regs, dtype=np.uint64)
        rb = np.asarray(b.regs, dtype=np.uint64)
        if not self._same_words(ra, rb):
            return False
        for index in range(self.n_pages):
            pa, pb = a.table.get(index), b.table.get(index)
            if pa is pb:
                continue
            if not self._same_words(self._zero if pa is None else pa, self._zero if pb is None else pb):
                return False
        return True

    def _same_words(self, a: np.ndarray, b: np.ndarray) -> bool:
        mismatch = np.flatnonzero(a != b)
        if len(mismatch):
            self.metrics.words_compared += int(mismatch[0]) + 1
            return False
        self.metrics.words_compared += len(a)
        return True


@dataclass
class Visit:
    fresh: bool
    state: StateId


@dataclass
class VisitedSet:
    """
    Seen (block, state) pairs.

    With fingerprints a pair is its label plus the residue; without them every
    distinct snapshot is retained and compared word by word.
    """

    store: StateStore
    fingerprint: bool = True
    _keys: dict[tuple[str, int], StateId] = field(default_factory=dict)
    _retained: dict[str, list[Snapshot]] = field(default_factory=dict)
    _retained_ids: set[StateId] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self._keys) if self.fingerprint else sum(len(v) for v in self._retained.values())

    def check_and_insert(self, block: str, s: Snapshot) -> Visit:
        if self.fingerprint:
            key = (block, s.fp.residue)
            if key in self._keys:
                return Visit(False, self._keys[key])
            self._keys[key] = s.id
            return Visit(True, s.id)
        retained = self._retained.setdefault(block, [])
        for other in retained:
            if self.store.equal_states(other, s):
                return Visit(False, other.id)
        retained.append(s)
        self._retained_ids.add(s.id)
        return Visit(True, s.id)

    def retains(self, s: Snapshot) -> bool:
        return s.id in self._retained_ids
