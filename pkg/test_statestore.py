"""
Tests for copy-on-write snapshots, incremental fingerprints and the visited set.
"""

import random

import numpy as np
import pytest

from genext.errors import MachineFault
from genext.fingerprint import DEFAULT_MODULUS, cached_context
from genext.ir import InputAssignment, parse_program
from genext.statestore import Metrics, StateStore, VisitedSet

PAGE_WORDS = 16

SOURCE = """
program mem
region a supplied words=40
region b scratch words=20
input a supplied
input r1 supplied
block L1:
  halt
"""


def make_store(cow=True, fingerprint=True):
    p = parse_program(SOURCE, PAGE_WORDS)
    ctx = cached_context(DEFAULT_MODULUS, PAGE_WORDS * 64)
    return StateStore(p, ctx, cow=cow, fingerprint=fingerprint, metrics=Metrics())


def initial(store, words=(1, 2, 3), r1=7):
    return store.create_initial(InputAssignment(registers={"r1": r1}, regions={"a": tuple(words)}))


def addresses(store):
    return [addr for r in store.program.regions for addr in range(r.base, r.end)]


def test_layout():
    store = make_store()
    # a spans pages 0-2 (words 0..39), b starts on page 3
    assert store.n_pages == 5
    assert store.register_page_index == 5
    assert store.program.region("b").base == 48


def test_initial_state_only_allocates_nonzero_pages():
    store = make_store()
    s = initial(store)
    assert set(s.table) == {0}
    assert s.regs[1] == 7
    assert store.metrics.pages_allocated_total == 1
    # one data page plus the register page
    assert store.metrics.pages_hashed == 2
    assert s.fp == store.full_fingerprint(s)


def test_copy_on_write_shares_untouched_pages():
    store = make_store()
    s = initial(store, words=[0] * 17 + [5])
    m = store.fork(s)
    m.write_word(2, 9)
    m.write_word(3, 9)
    child = store.seal(m)

    assert store.metrics.cow_faults == 1
    assert child.table[1] is s.table[1]
    assert child.table[0] is not s.table.get(0)
    assert m.read_word(2) == 9
    assert store.materialize(s)[2] == 0
    assert store.materialize(child)[2] == 9
    assert child.fp == store.full_fingerprint(child)
    assert not child.table[0].flags.writeable


def test_sealed_state_rejects_writes():
    store = make_store()
    m = store.fork(initial(store))
    store.seal(m)
    with pytest.raises(ValueError):
        m.write_word(0, 1)
    with pytest.raises(ValueError):
        store.seal(m)


def test_out_of_region_access():
    store = make_store()
    m = store.fork(initial(store))
    with pytest.raises(MachineFault):
        m.read_word(44)
    with pytest.raises(MachineFault):
        m.write_word(70, 1)


def test_no_cow_copies_every_page():
    store = make_store(cow=False)
    s = initial(store)
    m = store.fork(s)
    m.write_word(0, 4)
    child = store.seal(m)
    assert store.metrics.cow_faults == store.n_pages
    assert set(child.table) == set(range(store.n_pages))
    assert all(child.table[i] is not s.table.get(i) for i in range(store.n_pages))
    assert child.fp == store.full_fingerprint(child)


def test_write_back_of_original_value_restores_fingerprint():
    store = make_store()
    s = initial(store)
    m = store.fork(s)
    m.write_word(1, 99)
    m.write_word(1, 2)
    child = store.seal(m)
    assert child.fp == s.fp
    assert store.equal_states(s, child)


def test_with_registers():
    store = make_store()
    s = initial(store)
    assert store.with_registers(s, s.regs) is s
    regs = list(s.regs)
    regs[3] = 11
    sibling = store.with_registers(s, regs)
    assert sibling.table[0] is s.table[0]
    assert sibling.fp != s.fp
    assert sibling.fp == store.full_fingerprint(sibling)


@pytest.mark.parametrize("cow", [True, False])
def test_random_edit_sequences(cow):
    rng = random.Random(1 if cow else 2)
    store = make_store(cow=cow)
    valid = addresses(store)
    for _ in range(200):
        s = initial(store, words=[rng.randrange(1 << 64) for _ in range(rng.randrange(41))], r1=rng.randrange(9))
        reference = store.materialize(s)
        regs = list(s.regs)
        for _ in range(rng.randrange(1, 5)):
            m = store.fork(s)
            for _ in range(rng.randrange(0, 12)):
                address = rng.choice(valid)
                value = rng.choice([0, 1, rng.randrange(1 << 64)])
                m.write_word(address, value)
                reference[address] = value
            regs[rng.randrange(16)] = rng.randrange(1 << 64)
            previous, s = s, store.seal(m, regs)
            store.release(previous)
            assert s.fp == store.full_fingerprint(s)
            assert np.array_equal(store.materialize(s), reference)
        store.release(s)
    assert store.pool.live == 0


def test_release_reclaims_pages():
    store = make_store()
    s = initial(store)
    m = store.fork(s)
    m.write_word(20, 1)
    child = store.seal(m)
    assert store.pool.live == 2
    store.release(s)
    # page 0 is still shared with the child
    assert store.pool.live == 2
    store.release(child)
    assert store.pool.live == 0
    assert store.metrics.live_pages_max == 2


def test_discard_drops_private_pages():
    store = make_store()
    s = initial(store)
    m = store.fork(s)
    m.write_word(50, 1)
    assert store.pool.live == 2
    m.discard()
    assert store.pool.live == 1


def test_equal_states_counts_compared_words():
    store = make_store(fingerprint=False)
    a = initial(store)
    b = initial(store)
    assert store.equal_states(a, b)
    # registers plus page 0; absent pages are identical
    assert store.metrics.words_compared == 16 + PAGE_WORDS

    store.metrics.words_compared = 0
    c = initial(store, r1=8)
    assert not store.equal_states(a, c)
    assert store.metrics.words_compared == 2


@pytest.mark.parametrize("fingerprint", [True, False])
def test_visited_set(fingerprint):
    store = make_store(fingerprint=fingerprint)
    visited = VisitedSet(store, fingerprint=fingerprint)
    a = initial(store)
    b = initial(store)
    c = initial(store, r1=8)

    first = visited.check_and_insert("L1", a)
    assert first.fresh and first.state == a.id
    again = visited.check_and_insert("L1", b)
    assert not again.fresh and again.state == a.id
    assert visited.check_and_insert("L1", c).fresh
    assert visited.check_and_insert("L2", b).fresh
    assert len(visited) == 3
    assert visited.retains(a) is (not fingerprint)


def test_metrics_format():
    m = Metrics(states_visited=3, wall_ms=1.5)
    text = m.format()
    assert "states_visited=3\n" in text
    assert "wall_ms=1.500\n" in text
    assert list(m.as_dict())[:2] == ["states_visited", "enqueues"]


def test_page_size_must_match_context():
    p = parse_program(SOURCE, PAGE_WORDS)
    with pytest.raises(ValueError):
        StateStore(p, cached_context(DEFAULT_MODULUS, 512 * 64))
