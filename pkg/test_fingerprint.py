"""
Tests for GF(2) arithmetic and page fingerprints, checked against plain
long division.
"""

import random

import numpy as np
import pytest

from genext.errors import ReducibleModulusError
from genext.fingerprint import (
    DEFAULT_MODULUS,
    ZERO,
    Fingerprint,
    cached_context,
    clmul,
    format_poly,
    full_hash,
    hash_page,
    incremental_update,
    mul_mod,
    new_context,
    page_term,
    parse_modulus,
    poly_mod,
    pow_t_mod,
)

T3 = 0b1011  # t^3 + t + 1
T7 = (1 << 7) | 0b11  # t^7 + t + 1


def as_int(pages, page_bits):
    value = 0
    for i, page in enumerate(pages):
        if page is None:
            continue
        for u, word in enumerate(page):
            value |= int(word) << (i * page_bits + 64 * u)
    return value


def test_parse_and_format_modulus():
    assert parse_modulus("t^127+t+1") == DEFAULT_MODULUS
    assert parse_modulus("x^3 + x + 1") == T3
    assert parse_modulus("0xb") == T3
    assert parse_modulus("11") == T3
    assert format_poly(T3) == "t^3+t+1"
    assert parse_modulus(format_poly(DEFAULT_MODULUS)) == DEFAULT_MODULUS
    with pytest.raises(ValueError):
        parse_modulus("t^3+y")


def test_clmul():
    # (t+1)^2 = t^2+1 over GF(2)
    assert clmul(0b11, 0b11) == 0b101
    assert clmul(0, 12345) == 0
    assert clmul(1 << 70, 1 << 70) == 1 << 140


@pytest.mark.parametrize("modulus", [T3, T7])
def test_mul_and_pow_match_long_division(modulus):
    ctx = new_context(modulus, page_bits=256)
    rng = random.Random(modulus)
    k = modulus.bit_length() - 1
    for _ in range(5000):
        a, b = rng.randrange(1 << k), rng.randrange(1 << k)
        assert ctx.mul(a, b) == poly_mod(clmul(a, b), modulus)
        e = rng.randrange(4096)
        assert ctx.pow_t(e) == poly_mod(1 << e, modulus)


def test_default_modulus_arithmetic():
    ctx = cached_context()
    rng = random.Random(127)
    for _ in range(300):
        a, b = rng.randrange(1 << 127), rng.randrange(1 << 127)
        assert mul_mod(Fingerprint(a), Fingerprint(b), ctx).residue == poly_mod(clmul(a, b), DEFAULT_MODULUS)
        e = rng.randrange(1 << 20)
        assert pow_t_mod(e, ctx).residue == poly_mod(1 << e, DEFAULT_MODULUS)


def test_page_powers_are_memoized():
    ctx = new_context(T7, page_bits=256)
    ctx.pow_t(3 * 256)
    ctx.pow_t(3 * 256 + 1)
    assert 3 * 256 in ctx.power_cache
    assert 3 * 256 + 1 not in ctx.power_cache


@pytest.mark.parametrize("modulus, witness", [(0b101, 2), ((1 << 8) | 1, 8), (0b1111111, 3)])
def test_reducible_modulus_is_rejected(modulus, witness):
    # t^2+1 = (t+1)^2; t^8+1 = (t+1)^8; t^6+...+1 = (t^3+t+1)(t^3+t^2+1)
    with pytest.raises(ReducibleModulusError) as exc:
        new_context(modulus, page_bits=64)
    assert exc.value.witness in (witness, modulus.bit_length() - 1)


def test_context_arguments():
    with pytest.raises(ValueError):
        new_context(0b11, page_bits=64)
    with pytest.raises(ValueError):
        new_context(T3, page_bits=96)
    assert cached_context(T3, 64) is cached_context(T3, 64)


@pytest.mark.parametrize("nonzero", [1, 3, 200])
def test_hash_page_matches_polynomial(nonzero):
    ctx = cached_context(DEFAULT_MODULUS, 512 * 64)
    rng = random.Random(nonzero)
    page = np.zeros(512, dtype=np.uint64)
    for u in rng.sample(range(512), nonzero):
        page[u] = rng.randrange(1, 1 << 64)
    expected = poly_mod(as_int([page], 512 * 64), DEFAULT_MODULUS)
    assert hash_page(page, ctx).residue == expected


def test_hash_page_rejects_wrong_length():
    ctx = new_context(T7, page_bits=256)
    with pytest.raises(ValueError):
        hash_page(np.zeros(3, dtype=np.uint64), ctx)


def test_full_hash_of_zero_state():
    ctx = new_context(T7, page_bits=256)
    assert full_hash([None, np.zeros(4, dtype=np.uint64)], ctx) == ZERO
    assert not ZERO


def test_full_hash_matches_polynomial():
    ctx = new_context(T7, page_bits=256)
    rng = random.Random(3)
    pages = [np.array([rng.randrange(1 << 64) for _ in range(4)], dtype=np.uint64) for _ in range(5)]
    pages[2] = None
    assert full_hash(pages, ctx).residue == poly_mod(as_int(pages, 256), T7)


@pytest.mark.parametrize("modulus", [T7, DEFAULT_MODULUS])
def test_incremental_update_agrees_with_full_hash(modulus):
    ctx = new_context(modulus, page_bits=256)
    rng = random.Random(modulus & 0xFFFF)
    for _ in range(1000):
        pages = [np.zeros(4, dtype=np.uint64) for _ in range(6)]
        h = full_hash(pages, ctx)
        for _ in range(rng.randrange(1, 8)):
            indices = rng.sample(range(len(pages)), rng.randrange(1, 4))
            changes = []
            for i in indices:
                new = pages[i].copy()
                new[rng.randrange(4)] = rng.choice([0, rng.randrange(1 << 64)])
                changes.append((i, pages[i], new))
            h = incremental_update(h, changes, ctx)
            for i, _, new in changes:
                pages[i] = new
        assert h == full_hash(pages, ctx)


def test_incremental_update_rejects_duplicate_index():
    ctx = new_context(T7, page_bits=256)
    zero = np.zeros(4, dtype=np.uint64)
    with pytest.raises(ValueError):
        incremental_update(ZERO, [(1, zero, zero), (1, zero, zero)], ctx)


def test_page_term_positions_page():
    ctx = new_context(T7, page_bits=256)
    page = np.array([1, 0, 0, 0], dtype=np.uint64)
    assert page_term(2, page, ctx).residue == poly_mod(1 << 512, T7)


def test_fingerprint_rendering():
    fp = Fingerprint(0xABC)
    assert fp.hex() == "0" * 29 + "abc"
    assert fp.fp16 == "0" * 16
    assert str(fp) == fp.hex()


def test_trailing_zero_pages_do_not_change_the_hash():
    ctx = new_context(DEFAULT_MODULUS, page_bits=256)
    rng = random.Random(11)
    pages = [np.array([rng.randrange(1 << 64) for _ in range(4)], dtype=np.uint64) for _ in range(3)]
    h = full_hash(pages, ctx)
    assert full_hash(pages + [np.zeros(4, dtype=np.uint64)] * 3, ctx) == h
    assert full_hash(pages + [None, None], ctx) == h


def test_states_differing_in_one_page_hash_differently():
    ctx = new_context(DEFAULT_MODULUS, page_bits=256)
    rng = random.Random(5)
    for _ in range(1000):
        pages = [np.array([rng.randrange(1 << 64) for _ in range(4)], dtype=np.uint64) for _ in range(16)]
        other = [page.copy() for page in pages]
        index, word = rng.randrange(16), rng.randrange(4)
        other[index][word] ^= np.uint64(rng.randrange(1, 1 << 64))
        assert full_hash(pages, ctx) != full_hash(other, ctx)
