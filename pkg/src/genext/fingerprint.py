"""
Rabin fingerprints of paged state over GF(2).

A state is read as one long polynomial: page ``i`` word ``u`` bit ``b`` is
the coefficient of t^(i*w + 64*u + b), ``w`` being the page size in bits.
Its fingerprint is that polynomial reduced modulo an irreducible P(t) of
degree ``k``. Polynomials are plain Python ints (bit j is the coefficient
of t^j); pages are numpy uint64 arrays.
"""

from __future__ import annotations

import functools
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from genext.errors import ReducibleModulusError

logger = logging.getLogger(__name__)

DEFAULT_MODULUS = (1 << 127) | 0b11
DEFAULT_PAGE_BITS = 512 * 64
MAX_DEGREE = 128

PageBits = np.ndarray

_TERM_RE = re.compile(r"^(?:[tx](?:\^(\d+))?|([01]))$")


def parse_modulus(text: str) -> int:
    """
    Parse a modulus written as a polynomial (``t^127+t+1``) or as hex/decimal.

    Returns:
        The modulus as an int whose bit j is the coefficient of t^j.
    """
    text = text.replace(" ", "")
    if not text:
        raise ValueError("empty modulus")
    if re.fullmatch(r"0[xX][0-9a-fA-F]+|\d+", text):
        return int(text, 0)
    value = 0
    for term in text.split("+"):
        m = _TERM_RE.match(term)
        if not m:
            raise ValueError(f"bad polynomial term '{term}'")
        exponent_text, constant = m.groups()
        if constant is not None:
            if constant == "0":
                continue
            exponent = 0
        else:
            exponent = int(exponent_text) if exponent_text is not None else 1
        value ^= 1 << exponent
    return value


def format_poly(value: int) -> str:
    """Render ``t^3+t+1``-style text for an int polynomial."""
    if value == 0:
        return "0"
    terms = []
    for exponent in range(value.bit_length() - 1, -1, -1):
        if value >> exponent & 1:
            terms.append("1" if exponent == 0 else "t" if exponent == 1 else f"t^{exponent}")
    return "+".join(terms)


def clmul(a: int, b: int) -> int:
    """Carry-less product of two polynomials."""
    if a.bit_count() > b.bit_count():
        a, b = b, a
    result = 0
    while a:
        low = a & -a
        result ^= b << (low.bit_length() - 1)
        a ^= low
    return result


def poly_mod(a: int, m: int) -> int:
    """Remainder of ``a`` divided by ``m`` by long division."""
    m_len = m.bit_length()
    while a.bit_length() >= m_len:
        a ^= m << (a.bit_length() - m_len)
    return a


def poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def _prime_factors(n: int) -> list[int]:
    factors = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            factors.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        factors.append(n)
    return factors


@dataclass(frozen=True)
class Fingerprint:
    residue: int = 0

    def hex(self) -> str:
        return f"{self.residue:032x}"

    @property
    def fp16(self) -> str:
        return self.hex()[:16]

    def __bool__(self) -> bool:
        return self.residue != 0

    def __str__(self) -> str:
        return self.hex()


ZERO = Fingerprint(0)


@dataclass(eq=False)
class FingerprintContext:
    """
    Modulus, page size and the precomputed tables that define H.

    Build one with new_context(); the constructor does not check irreducibility.
    """

    modulus: int
    page_bits: int = DEFAULT_PAGE_BITS
    power_cache: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.degree = self.modulus.bit_length() - 1
        self.mask = (1 << self.degree) - 1
        self.page_words = max(1, self.page_bits // 64)
        self._folds = self._fold_tables()
        self._word_powers: dict[int, int] = {}

    def _fold_tables(self) -> list[list[int]]:
        # fold[j][b] = b * t^(k + 8j) mod P, for every byte value b.
        k = self.degree
        x = self.modulus ^ (1 << k)
        singles: list[int] = []
        for _ in range(MAX_DEGREE):
            singles.append(x)
            x <<= 1
            if x >> k & 1:
                x ^= self.modulus
        tables = []
        for j in range(MAX_DEGREE // 8):
            table = [0] * 256
            for b in range(1, 256):
                low = b & -b
                table[b] = table[b ^ low] ^ singles[8 * j + low.bit_length() - 1]
            tables.append(table)
        return tables

    def reduce(self, value: int) -> int:
        """``value`` mod P, for any value below t^(k+128)."""
        k = self.degree
        while value >> k:
            high = value >> k
            value &= self.mask
            j = 0
            while high:
                value ^= self._folds[j][high & 0xFF]
                high >>= 8
                j += 1
        return value

    def mul(self, a: int, b: int) -> int:
        return self.reduce(clmul(a, b))

    def pow_t(self, e: int) -> int:
        if e < 0:
            raise ValueError("exponent must be non-negative")
        if e < self.degree:
            return 1 << e
        cached = self.power_cache.get(e)
        if cached is not None:
            return cached
        result = 1
        for bit in bin(e)[2:]:
            result = self.mul(result, result)
            if bit == "1":
                result <<= 1
                if result >> self.degree:
                    result ^= self.modulus
        if e % self.page_bits == 0:
            self.power_cache[e] = result
        return result

    def _word_power(self, u: int) -> int:
        power = self._word_powers.get(u)
        if power is None:
            power = self._word_powers[u] = self.pow_t(64 * u)
        return power

    def hash_words(self, words: np.ndarray) -> int:
        """Residue of one page-local polynomial given as uint64 words."""
        if len(words) != self.page_words:
            raise ValueError(f"page must hold {self.page_words} words, got {len(words)}")
        if self.page_bits < 64 and int(words[0]) >> self.page_bits:
            raise ValueError(f"page value exceeds {self.page_bits} bits")
        nonzero = np.flatnonzero(words)
        if len(nonzero) == 0:
            return 0
        top = int(nonzero[-1])
        if len(nonzero) * 8 < top:
            # sparse page: sum of positioned words
            h = 0
            for u in nonzero:
                h ^= self.mul(int(words[u]), self._word_power(int(u)))
            return h
        h = 0
        for word in words[top::-1]:
            h = self.reduce((h << 64) ^ int(word))
        return h

    def is_irreducible(self) -> tuple[bool, int]:
        """
        Rabin's test: P is irreducible iff t^(2^k) = t mod P and
        gcd(t^(2^(k/q)) - t, P) = 1 for every prime q dividing k.

        Returns:
            (passed, witness exponent of the first failing check or 0).
        """
        k = self.degree

        def frobenius(n: int) -> int:
            x = 2
            for _ in range(n):
                x = self.mul(x, x)
            return x

        if frobenius(k) != self.reduce(2):
            return False, k
        for q in _prime_factors(k):
            if poly_gcd(self.modulus, frobenius(k // q) ^ 2) != 1:
                return False, k // q
        return True, 0


def new_context(modulus: int = DEFAULT_MODULUS, page_bits: int = DEFAULT_PAGE_BITS) -> FingerprintContext:
    """
    Create a fingerprint context after checking the modulus.

    Args:
        modulus: P(t) as an int; degree between 2 and 128.
        page_bits: Bits per page, a power of two.

    Returns:
        A context whose modulus passed the irreducibility test.
    """
    k = modulus.bit_length() - 1
    if not 2 <= k <= MAX_DEGREE:
        raise ValueError(f"modulus degree must be between 2 and {MAX_DEGREE}, got {k}")
    if page_bits <= 0 or page_bits & (page_bits - 1):
        raise ValueError(f"page_bits must be a power of two, got {page_bits}")
    ctx = FingerprintContext(modulus=modulus, page_bits=page_bits)
    passed, witness = ctx.is_irreducible()
    if not passed:
        raise ReducibleModulusError(
            f"modulus {format_poly(modulus)} is reducible (check at t^(2^{witness}) failed)",
            witness,
        )
    logger.debug("Fingerprint context: degree %d, %d-bit pages", k, page_bits)
    return ctx


def add(a: Fingerprint, b: Fingerprint) -> Fingerprint:
    return Fingerprint(a.residue ^ b.residue)


def mul_mod(a: Fingerprint, b: Fingerprint, ctx: FingerprintContext) -> Fingerprint:
    return Fingerprint(ctx.mul(a.residue, b.residue))


def pow_t_mod(e: int, ctx: FingerprintContext) -> Fingerprint:
    """t^e mod P by square-and-multiply; page-aligned exponents are memoized."""
    return Fingerprint(ctx.pow_t(e))


def hash_page(page: PageBits, ctx: FingerprintContext) -> Fingerprint:
    return Fingerprint(ctx.hash_words(page))


def page_term(i: int, page: PageBits, ctx: FingerprintContext) -> Fingerprint:
    """The fingerprint of ``page`` placed at page index ``i``."""
    h = ctx.hash_words(page)
    if h == 0 or i == 0:
        return Fingerprint(h)
    return Fingerprint(ctx.mul(ctx.pow_t(i * ctx.page_bits), h))


def incremental_update(
    h: Fingerprint,
    changes: Iterable[tuple[int, PageBits, PageBits]],
    ctx: FingerprintContext,
) -> Fingerprint:
    """
    Update a state fingerprint for a set of page rewrites.

    Args:
        h: Fingerprint of the state before the rewrites.
        changes: (page index, old page, new page) triples, one per index.
        ctx: The fingerprint context.

    Returns:
        Fingerprint of the rewritten state.
    """
    residue = h.residue
    seen: set[int] = set()
    for i, old, new in changes:
        if i in seen:
            raise ValueError(f"page {i} listed twice in changes")
        seen.add(i)
        residue ^= page_term(i, old, ctx).residue ^ page_term(i, new, ctx).residue
    return Fingerprint(residue)


def full_hash(pages: Sequence[PageBits | None], ctx: FingerprintContext) -> Fingerprint:
    """Fingerprint of a whole address space; ``None`` pages are all-zero."""
    residue = 0
    for i, page in enumerate(pages):
        if page is not None:
            residue ^= page_term(i, page, ctx).residue
    return Fingerprint(residue)


@functools.lru_cache(maxsize=8)
def cached_context(modulus: int = DEFAULT_MODULUS, page_bits: int = DEFAULT_PAGE_BITS) -> FingerprintContext:
    """new_context() memoized per (modulus, page size)."""
    return new_context(modulus, page_bits)
