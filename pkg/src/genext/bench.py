"""
Microbenchmarks for the specializer.

Program texts live next to this module as ``benchmarks/<name>.ir``; every
parameter reaches the program through a supplied input, so the shipped
files are the exact programs that get specialized.
"""

from __future__ import annotations

import logging
import random
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from importlib.resources import files
from typing import Any

from genext.errors import BenchmarkError
from genext.ir import (
    DEFAULT_PAGE_WORDS,
    WORD_MASK,
    InputAssignment,
    Program,
    parse_program,
)

logger = logging.getLogger(__name__)

Sampler = Callable[[random.Random], InputAssignment]


@dataclass(frozen=True)
class Param:
    default: int | str
    low: int
    high: int
    help: str

    def coerce(self, name: str, value: Any) -> int | str:
        if isinstance(self.default, str):
            text = str(value)
            if not self.low <= len(text) <= self.high:
                raise BenchmarkError(f"{name} must have between {self.low} and {self.high} characters")
            return text
        try:
            number = int(value)
        except (TypeError, ValueError):
            raise BenchmarkError(f"{name} must be an integer, got {value!r}")
        if not self.low <= number <= self.high:
            raise BenchmarkError(f"{name} must be between {self.low} and {self.high}, got {number}")
        return number


@dataclass
class Benchmark:
    name: str
    params: dict[str, int | str]
    source: str
    program: Program
    supplied: InputAssignment
    sampler: Sampler = field(repr=False)
    description: str = ""


def load_source(name: str) -> str:
    """Text of the shipped ``<name>.ir`` program."""
    resource = files("genext").joinpath("benchmarks", f"{name}.ir")
    if not resource.is_file():
        raise BenchmarkError(f"Unknown benchmark '{name}'")
    return resource.read_text(encoding="utf-8")


def _random_words(rng: random.Random, count: int, bound: int = 1 << 64) -> tuple[int, ...]:
    return tuple(rng.randrange(bound) for _ in range(count))


def _power(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    supplied = InputAssignment(registers={"r1": params["n"]})

    def sample(rng: random.Random) -> InputAssignment:
        return InputAssignment(registers={"r2": rng.randrange(1 << 64)})

    return supplied, sample


def _dotproduct(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    n = params["n"]
    coefficients = tuple((7 * i + 3) % 17 for i in range(n))
    supplied = InputAssignment(registers={"r3": n}, regions={"a": coefficients})

    def sample(rng: random.Random) -> InputAssignment:
        return InputAssignment(regions={"b": _random_words(rng, n, 1 << 32)})

    return supplied, sample


def _filter(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    width, height = params["width"], params["height"]
    supplied = InputAssignment(
        registers={"r12": width, "r13": height},
        regions={"k": (1, 2, 1, 2, 4, 2, 1, 2, 1)},
    )

    def sample(rng: random.Random) -> InputAssignment:
        return InputAssignment(regions={"img": _random_words(rng, width * height, 256)})

    return supplied, sample


def _matcher(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    pattern = params["pattern"]
    alphabet = params["alphabet"]
    length = params["length"]
    supplied = InputAssignment(regions={"pat": tuple(ord(c) for c in pattern) + (0,)})
    string_base = program.region("str").base

    def sample(rng: random.Random) -> InputAssignment:
        text = "".join(rng.choice(alphabet) for _ in range(length))
        return InputAssignment(
            registers={"r1": string_base},
            regions={"str": tuple(ord(c) for c in text) + (0,)},
        )

    return supplied, sample


def _stack(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    stride = program.page_words
    if params["pages"] * stride > program.region("stack").words:
        raise BenchmarkError(f"pages must fit the {program.region('stack').words}-word stack region")
    supplied = InputAssignment(
        registers={"r1": params["steps"], "r6": params["pages"], "r7": params["n"], "r8": stride}
    )

    def sample(rng: random.Random) -> InputAssignment:
        return InputAssignment(registers={"r2": rng.randrange(1 << 64)})

    return supplied, sample


def _mix(program: Program, params: dict) -> tuple[InputAssignment, Sampler]:
    bits = params["bits"]
    if bits % 128:
        raise BenchmarkError(f"bits must be a multiple of 128, got {bits}")
    half = bits // 128
    head = tuple((0x0123456789ABCDEF * (i + 1)) & WORD_MASK for i in range(half))
    supplied = InputAssignment(registers={"r10": half, "r11": half}, regions={"head": head})

    def sample(rng: random.Random) -> InputAssignment:
        return InputAssignment(regions={"tail": _random_words(rng, half)})

    return supplied, sample


@dataclass(frozen=True)
class _Entry:
    description: str
    params: dict[str, Param]
    build: Callable[[Program, dict], tuple[InputAssignment, Sampler]]


BENCHMARKS: dict[str, _Entry] = {
    "power": _Entry(
        "Computes x^n; n supplied, x delayed",
        {"n": Param(16, 0, 1024, "exponent")},
        _power,
    ),
    "dotproduct": _Entry(
        "Dot product; coefficients of the first vector and n supplied, second vector delayed",
        {"n": Param(8, 1, 256, "vector length")},
        _dotproduct,
    ),
    "filter": _Entry(
        "3x3 convolution; kernel supplied, image delayed",
        {"width": Param(8, 3, 32, "image width"), "height": Param(8, 3, 32, "image height")},
        _filter,
    ),
    "matcher": _Entry(
        "Naive substring matching; pattern supplied, string delayed",
        {
            "pattern": Param("hat", 0, 63, "pattern text"),
            "alphabet": Param("hatx", 1, 64, "characters of sampled strings"),
            "length": Param(32, 0, 63, "length of sampled strings"),
        },
        _matcher,
    ),
    "stack": _Entry(
        "Writes every stack page n times per outer step",
        {
            "pages": Param(16, 1, 16, "stack pages written per pass"),
            "n": Param(4, 1, 64, "passes per outer step"),
            "steps": Param(4, 1, 64, "outer steps"),
        },
        _stack,
    ),
    "mix": _Entry(
        "Multiply-xorshift mixing; first half of the message supplied, second half delayed",
        {"bits": Param(512, 128, 1024, "message size in bits")},
        _mix,
    ),
}


def make_benchmark(
    name: str, params: Mapping[str, Any] | None = None, page_words: int = DEFAULT_PAGE_WORDS
) -> Benchmark:
    """
    Build a benchmark instance.

    Args:
        name: One of power, dotproduct, filter, matcher, stack, mix.
        params: Overrides for the benchmark's documented parameters.
        page_words: Words per page for the parsed program.

    Returns:
        The program with its supplied assignment and a seeded delayed-input sampler.
    """
    entry = BENCHMARKS.get(name)
    if entry is None:
        raise BenchmarkError(f"Unknown benchmark '{name}'. Available: {', '.join(BENCHMARKS)}")
    params = dict(params or {})
    unknown = set(params) - set(entry.params)
    if unknown:
        raise BenchmarkError(f"{name} has no parameter(s) {', '.join(sorted(unknown))}")
    resolved = {key: spec.coerce(key, params.get(key, spec.default)) for key, spec in entry.params.items()}

    source = load_source(name)
    program = parse_program(source, page_words)
    supplied, sampler = entry.build(program, resolved)
    logger.debug("Benchmark %s with %s", name, resolved)
    return Benchmark(
        name=name,
        params=resolved,
        source=source,
        program=program,
        supplied=supplied,
        sampler=sampler,
        description=entry.description,
    )


def sample_delayed(b: Benchmark, seed: int) -> InputAssignment:
    """Deterministic delayed inputs for ``b``."""
    return b.sampler(random.Random(seed))


def list_benchmarks() -> list[dict[str, Any]]:
    return [
        {
            "name": name,
            "description": entry.description,
            "params": {
                key: {"default": spec.default, "min": spec.low, "max": spec.high, "help": spec.help}
                for key, spec in entry.params.items()
            },
        }
        for name, entry in BENCHMARKS.items()
    ]
