"""
Command implementations behind the ``genext`` console script.

Each ``cmd_*`` function returns a process exit code and writes to the given
streams, so tests can drive them without a subprocess.
"""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TextIO

from genext import bta as bta_mod
from genext.bench import make_benchmark, sample_delayed
from genext.conf import Settings, get_settings
from genext.errors import GenextError, InputError
from genext.fingerprint import cached_context
from genext.ir import (
    InputAssignment,
    Program,
    is_register,
    make_assignment,
    parse_program,
    parse_value,
    pretty_print,
    run_program,
)
from genext.residual import canonicalize_labels
from genext.specializer import SpecConfig, SpecializationResult, specialize
from genext.statestore import Metrics

logger = logging.getLogger(__name__)

GRID_CELLS = {
    "yes-yes": (True, True),
    "yes-no": (True, False),
    "no-yes": (False, True),
    "no-no": (False, False),
}


@dataclass
class EquivalenceVerdict:
    passed: bool
    samples: int
    failing_seed: int | None = None
    original_steps: float = 0.0
    residual_steps: float = 0.0


@dataclass
class RunReport:
    benchmark: str
    cow: bool
    fingerprint: bool
    metrics: Metrics
    original_instructions: int
    residual_instructions: int
    verdict: EquivalenceVerdict
    params: dict[str, Any] = field(default_factory=dict)
    residual: Program | None = field(default=None, repr=False)
    decisions: list[tuple[str, bool]] = field(default_factory=list, repr=False)

    @property
    def mode(self) -> str:
        return f"{'yes' if self.cow else 'no'}-{'yes' if self.fingerprint else 'no'}"

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "benchmark": self.benchmark,
            "mode": self.mode,
            "cow": self.cow,
            "fingerprint": self.fingerprint,
            **self.metrics.as_dict(),
            "original_instructions": self.original_instructions,
            "residual_instructions": self.residual_instructions,
            "original_steps": round(self.verdict.original_steps, 2),
            "residual_steps": round(self.verdict.residual_steps, 2),
            "samples": self.verdict.samples,
            "verdict": "pass" if self.verdict.passed else "fail",
        }
        if self.verdict.failing_seed is not None:
            data["failing_seed"] = self.verdict.failing_seed
        return data


def report(rr: RunReport, as_json: bool = False) -> str:
    """
    Render a RunReport.

    The machine block is ``key=value`` lines (or one JSON object); a short
    human-readable table follows the key=value form.
    """
    data = rr.as_dict()
    if as_json:
        return json.dumps(data, sort_keys=False) + "\n"
    lines = [f"{key}={str(value).lower() if isinstance(value, bool) else value}" for key, value in data.items()]
    m = rr.metrics
    lines.append(
        f"# {rr.benchmark:<10} [{rr.mode}] states={m.states_visited} dedup={m.dedup_hits} "
        f"pages={m.pages_allocated_total} live={m.live_pages_max} hashed={m.pages_hashed} "
        f"compared={m.words_compared} size {rr.original_instructions}->{rr.residual_instructions} "
        f"{data['verdict'].upper()}"
    )
    return "\n".join(lines) + "\n"


def check_equivalence(
    original: Program,
    residual: Program,
    supplied: InputAssignment,
    delayed_samples: Iterable[tuple[int, InputAssignment]],
    fuel: int,
) -> EquivalenceVerdict:
    """Run original and residual on each sample; outputs and r0 must match exactly."""
    count = 0
    original_steps = residual_steps = 0
    for seed, delayed in delayed_samples:
        count += 1
        expected = run_program(original, supplied.merge(delayed), fuel)
        actual = run_program(residual, delayed, fuel)
        original_steps += expected.steps
        residual_steps += actual.steps
        if (expected.tape, expected.r0) != (actual.tape, actual.r0):
            logger.warning("Residual diverges from the original for seed %d", seed)
            return EquivalenceVerdict(False, count, seed, original_steps / count, residual_steps / count)
    return EquivalenceVerdict(
        True,
        count,
        None,
        original_steps / count if count else 0.0,
        residual_steps / count if count else 0.0,
    )


def parse_grid(text: str, settings: Settings) -> list[tuple[bool, bool]]:
    """``all``, ``default`` or a comma list of ``<cow>-<fingerprint>`` cells such as ``yes-no``."""
    if text == "all":
        return list(GRID_CELLS.values())
    if text == "default":
        return [(settings.cow_enabled, settings.fingerprint_enabled)]
    cells = []
    for cell in text.split(","):
        cell = cell.strip().lower()
        if cell not in GRID_CELLS:
            raise InputError(f"unknown grid cell '{cell}'; use all, default or e.g. yes-no")
        cells.append(GRID_CELLS[cell])
    return cells


def parse_params(items: Sequence[str] | None) -> dict[str, dict[str, str]]:
    """Split ``name=value`` / ``bench.name=value`` items into per-benchmark overrides ('' = any)."""
    params: dict[str, dict[str, str]] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise InputError(f"expected name=value, got '{item}'")
        bench, _, name = key.rpartition(".")
        params.setdefault(bench, {})[name] = value
    return params


def parse_bindings(p: Program, items: Sequence[str] | None) -> InputAssignment:
    """Turn ``target=value`` items into an assignment; bare text for a region becomes a string."""
    values: dict[str, Any] = {}
    for item in items or ():
        target, sep, raw = item.partition("=")
        if not sep:
            raise InputError(f"expected target=value, got '{item}'")
        target = target.strip()
        try:
            value = parse_value(raw, p)
        except InputError:
            if is_register(target):
                raise
            value = tuple(ord(c) for c in raw) + (0,)
        values[target] = value
    return make_assignment(p, values)


def _read_program(path: str, settings: Settings) -> Program:
    text = Path(path).read_text(encoding="utf-8")
    return parse_program(text, settings.page_words, max_pages=settings.max_pages)


def run_benchmark(
    name: str,
    params: dict[str, Any],
    cow: bool,
    fingerprint: bool,
    *,
    samples: int,
    seed: int,
    settings: Settings,
    max_states: int | None = None,
) -> RunReport:
    """Specialize one benchmark in one grid cell and check the residual on sampled inputs."""
    b = make_benchmark(name, params, page_words=settings.page_words)
    _, result = bta_mod.analyze(b.program)
    config = SpecConfig.from_settings(
        settings, cow_enabled=cow, fingerprint_enabled=fingerprint, max_states=max_states
    )
    ctx = cached_context(settings.modulus, settings.page_bits)
    spec: SpecializationResult = specialize(b.program, result, b.supplied, config, ctx)
    verdict = check_equivalence(
        b.program,
        spec.residual,
        b.supplied,
        ((seed + i, sample_delayed(b, seed + i)) for i in range(samples)),
        settings.run_fuel,
    )
    return RunReport(
        benchmark=name,
        cow=cow,
        fingerprint=fingerprint,
        metrics=spec.metrics,
        original_instructions=b.program.instruction_count(),
        residual_instructions=spec.residual.instruction_count(),
        verdict=verdict,
        params=b.params,
        residual=spec.residual,
        decisions=spec.decisions,
    )


def cmd_bta(
    path: str,
    *,
    settings: Settings | None = None,
    out: TextIO | None = None,
    err: TextIO | None = None,
) -> int:
    settings = settings or get_settings()
    out, err = out or sys.stdout, err or sys.stderr
    p = _read_program(path, settings)
    g, result = bta_mod.analyze(p)
    out.write(bta_mod.format_classification(p, result))
    for problem in bta_mod.check_congruence(p, g, result):
        err.write(f"warning: {problem}\n")
    return 0


def cmd_run(
    path: str,
    inputs: Sequence[str] | None,
    *,
    settings: Settings | None = None,
    out: TextIO | None = None,
) -> int:
    settings = settings or get_settings()
    out = out or sys.stdout
    p = _read_program(path, settings)
    result = run_program(p, parse_bindings(p, inputs), settings.run_fuel)
    out.write(f"tape={','.join(str(w) for w in result.tape)}\n")
    out.write(f"r0={result.r0}\n")
    out.write(f"steps={result.steps}\n")
    return 0


def cmd_specialize(
    path: str,
    supplied: Sequence[str] | None,
    *,
    cow: bool | None = None,
    fingerprint: bool | None = None,
    max_states: int | None = None,
    output: str | None = None,
    canonical: bool = False,
    as_json: bool = False,
    settings: Settings | None = None,
    out: TextIO | None = None,
    err: TextIO | None = None,
) -> int:
    settings = settings or get_settings()
    out, err = out or sys.stdout, err or sys.stderr
    p = _read_program(path, settings)
    _, result = bta_mod.analyze(p)
    config = SpecConfig.from_settings(
        settings, cow_enabled=cow, fingerprint_enabled=fingerprint, max_states=max_states
    )
    assignment = parse_bindings(p, supplied)
    spec = specialize(p, result, assignment, config, cached_context(settings.modulus, settings.page_bits))
    residual = canonicalize_labels(spec.residual) if canonical else spec.residual
    text = pretty_print(residual)
    metrics_out = err
    if output:
        Path(output).write_text(text, encoding="utf-8")
        metrics_out = out
    else:
        out.write(text)
    metrics = {
        **spec.metrics.as_dict(),
        "original_instructions": p.instruction_count(),
        "residual_instructions": residual.instruction_count(),
    }
    if as_json:
        metrics_out.write(json.dumps(metrics) + "\n")
    else:
        metrics_out.write("".join(f"{k}={v}\n" for k, v in metrics.items()))
    return 0


def cmd_bench(
    names: Sequence[str],
    *,
    grid: str = "default",
    params: Sequence[str] | None = None,
    samples: int | None = None,
    seed: int | None = None,
    max_states: int | None = None,
    cow: bool | None = None,
    fingerprint: bool | None = None,
    as_json: bool = False,
    settings: Settings | None = None,
    out: TextIO | None = None,
) -> int:
    """
    Run each benchmark in each requested grid cell; 0 iff every equivalence check passed.

    ``cow`` / ``fingerprint`` pin that half of every cell, so ``--no-cow`` on the
    default grid runs the no-CoW cell.
    """
    settings = settings or get_settings()
    out = out or sys.stdout
    cells = parse_grid(grid, settings)
    cells = list(
        dict.fromkeys(
            (c if cow is None else cow, f if fingerprint is None else fingerprint) for c, f in cells
        )
    )
    overrides = parse_params(params)
    unknown = set(overrides) - set(names) - {""}
    if unknown:
        raise InputError(f"parameters given for benchmarks not being run: {', '.join(sorted(unknown))}")
    samples = settings.equivalence_samples if samples is None else samples
    if samples <= 0:
        raise InputError(f"samples must be positive, got {samples}")
    seed = settings.seed if seed is None else seed

    status = 0
    for name in names:
        bench_params = {**overrides.get("", {}), **overrides.get(name, {})}
        for cell_cow, cell_fingerprint in cells:
            rr = run_benchmark(
                name,
                bench_params,
                cell_cow,
                cell_fingerprint,
                samples=samples,
                seed=seed,
                settings=settings,
                max_states=max_states,
            )
            out.write(report(rr, as_json))
            if not rr.verdict.passed:
                status = 1
    return status


def guarded(func, *args, err: TextIO | None = None, **kwargs) -> int:
    """Call a command, turning library errors into an ``error:`` line and status 1."""
    try:
        return func(*args, **kwargs)
    except (GenextError, OSError) as e:
        (err or sys.stderr).write(f"error: {e}\n")
        return 1
