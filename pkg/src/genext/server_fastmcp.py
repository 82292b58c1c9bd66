from __future__ import annotations

import logging
from typing import Any

from fastmcp import FastMCP

from genext import bench
from genext import bta as bta_mod
from genext import cli
from genext.conf import configure, get_settings
from genext.errors import GenextError
from genext.fingerprint import cached_context
from genext.ir import parse_program, pretty_print
from genext.ir import run_program as interpret
from genext.specializer import SpecConfig, specialize

logger = logging.getLogger(__name__)

# Initialize FastMCP server
mcp = FastMCP("genext specializer")


def _bindings(values: dict[str, str] | None) -> list[str]:
    return [f"{target}={value}" for target, value in (values or {}).items()]


@mcp.tool()
async def analyze_program(source: str) -> dict[str, Any]:
    """
    Run binding-time analysis on a program.

    Args:
        source: Program text in the genext IR.

    Returns:
        Dictionary with the per-instruction classification, lifted definitions
        and congruence warnings, or an error message.
    """
    settings = get_settings()
    try:
        p = parse_program(source, settings.page_words, max_pages=settings.max_pages)
        g, result = bta_mod.analyze(p)
    except GenextError as e:
        return {"error": f"Analysis failed: {e}"}

    return {
        "program": p.name,
        "classification": bta_mod.format_classification(p, result).splitlines(),
        "delayed_count": len(result.delayed),
        "instruction_count": len(result.classification),
        "delayed_regions": sorted(result.delayed_regions),
        "warnings": bta_mod.check_congruence(p, g, result),
    }


@mcp.tool()
async def run_program(source: str, inputs: dict[str, str] | None = None) -> dict[str, Any]:
    """
    Execute a program on the reference interpreter.

    Args:
        source: Program text in the genext IR.
        inputs: Values keyed by register or region name (e.g., {"r1": "5", "pat": "\\"hat\\""})

    Returns:
        Dictionary with the output tape, final r0 and executed instruction count.
    """
    settings = get_settings()
    try:
        p = parse_program(source, settings.page_words, max_pages=settings.max_pages)
        result = interpret(p, cli.parse_bindings(p, _bindings(inputs)), settings.run_fuel)
    except GenextError as e:
        return {"error": f"Execution failed: {e}"}
    return {"tape": list(result.tape), "r0": result.r0, "steps": result.steps}


@mcp.tool()
async def specialize_program(
    source: str,
    supplied: dict[str, str] | None = None,
    cow: bool | None = None,
    fingerprint: bool | None = None,
    max_states: int | None = None,
) -> dict[str, Any]:
    """
    Specialize a program to values for its supplied inputs.

    Args:
        source: Program text in the genext IR.
        supplied: Values for every supplied input, keyed by register or region name.
        cow: Copy-on-write snapshots (default from settings).
        fingerprint: Fingerprint deduplication (default from settings).
        max_states: State budget (default from settings).

    Returns:
        Dictionary with the residual program text and the run's metrics.
    """
    settings = get_settings()
    try:
        p = parse_program(source, settings.page_words, max_pages=settings.max_pages)
        _, result = bta_mod.analyze(p)
        config = SpecConfig.from_settings(
            settings, cow_enabled=cow, fingerprint_enabled=fingerprint, max_states=max_states
        )
        spec = specialize(
            p,
            result,
            cli.parse_bindings(p, _bindings(supplied)),
            config,
            cached_context(settings.modulus, settings.page_bits),
        )
    except GenextError as e:
        return {"error": f"Specialization failed: {e}"}

    return {
        "residual": pretty_print(spec.residual),
        "entry": spec.entry_label,
        "mode": config.mode,
        "metrics": spec.metrics.as_dict(),
        "original_instructions": p.instruction_count(),
        "residual_instructions": spec.residual.instruction_count(),
    }


@mcp.tool()
async def list_benchmarks() -> list[dict[str, Any]]:
    """
    List the shipped benchmarks with their parameters and defaults.

    Returns:
        List of benchmark descriptions.
    """
    return bench.list_benchmarks()


@mcp.tool()
async def run_benchmark(
    name: str,
    params: dict[str, Any] | None = None,
    cow: bool = True,
    fingerprint: bool = True,
    samples: int | None = None,
    seed: int | None = None,
) -> dict[str, Any]:
    """
    Specialize a benchmark and check its residual against the original.

    Args:
        name: Benchmark name (e.g., "power", "matcher")
        params: Optional parameter overrides (e.g., {"n": 64})
        cow: Copy-on-write snapshots.
        fingerprint: Fingerprint deduplication.
        samples: Number of sampled delayed inputs (default from settings).
        seed: First sampling seed (default from settings).

    Returns:
        The run report as a dictionary, or an error message.
    """
    settings = get_settings()
    try:
        rr = cli.run_benchmark(
            name,
            params or {},
            cow,
            fingerprint,
            samples=settings.equivalence_samples if samples is None else samples,
            seed=settings.seed if seed is None else seed,
            settings=settings,
        )
    except GenextError as e:
        return {"error": f"Benchmark failed: {e}"}
    return {**rr.as_dict(), "params": rr.params}


@mcp.prompt()
async def explain_residual(benchmark: str) -> str:
    """
    Generate a prompt asking for a walkthrough of a benchmark's residual program.

    Args:
        benchmark: Benchmark name (e.g., "power", "matcher", "filter")

    Returns:
        A prompt containing the original program, its residual and the run metrics.
    """
    settings = get_settings()
    try:
        b = bench.make_benchmark(benchmark, page_words=settings.page_words)
        _, result = bta_mod.analyze(b.program)
        spec = specialize(
            b.program,
            result,
            b.supplied,
            SpecConfig.from_settings(settings),
            cached_context(settings.modulus, settings.page_bits),
        )
    except GenextError as e:
        return f"The {benchmark} benchmark could not be specialized: {e}"

    metrics = "\n".join(f"{k}={v}" for k, v in spec.metrics.as_dict().items())
    return f"""I specialized the "{benchmark}" benchmark ({b.description}) with parameters {b.params}.

Original program:
```
{b.source.rstrip()}
```

Binding-time classification:
```
{bta_mod.format_classification(b.program, result).rstrip()}
```

Residual program:
```
{pretty_print(spec.residual).rstrip()}
```

Specializer metrics:
```
{metrics}
```

Please explain:
1. Which computations were performed at specialization time and which remain in the residual
2. Which constants in the residual were lifted from supplied values
3. How the residual's control flow relates to the original loops and branches
4. Why the residual is (or is not) expected to run faster than the original"""


def run_server(
    settings_module: str | None = None,
    transport: str = "stdio",
    host: str = "127.0.0.1",
    port: int = 8000,
):
    """
    Run the genext MCP server.

    Args:
        settings_module: Settings override module path
        transport: Transport type (stdio or sse)
        host: Host to bind to for SSE transport (default: 127.0.0.1)
        port: Port to bind to for SSE transport (default: 8000)
    """
    configure(settings_module)

    if transport == "sse":
        mcp.run(transport=transport, host=host, port=port)
    else:
        mcp.run(transport=transport)


if __name__ == "__main__":
    run_server()
