import logging
import sys

from genext import cli
from genext.conf import configure
from genext.errors import GenextError
from genext.server_fastmcp import run_server


def _flag(choice: str | None, disabled: bool) -> bool | None:
    if disabled:
        return False
    return None if choice is None else choice == "yes"


def main(argv: list[str] | None = None) -> int:
    """Entry point for the genext CLI."""
    import argparse

    parser = argparse.ArgumentParser(description="Generating-extension specializer")
    parser.add_argument(
        "--settings",
        help="Settings module overriding the defaults (e.g., example_settings)",
        default=None,
    )
    parser.add_argument(
        "--log-level",
        help="Logging level (default: LOG_LEVEL from settings)",
        default=None,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bta = sub.add_parser("bta", help="Print the binding-time classification of a program")
    bta.add_argument("program", help="Path to a .ir program")

    run = sub.add_parser("run", help="Execute a program on the reference interpreter")
    run.add_argument("program", help="Path to a .ir program")
    run.add_argument(
        "--input",
        action="append",
        metavar="TARGET=VALUE",
        help="Input value for a register or region (repeatable)",
    )

    spec = sub.add_parser("specialize", help="Specialize a program to its supplied inputs")
    spec.add_argument("program", help="Path to a .ir program")
    spec.add_argument(
        "--supplied",
        action="append",
        metavar="TARGET=VALUE",
        help="Supplied input value (repeatable); bare text for a region is a string",
    )
    spec.add_argument("-o", "--output", help="Write the residual program to this file")
    spec.add_argument("--cow", choices=["yes", "no"], default=None, help="Copy-on-write snapshots")
    spec.add_argument("--fingerprint", choices=["yes", "no"], default=None, help="Fingerprint deduplication")
    spec.add_argument("--no-cow", action="store_true", help="Shorthand for --cow no")
    spec.add_argument("--no-fingerprint", action="store_true", help="Shorthand for --fingerprint no")
    spec.add_argument("--max-states", type=int, default=None, help="State budget")
    spec.add_argument("--canonical", action="store_true", help="Rename residual labels to S0, S1, ...")
    spec.add_argument("--json", action="store_true", help="Print metrics as JSON")

    bench = sub.add_parser("bench", help="Run benchmarks and check their residuals")
    bench.add_argument("names", nargs="+", help="Benchmark names (power, dotproduct, filter, matcher, stack, mix)")
    bench.add_argument(
        "--grid",
        default="default",
        help="all, default, or cells like yes-no,no-yes (<cow>-<fingerprint>)",
    )
    bench.add_argument(
        "--param",
        action="append",
        metavar="[BENCH.]NAME=VALUE",
        help="Benchmark parameter override (repeatable)",
    )
    bench.add_argument("--samples", type=int, default=None, help="Equivalence samples per run")
    bench.add_argument("--seed", type=int, default=None, help="First sampling seed")
    bench.add_argument("--max-states", type=int, default=None, help="State budget")
    bench.add_argument("--no-cow", action="store_true", help="Run only grid cells without copy-on-write")
    bench.add_argument(
        "--no-fingerprint", action="store_true", help="Run only grid cells without fingerprint deduplication"
    )
    bench.add_argument("--json", action="store_true", help="One JSON object per run")

    serve = sub.add_parser("serve", help="Run the MCP server")
    serve.add_argument(
        "--transport",
        choices=["stdio", "sse"],
        default="stdio",
        help="Transport type (default: stdio)",
    )
    serve.add_argument(
        "--host",
        default="127.0.0.1",
        help="Host to bind to for SSE transport (default: 127.0.0.1)",
    )
    serve.add_argument(
        "--port",
        type=int,
        default=8000,
        help="Port to bind to for SSE transport (default: 8000)",
    )

    args = parser.parse_args(argv)

    try:
        settings = configure(args.settings)
    except GenextError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "serve":
        run_server(
            settings_module=args.settings,
            transport=args.transport,
            host=args.host,
            port=args.port,
        )
        return 0

    if args.command == "bta":
        return cli.guarded(cli.cmd_bta, args.program, settings=settings)
    if args.command == "run":
        return cli.guarded(cli.cmd_run, args.program, args.input, settings=settings)
    if args.command == "specialize":
        return cli.guarded(
            cli.cmd_specialize,
            args.program,
            args.supplied,
            cow=_flag(args.cow, args.no_cow),
            fingerprint=_flag(args.fingerprint, args.no_fingerprint),
            max_states=args.max_states,
            output=args.output,
            canonical=args.canonical,
            as_json=args.json,
            settings=settings,
        )
    return cli.guarded(
        cli.cmd_bench,
        args.names,
        grid=args.grid,
        params=args.param,
        samples=args.samples,
        seed=args.seed,
        max_states=args.max_states,
        cow=False if args.no_cow else None,
        fingerprint=False if args.no_fingerprint else None,
        as_json=args.json,
        settings=settings,
    )
