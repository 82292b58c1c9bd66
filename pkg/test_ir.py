"""
Tests for the IR: parsing, validation, printing and the reference interpreter.
"""

from pathlib import Path

import pytest

from genext.bench import BENCHMARKS, load_source
from genext.errors import FuelExhausted, InputError, MachineFault, ParseError
from genext.ir import (
    Address,
    BindingTime,
    InputAssignment,
    Opcode,
    RegionClass,
    cfg,
    check_assignment,
    make_assignment,
    parse_program,
    parse_value,
    pretty_print,
    run_program,
    validate,
)

PROGRAMS = Path(__file__).parent / "fixtures" / "programs"


def load(name: str, page_words: int = 512):
    return parse_program((PROGRAMS / name).read_text(), page_words)


def test_parse_power():
    p = parse_program(load_source("power"))
    assert p.name == "power"
    assert p.entry == "L1"
    assert p.labels == ("L1", "L2", "L3", "L4")
    assert [b.target for b in p.input_spec] == ["r1", "r2"]
    assert p.binding("r2").cls is BindingTime.DELAYED

    store = p.block("L3").instructions[2]
    assert store.opcode is Opcode.STORE
    assert store.addr == Address("r9", 0)
    assert store.src == "r1"
    assert store.line == 15


def test_region_layout_is_page_aligned():
    p = parse_program(load_source("matcher"), page_words=64)
    pat, string, stack = p.regions
    assert (pat.base, string.base, stack.base) == (0, 64, 128)
    assert stack.cls is RegionClass.SCRATCH
    assert p.page_count == 2 + 8192 // 64
    assert p.region_at(65) is string
    assert p.region_at(64 + 64 + 8192) is None


def test_region_lookup_index_is_built_once():
    p = parse_program(load_source("matcher"), page_words=64)
    index = p._regions_by_base
    assert [p.region_at(a).name for a in (0, 63, 64, 128, 128 + 8191)] == ["pat", "pat", "str", "stack", "stack"]
    assert p._regions_by_base is index


def test_immediates():
    p = parse_program(
        """
        program imm
        region buf scratch words=4
        block L1:
          const r1, -1
          const r2, 0x10
          const r3, 'h'
          const r4, &buf
          halt
        """
    )
    values = [i.src for i in p.block("L1").body]
    assert values == [(1 << 64) - 1, 16, ord("h"), 0]
    assert p.block("L1").instructions[3].symbol == "&buf"


def test_character_literal_hash_is_not_a_comment():
    p = parse_program("program c\nblock L1:\n  const r1, '#'\n  halt\n")
    assert p.block("L1").instructions[0].src == ord("#")


def test_entry_directive():
    p = parse_program("program e\nentry L2\nblock L1:\n  halt\nblock L2:\n  jmp L1\n")
    assert p.entry == "L2"
    assert "entry L2" in pretty_print(p)


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_pretty_print_round_trips(name):
    p = parse_program(load_source(name))
    text = pretty_print(p)
    again = parse_program(text)
    assert again == p
    assert pretty_print(again) == text


def test_unknown_label_reports_instruction_position():
    with pytest.raises(ParseError) as exc:
        parse_program("program p\nblock L1:\n  jmp L99\n")
    assert "unknown label L99" in str(exc.value)
    assert (exc.value.line, exc.value.column) == (3, 3)


def test_missing_terminator_reports_block_line():
    with pytest.raises(ParseError) as exc:
        parse_program("program p\nblock L1:\n  const r1, 1\nblock L2:\n  halt\n")
    assert "missing terminator" in exc.value.message
    assert exc.value.line == 2


def test_bad_operand_column():
    with pytest.raises(ParseError) as exc:
        parse_program("program p\nblock L1:\n  add r1, zz\n  halt\n")
    assert (exc.value.line, exc.value.column) == (3, 11)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("block L1:\n  halt\n", "missing 'program <name>'"),
        ("program p\nblock L1:\n  frob r1\n", "unknown opcode"),
        ("program p\nblock L1:\n  halt\n  halt\n", "instruction after terminator"),
        ("program p\nblock L1:\n  halt\nblock L1:\n  halt\n", "duplicate label"),
        ("program p\nregion a supplied words=4\nblock L1:\n  halt\n", "no input binding"),
        ("program p\nregion a weird words=4\nblock L1:\n  halt\n", "unknown region class"),
        ("program p\nblock L1:\n  load r1, r2\n  halt\n", "malformed address"),
        ("program p\nblock L1:\n  jz r1, L1\n", "takes 3 operands"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse_program(text)


def test_unchecked_parse_returns_diagnostics():
    p = parse_program("program p\nblock L1:\n  jmp L99\n", check=False)
    assert validate(p) == ["block L1[0]: unknown label L99"]


def test_cfg_deduplicates_targets():
    p = parse_program("program p\nblock L1:\n  jz r1, L2, L2\nblock L2:\n  halt\n")
    assert cfg(p) == {"L1": ("L2",), "L2": ()}


def test_run_power():
    p = parse_program(load_source("power"))
    result = run_program(p, InputAssignment(registers={"r1": 5, "r2": 3}))
    assert result.r0 == 243
    assert result.tape == ()
    assert result.steps == 30
    assert run_program(p, InputAssignment(registers={"r1": 0, "r2": 7})).r0 == 1


def test_run_matcher():
    p = parse_program(load_source("matcher"))
    a = make_assignment(p, {"pat": '"hat"', "str": '"that"', "r1": "&str"})
    assert run_program(p, a).r0 == 1
    a = make_assignment(p, {"pat": '"hat"', "str": '"thxt"', "r1": "&str"})
    assert run_program(p, a).r0 == 0
    a = make_assignment(p, {"pat": '"hat"', "str": '"hot"', "r1": "&str"})
    assert run_program(p, a) == run_program(p, a)
    assert run_program(p, a).r0 == 0


def test_run_wraps_arithmetic():
    p = parse_program("program w\nblock L1:\n  const r0, 0\n  sub r0, 1\n  out r0\n  halt\n")
    result = run_program(p, InputAssignment())
    assert result.tape == ((1 << 64) - 1,)


def test_out_of_region_access_faults():
    p = load("wild.ir")
    with pytest.raises(MachineFault) as exc:
        run_program(p, InputAssignment())
    assert exc.value.address == 100
    assert (exc.value.block, exc.value.index) == ("L1", 1)


def test_fuel():
    with pytest.raises(FuelExhausted):
        run_program(load("spin.ir"), InputAssignment(), fuel=100)


def test_parse_value():
    p = parse_program(load_source("matcher"))
    assert parse_value('"hi"') == (104, 105, 0)
    assert parse_value("1, 2,3") == (1, 2, 3)
    assert parse_value("0x20") == 32
    assert parse_value("&str", p) == 512
    with pytest.raises(InputError):
        parse_value("&nowhere", p)
    with pytest.raises(InputError):
        parse_value("bogus")


def test_check_assignment():
    p = parse_program(load_source("matcher"))
    supplied = make_assignment(p, {"pat": '"hat"'})
    check_assignment(p, supplied, [BindingTime.SUPPLIED])

    with pytest.raises(InputError, match="missing"):
        check_assignment(p, supplied)
    with pytest.raises(InputError, match="unexpected"):
        check_assignment(p, make_assignment(p, {"pat": "1", "r9": "1"}), [BindingTime.SUPPLIED])
    with pytest.raises(InputError, match="must point into region str"):
        check_assignment(
            p, make_assignment(p, {"pat": "0", "str": "0", "r1": "&pat"})
        )
    with pytest.raises(InputError, match="holds 64 words"):
        check_assignment(p, InputAssignment(regions={"pat": (1,) * 65}), [BindingTime.SUPPLIED])


def test_merge_rejects_overlap():
    a = InputAssignment(registers={"r1": 1})
    with pytest.raises(InputError):
        a.merge(InputAssignment(registers={"r1": 2}))
    assert a.merge(InputAssignment(regions={"x": (1,)})).targets() == {"r1", "x"}
