"""
Tests for the specializer: residual correctness, deduplication, budgets,
congruence checks and the CoW / fingerprint cost model.
"""

from pathlib import Path

import pytest

from genext.bench import make_benchmark, sample_delayed
from genext.bta import analyze
from genext.conf import get_settings
from genext.errors import BudgetExhausted, CongruenceViolation, FuelExhausted, MachineFault
from genext.fingerprint import cached_context
from genext.ir import InputAssignment, Opcode, RegionClass, make_assignment, parse_program, pretty_print, run_program
from genext.residual import canonicalize_labels
from genext.specializer import SpecConfig, specialize

PROGRAMS = Path(__file__).parent / "fixtures" / "programs"
MODES = [(True, True), (True, False), (False, True), (False, False)]


def ctx_for(p):
    return cached_context(page_bits=p.page_words * 64)


def spec(p, supplied, **config):
    _, result = analyze(p)
    return specialize(p, result, supplied, SpecConfig(**config), ctx_for(p))


def fixture(name):
    return parse_program((PROGRAMS / name).read_text())


def opcodes(p):
    return [i.opcode for b in p.blocks for i in b.instructions]


def bench_spec(name, params=None, **config):
    b = make_benchmark(name, params)
    return b, spec(b.program, b.supplied, **config)


def test_power_unrolls_completely():
    b, out = bench_spec("power", {"n": 16})
    ops = opcodes(out.residual)
    assert ops.count(Opcode.MUL) == 16
    assert Opcode.JZ not in ops
    assert Opcode.STORE not in ops
    assert out.metrics.states_visited == 35
    assert out.metrics.dedup_hits == 0
    for seed in range(20):
        delayed = sample_delayed(b, seed)
        expected = run_program(b.program, b.supplied.merge(delayed))
        actual = run_program(out.residual, delayed)
        assert actual.r0 == expected.r0 == pow(delayed.registers["r2"], 16, 1 << 64)
        assert actual.steps < expected.steps


def test_matcher_folds_the_pattern():
    b, out = bench_spec("matcher")
    residual = out.residual
    loads = [i for blk in residual.blocks for i in blk.instructions if i.opcode is Opcode.LOAD]
    # only string characters are loaded; pattern characters became constants
    assert loads and all(i.dest == "r3" for i in loads)
    lifted = [i.src for blk in residual.blocks for i in blk.instructions if i.opcode is Opcode.CONST and i.dest == "r4"]
    # one block per pattern position: three characters, then the terminating zero
    assert lifted == [ord("h"), ord("a"), ord("t"), 0]
    assert out.metrics.dedup_hits > 0
    assert residual.region("pat").cls is RegionClass.SCRATCH

    for text in ["that", "hat", "ha", "", "xhxahat", "hhhh"]:
        delayed = make_assignment(b.program, {"str": f'"{text}"', "r1": "&str"})
        expected = run_program(b.program, b.supplied.merge(delayed))
        assert run_program(residual, delayed).r0 == expected.r0 == int("hat" in text)


def test_delayed_branch_splits_supplied_state():
    p = fixture("diamond.ir")
    out = spec(p, InputAssignment(registers={"r2": 5}))
    zero = run_program(out.residual, InputAssignment(registers={"r1": 0}))
    other = run_program(out.residual, InputAssignment(registers={"r1": 7}))
    assert (zero.tape, zero.r0) == ((15,), 15)
    assert (other.tape, other.r0) == ((5,), 12)
    assert [b.target for b in out.residual.input_spec] == ["r1"]


def test_loop_over_delayed_region():
    p = fixture("sum.ir")
    out = spec(p, InputAssignment(registers={"r1": 3}))
    assert opcodes(out.residual).count(Opcode.LOAD) == 3
    result = run_program(out.residual, InputAssignment(regions={"xs": (4, 5, 6, 100)}))
    assert result.r0 == 15


def test_entry_block_lifts_register_inputs():
    p = parse_program(
        "program addk\ninput r1 supplied\ninput r2 delayed\nblock L1:\n  add r2, r1\n  out r2\n  halt\n"
    )
    out = spec(p, InputAssignment(registers={"r1": 40}))
    first = out.residual.blocks[0].instructions[0]
    assert (first.opcode, first.dest, first.src) == (Opcode.CONST, "r1", 40)
    assert run_program(out.residual, InputAssignment(registers={"r2": 2})).tape == (42,)


def test_unbounded_supplied_state_hits_budget():
    p = fixture("unbounded.ir")
    with pytest.raises(BudgetExhausted):
        spec(p, InputAssignment(), max_states=50)


def test_block_fuel():
    p = fixture("sum.ir")
    with pytest.raises(FuelExhausted):
        spec(p, InputAssignment(registers={"r1": 3}), block_fuel=3)


def test_delayed_store_into_supplied_region_is_refused():
    p = fixture("congruence_violation.ir")
    with pytest.raises(CongruenceViolation, match="pat"):
        spec(p, InputAssignment(regions={"pat": (1, 2)}))


def test_delayed_load_from_supplied_region_is_refused():
    p = parse_program(
        """
        program lookup
        region tbl supplied words=4
        input tbl supplied
        input r1 delayed
        block L1:
          const r2, &tbl
          add r2, r1
          load r3, [r2+0]
          out r3
          halt
        """
    )
    with pytest.raises(CongruenceViolation, match="region tbl"):
        spec(p, InputAssignment(regions={"tbl": (10, 20, 30, 40)}))


def test_supplied_access_outside_predicted_region_is_refused():
    p = parse_program(
        """
        program stray
        region a supplied words=4
        region b supplied words=4
        input a supplied
        input b supplied
        input r1 supplied &a
        input r2 delayed
        block L1:
          add r1, 512
          load r3, [r1+0]
          add r2, r3
          out r2
          halt
        """
    )
    supplied = InputAssignment(registers={"r1": 0}, regions={"a": (1,), "b": (7,)})
    with pytest.raises(CongruenceViolation, match="region b"):
        spec(p, supplied)


def test_machine_fault_names_the_block():
    with pytest.raises(MachineFault) as exc:
        spec(fixture("wild.ir"), InputAssignment())
    assert (exc.value.block, exc.value.index) == ("L1", 1)


@pytest.mark.parametrize(
    "name, params",
    [
        ("power", {"n": 12}),
        ("dotproduct", None),
        ("filter", {"width": 5, "height": 4}),
        ("matcher", None),
        ("stack", {"pages": 4}),
        ("mix", None),
    ],
)
def test_modes_agree(name, params):
    results = [bench_spec(name, params, cow_enabled=c, fingerprint_enabled=f)[1] for c, f in MODES]
    texts = {pretty_print(canonicalize_labels(r.residual)) for r in results}
    assert len(texts) == 1
    assert all(r.decisions == results[0].decisions for r in results)
    assert len({r.metrics.states_visited for r in results}) == 1
    assert len({r.metrics.dedup_hits for r in results}) == 1


def test_fingerprint_cost_is_linear_and_comparison_cost_quadratic():
    hashed, compared = {}, {}
    for n in (64, 128, 256):
        hashed[n] = bench_spec("power", {"n": n}, fingerprint_enabled=True)[1].metrics.pages_hashed
        compared[n] = bench_spec("power", {"n": n}, fingerprint_enabled=False)[1].metrics.words_compared
    assert hashed[256] <= 4.2 * hashed[64]
    assert hashed[128] <= 2.1 * hashed[64]
    assert compared[256] >= 3.5 * compared[128]
    assert compared[128] >= 3.5 * compared[64]


def test_cow_allocates_far_fewer_pages():
    cow = bench_spec("power", {"n": 64}, cow_enabled=True)[1].metrics
    full = bench_spec("power", {"n": 64}, cow_enabled=False)[1].metrics
    assert full.pages_allocated_total >= 10 * cow.pages_allocated_total
    assert cow.cow_faults == 64


@pytest.mark.parametrize("name, params, initial_pages", [("power", {"n": 64}, 0), ("matcher", None, 1)])
def test_cow_allocations_without_fingerprints(name, params, initial_pages):
    cow = bench_spec(name, params, cow_enabled=True, fingerprint_enabled=False)[1].metrics
    full = bench_spec(name, params, cow_enabled=False, fingerprint_enabled=False)[1].metrics
    assert cow.pages_allocated_total <= initial_pages + cow.cow_faults
    assert full.pages_allocated_total >= 10 * cow.pages_allocated_total


def test_stack_rehashes_every_page_each_outer_step():
    _, out = bench_spec("stack", {"pages": 16, "n": 4, "steps": 4})
    assert out.metrics.pages_hashed / 4 >= 16


def test_stack_faults_once_per_page_per_pass():
    _, out = bench_spec("stack", {"pages": 8, "n": 2, "steps": 3})
    assert out.metrics.cow_faults == 8 * 2 * 3


def test_fingerprint_mode_releases_pages():
    _, out = bench_spec("power", {"n": 64})
    assert out.metrics.live_pages_max <= 4
    assert out.metrics.words_compared == 0


def test_config_from_settings():
    settings = get_settings().override(max_states=7, cow_enabled=True)
    config = SpecConfig.from_settings(settings, fingerprint_enabled=False, max_states=None)
    assert config.max_states == 7
    assert config.mode == "yes-no"
    with pytest.raises(ValueError):
        SpecConfig(max_states=0)
