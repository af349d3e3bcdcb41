import numpy as np
import pytest

from swarmcodesign import btvm
from swarmcodesign.btvm import (
    ACT_DROP,
    ACT_MOVE_TO_BASE,
    ACT_PICK_UP,
    ACT_RANDOM_WALK,
    COND_HAS_PACKAGE,
    COND_NEAR_BASE,
    END,
    FAILURE,
    NOP,
    RUNNING,
    SEL,
    SEQ,
    SUCCESS,
    Observation,
    compile_program,
    reference_tick,
    tick,
)
from swarmcodesign.genome import GenomeConfig, MutationConfig, mutate, random_genome
from swarmcodesign.seeding import derive_rng


def _pad(ops, n=32):
    out = np.full(n, NOP, dtype=np.int32)
    out[: len(ops)] = ops
    return out


def test_compile_simple_sequence_jump():
    program = compile_program(_pad([SEQ, ACT_RANDOM_WALK, END]))
    assert list(program.opcodes[:3]) == [SEQ, ACT_RANDOM_WALK, END]
    assert program.jumps[0] == 3
    assert program.length == 3


def test_compile_all_nop_falls_back_to_random_walk():
    program = compile_program(np.full(32, NOP, dtype=np.int32))
    assert list(program.opcodes[:3]) == [SEL, ACT_RANDOM_WALK, END]
    result = tick(program, Observation())
    assert result.status == RUNNING
    assert result.action == ACT_RANDOM_WALK


def test_compile_idempotent_on_canonical():
    rng = derive_rng(40)
    for _ in range(300):
        raw = rng.integers(0, btvm.N_OPCODES, size=32).astype(np.int32)
        once = compile_program(raw)
        twice = compile_program(once.opcodes)
        assert np.array_equal(once.opcodes, twice.opcodes)
        assert np.array_equal(once.jumps, twice.jumps)


def test_compile_repairs_everything():
    rng = derive_rng(41)
    cfg = GenomeConfig()
    mc = MutationConfig(bt_mutation_p=1.0)
    g = random_genome(cfg, rng)
    for _ in range(500):
        g = mutate(g, mc, rng)
        program = compile_program(g.behavior.opcodes)
        # root END present, interpretable with any observation
        assert program.opcodes[program.length - 1] == END
        tick(program, Observation())


def test_jump_indices_land_forward_and_in_bounds():
    rng = derive_rng(42)
    for _ in range(300):
        raw = rng.integers(0, btvm.N_OPCODES, size=32).astype(np.int32)
        program = compile_program(raw)
        n = len(program.opcodes)
        for i in range(n):
            assert 0 < program.jumps[i] <= n
            assert program.jumps[i] > i


def test_selector_skips_action_when_condition_holds():
    program = compile_program(_pad([SEL, COND_HAS_PACKAGE, ACT_RANDOM_WALK, END]))
    result = tick(program, Observation(has_package=True))
    assert result.status == SUCCESS
    assert result.action is None

    result = tick(program, Observation(has_package=False))
    assert result.status == RUNNING
    assert result.action == ACT_RANDOM_WALK


def test_sequence_short_circuits_on_failure():
    program = compile_program(_pad([SEQ, COND_NEAR_BASE, ACT_DROP, END]))
    result = tick(program, Observation(near_base=False, has_package=True))
    assert result.status == FAILURE
    assert result.action is None


def test_instantaneous_actions():
    program = compile_program(_pad([SEQ, ACT_PICK_UP, END]))
    ok = tick(program, Observation(near_package=True, nearest_package_id=4))
    assert ok.status == SUCCESS
    assert ok.action == ACT_PICK_UP
    assert ok.target == 4
    fail = tick(program, Observation(near_package=False))
    assert fail.status == FAILURE
    assert fail.action is None


def test_movement_halts_interpretation():
    # the second action is never reached once MOVE_TO_BASE returns RUNNING
    program = compile_program(_pad([SEQ, ACT_MOVE_TO_BASE, ACT_DROP, END]))
    result = tick(program, Observation(has_package=True))
    assert result.status == RUNNING
    assert result.action == ACT_MOVE_TO_BASE


def _random_observation(rng) -> Observation:
    has_nearest = bool(rng.integers(2))
    has_random = bool(rng.integers(2))
    return Observation(
        has_package=bool(rng.integers(2)),
        near_package=bool(rng.integers(2)),
        near_base=bool(rng.integers(2)),
        am_i_stuck=bool(rng.integers(2)),
        nearest_package_id=int(rng.integers(100)) if has_nearest else None,
        random_package_id=int(rng.integers(100)) if has_random else None,
    )


@pytest.mark.parametrize("seed", [50, 51])
def test_differential_flat_vs_reference(seed):
    rng = derive_rng(seed)
    for _ in range(5_000):
        raw = rng.integers(0, btvm.N_OPCODES, size=24).astype(np.int32)
        program = compile_program(raw)
        obs = _random_observation(rng)
        assert tick(program, obs) == reference_tick(program, obs)


def test_condition_only_program_no_action():
    program = compile_program(_pad([SEQ, COND_HAS_PACKAGE, COND_NEAR_BASE, END]))
    for obs in (
        Observation(has_package=True, near_base=True),
        Observation(has_package=True, near_base=False),
        Observation(has_package=False),
    ):
        flat = tick(program, obs)
        assert flat == reference_tick(program, obs)
        assert flat.action is None
