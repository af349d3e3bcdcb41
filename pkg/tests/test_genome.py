import numpy as np
import pytest

from swarmcodesign import btvm
from swarmcodesign.errors import ConfigError, ShapeError
from swarmcodesign.genome import (
    GenomeConfig,
    MutationConfig,
    check_genome,
    crossover,
    genes_equal,
    mutate,
    mutate_behavior,
    random_genome,
)
from swarmcodesign.seeding import derive_rng

CFG = GenomeConfig()

ZERO_MUTATION = MutationConfig(
    tag_flip_p=0.0,
    selectivity_sigma=0.0,
    dominance_sigma=0.0,
    radius_sigma=0.0,
    setpoint_sigma=0.0,
    tier_reassign_p=0.0,
    effector_flip_p=0.0,
    bt_mutation_p=0.0,
    bt_subtree_p=0.0,
)


def test_random_genome_respects_bounds():
    rng = derive_rng(3)
    for _ in range(200):
        g = random_genome(CFG, rng)
        check_genome(g, CFG)
        assert len(g.tag) == 16
        assert 0.1 <= g.hardware.radius <= 0.5


def test_random_genome_same_seed_identical():
    a = random_genome(CFG, derive_rng(11))
    b = random_genome(CFG, derive_rng(11))
    assert genes_equal(a, b)
    assert a.id == b.id


def test_random_genome_has_non_nop_opcode():
    rng = derive_rng(4)
    for _ in range(100):
        g = random_genome(CFG, rng)
        assert np.any(g.behavior.opcodes != btvm.NOP)


def test_effector_frequency_monte_carlo():
    rng = derive_rng(5)
    draws = [random_genome(CFG, rng).hardware.end_effector for _ in range(10_000)]
    frequency = np.mean(draws)
    assert abs(frequency - 0.5) <= 0.02


def test_malformed_config_rejected():
    with pytest.raises(ConfigError):
        GenomeConfig(radius_min=0.5, radius_max=0.1).validate()
    with pytest.raises(ConfigError):
        GenomeConfig(tag_length=0).validate()


def test_mutate_zero_rates_identity_except_id():
    rng = derive_rng(6)
    for _ in range(50):
        g = random_genome(CFG, rng)
        out = mutate(g, ZERO_MUTATION, rng)
        assert genes_equal(g, out)
        assert out.id != g.id


def test_mutate_outputs_valid():
    rng = derive_rng(7)
    mc = MutationConfig()
    g = random_genome(CFG, rng)
    for _ in range(300):
        g = mutate(g, mc, rng)
        check_genome(g, CFG)


def test_bt_mutation_split_rate():
    # point/subtree split is 95/5
    rng = derive_rng(8)
    mc = MutationConfig()
    ops = random_genome(CFG, rng).behavior.opcodes
    kinds = [mutate_behavior(ops, mc, rng)[1] for _ in range(10_000)]
    subtree_fraction = np.mean([k == "subtree" for k in kinds])
    assert abs(subtree_fraction - 0.05) <= 0.01


def test_continuous_clamp_at_bounds():
    rng = derive_rng(9)
    mc = MutationConfig(selectivity_sigma=10.0, dominance_sigma=10.0, radius_sigma=10.0, setpoint_sigma=10.0)
    g = random_genome(CFG, rng)
    hit_upper = False
    for _ in range(50):
        out = mutate(g, mc, rng)
        check_genome(out, CFG)
        hit_upper = hit_upper or out.selectivity == 1.0
    assert hit_upper  # huge sigma must saturate the clamp at least once


def test_crossover_self_is_identity():
    rng = derive_rng(10)
    g = random_genome(CFG, rng)
    child = crossover(g, g, rng)
    assert genes_equal(child, g)
    assert child.id != g.id


def test_crossover_tag_bits_membership():
    rng = derive_rng(11)
    for _ in range(100):
        a = random_genome(CFG, rng)
        b = random_genome(CFG, rng)
        child = crossover(a, b, rng)
        for i in range(len(child.tag)):
            assert child.tag[i] in (a.tag[i], b.tag[i])
        for i in range(len(child.behavior.opcodes)):
            assert child.behavior.opcodes[i] in (
                a.behavior.opcodes[i],
                b.behavior.opcodes[i],
            )


def _component_source_fractions(first, second, rng, n):
    """Fraction of children taking each scalar component from ``first``."""
    counts = {"selectivity": 0, "dominance": 0, "radius": 0, "effector": 0}
    for _ in range(n):
        child = crossover(first, second, rng)
        counts["selectivity"] += child.selectivity == first.selectivity
        counts["dominance"] += child.dominance == first.dominance
        counts["radius"] += child.hardware.radius == first.hardware.radius
        counts["effector"] += child.hardware.end_effector == first.hardware.end_effector
    return {k: v / n for k, v in counts.items()}


def _distinct_parents():
    rng = derive_rng(12)
    a = random_genome(CFG, rng)
    while True:
        b = random_genome(CFG, rng)
        if (
            b.selectivity != a.selectivity
            and b.dominance != a.dominance
            and b.hardware.radius != a.hardware.radius
            and b.hardware.end_effector != a.hardware.end_effector
        ):
            return a, b


def test_crossover_component_sources_uniform():
    a, b = _distinct_parents()
    fractions = _component_source_fractions(a, b, derive_rng(13), 10_000)
    for name, fraction in fractions.items():
        assert abs(fraction - 0.5) <= 0.02, name


def test_crossover_symmetric_in_distribution():
    a, b = _distinct_parents()
    forward = _component_source_fractions(a, b, derive_rng(14), 4_000)
    backward = _component_source_fractions(b, a, derive_rng(15), 4_000)
    for name in forward:
        assert abs(forward[name] - (1.0 - backward[name])) <= 0.04, name


def test_crossover_blend_interpolates():
    rng = derive_rng(16)
    a, b = _distinct_parents()
    for _ in range(100):
        child = crossover(a, b, rng, blend=True)
        lo, hi = sorted((a.selectivity, b.selectivity))
        assert lo <= child.selectivity <= hi


def test_crossover_shape_mismatch_rejected():
    rng = derive_rng(17)
    a = random_genome(CFG, rng)
    other = random_genome(GenomeConfig(tag_length=8), rng)
    with pytest.raises(ShapeError):
        crossover(a, other, rng)
