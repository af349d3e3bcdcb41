"""Acceptance suite: one criterion per test, one pass/fail line each.

The emergent-behavior criteria (5-7) run full desk-scale evolutionary
sweeps through the CLI and judge the final generation's best-team record,
so this module dominates the suite's runtime.
"""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from swarmcodesign import btvm
from swarmcodesign.cli import main
from swarmcodesign.evaluation import assemble_swarm, elite_count
from swarmcodesign.fitness import (
    BudgetModel,
    FitnessWeights,
    budget_penalty,
    ema_smooth,
    gated_fitness,
    raw_fitness,
)
from swarmcodesign.genome import GenomeConfig, random_genome
from swarmcodesign.runlog import RunLog
from swarmcodesign.seeding import derive_rng
from swarmcodesign.sim2d import SimParams, TrialStats, step
from swarmcodesign.speciation import DistanceWeights, compatibility_distance, tag_distance
from conftest import make_world
from test_sim2d import BRAKE

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "swarmcodesign" / "scenarios"


def _report(criterion: str, passed: bool, detail: str = ""):
    flag = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {flag}{(' - ' + detail) if detail else ''}")
    assert passed, f"{criterion} failed: {detail}"


def _run_cli(scenario: str, out: Path, *extra: str) -> RunLog:
    code = main(["run", "--scenario", str(SCENARIOS / scenario), "--out", str(out), *extra])
    assert code == 0, f"run failed for {scenario}"
    return RunLog(out)


# ---------------------------------------------------------------------------
# 1. formula oracles
# ---------------------------------------------------------------------------


def test_criterion_1_formula_oracles():
    started = time.monotonic()
    rng = derive_rng(1001)
    checks = 0

    def close(a, b):
        return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))

    for _ in range(1_000):
        # budget penalty oracle
        model = BudgetModel(c_budget=float(rng.uniform(100, 10_000)), decay=float(rng.uniform(1e-4, 1e-2)))
        cost = float(rng.uniform(0, 50_000))
        dc = cost - model.c_budget
        expected = 1.0 if dc <= 0 else max(0.05, math.exp(-model.decay * dc))
        assert close(budget_penalty(cost, model), expected)

        # raw fitness oracle
        weights = FitnessWeights()
        prox = rng.uniform(0, 10, size=int(rng.integers(1, 8)))
        clos = rng.uniform(-2, 1, size=int(rng.integers(1, 8)))
        stats = TrialStats(
            n_delivered=int(rng.integers(0, 8)),
            n_collab_delivered=int(rng.integers(0, 4)),
            n_picked=int(rng.integers(0, 20)),
            n_collab_picked=int(rng.integers(0, 6)),
            grip_points_delivered=int(rng.integers(0, 12)),
            energy_avg_final=float(rng.uniform(0, 1)),
            proximity_scores=prox,
            closeness_progress=clos,
        )
        total = (
            stats.n_delivered * 100.0
            + stats.grip_points_delivered * 100.0
            + stats.n_collab_delivered * 50.0
            + (stats.n_picked + stats.n_collab_picked) * 1.0
            + stats.energy_avg_final * 0.03
            + (sum(prox) / len(prox)) * 1.0
            + (sum(clos) / len(clos)) * 30.0
        )
        activity = 0.5 if stats.n_delivered + stats.n_collab_delivered == 0 else 1.0
        assert close(raw_fitness(stats, weights), max(total * activity, 0.1))

        # tag distance oracle
        length = int(rng.integers(1, 64))
        a = rng.integers(0, 2, size=length).astype(np.uint8)
        b = rng.integers(0, 2, size=length).astype(np.uint8)
        gamma = float(rng.uniform(0.5, 4.0))
        hamming = sum(int(x != y) for x, y in zip(a, b))
        assert close(tag_distance(a, b, gamma), (hamming / length) ** gamma)

        # elite count oracle
        size = int(rng.integers(1, 1000))
        cap = int(rng.integers(1, 20))
        assert elite_count(size, cap) == max(1, min(cap, size // 5 + 1))

        # ema oracle
        prev = float(rng.uniform(0, 100))
        new = float(rng.uniform(0, 100))
        alpha = float(rng.uniform(0, 1))
        assert close(ema_smooth(prev, new, alpha), alpha * prev + (1 - alpha) * new)
        assert ema_smooth(None, new, alpha) == new

        # gated fitness oracle
        f_focal = float(rng.uniform(0, 100))
        f_base = float(rng.uniform(0, 100))
        base = float(rng.uniform(0, 100))
        expected = base if f_focal - f_base > 0 else base * 0.25
        assert close(gated_fitness(f_focal, f_base, base), expected)
        checks += 6

    # compatibility distance oracle over random genome pairs
    cfg = GenomeConfig()
    w = DistanceWeights()
    for _ in range(1_000):
        g1 = random_genome(cfg, rng)
        g2 = random_genome(cfg, rng)
        h1, h2 = g1.hardware, g2.hardware
        d_tag = (sum(int(x != y) for x, y in zip(g1.tag, g2.tag)) / len(g1.tag)) ** w.gamma
        hw_dims = [
            (h1.chassis_tier - h2.chassis_tier) / 2.0,
            (h1.battery_tier - h2.battery_tier) / 2.0,
            (h1.motor_tier - h2.motor_tier) / 2.0,
            h1.torque_setpoint - h2.torque_setpoint,
            h1.battery_setpoint - h2.battery_setpoint,
        ]
        d_hw = math.sqrt(sum(d * d for d in hw_dims)) / math.sqrt(5.0)
        d_bt = sum(
            int(x != y) for x, y in zip(g1.behavior.opcodes, g2.behavior.opcodes)
        ) / len(g1.behavior.opcodes)
        d_tool = 0.0 if h1.end_effector == h2.end_effector else 1.0
        d_size = abs(h1.radius - h2.radius) / (w.radius_max - w.radius_min)
        expected = 1.0 * d_tag + 0.5 * d_hw + 0.3 * d_bt + 0.35 * d_tool + 0.7 * d_size
        assert close(compatibility_distance(g1, g2, w), expected)
        checks += 1

    elapsed = time.monotonic() - started
    _report("1 formula oracles", elapsed < 10.0, f"{checks} checks in {elapsed:.1f}s (< 10s)")


# ---------------------------------------------------------------------------
# 2. BT VM differential test
# ---------------------------------------------------------------------------


def test_criterion_2_btvm_differential():
    started = time.monotonic()
    rng = derive_rng(1002)
    cases = 0
    for _ in range(10_000):
        raw = rng.integers(0, btvm.N_OPCODES, size=int(rng.integers(8, 33))).astype(np.int32)
        program = btvm.compile_program(raw)
        for _ in range(10):
            has_nearest = bool(rng.integers(2))
            has_random = bool(rng.integers(2))
            obs = btvm.Observation(
                has_package=bool(rng.integers(2)),
                near_package=bool(rng.integers(2)),
                near_base=bool(rng.integers(2)),
                am_i_stuck=bool(rng.integers(2)),
                nearest_package_id=int(rng.integers(50)) if has_nearest else None,
                random_package_id=int(rng.integers(50)) if has_random else None,
            )
            assert btvm.tick(program, obs) == btvm.reference_tick(program, obs)
            cases += 1
    elapsed = time.monotonic() - started
    _report("2 BT VM differential", cases >= 100_000 and elapsed < 60.0, f"{cases} pairs in {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 3. physics properties
# ---------------------------------------------------------------------------


def test_criterion_3_physics():
    started = time.monotonic()
    params = SimParams(kp=20.0, kd=0.0, dt=0.0625, max_speed=64.0)
    rng = derive_rng(1003)
    grid = 2.0**-10

    # elastic collisions: bitwise momentum on the dyadic grid, KE within 1e-6
    for _ in range(300):
        mass = float(2.0 ** rng.integers(-1, 3))
        v1 = float(rng.integers(1, 512)) * grid
        v2 = -float(rng.integers(1, 512)) * grid
        world = make_world(
            robots=[
                {"pos": (9.0, 5.0), "vel": (v1, 0.0), "radius": 0.25, "mass": mass, "energy": 0.0, "emax": 1.0},
                {"pos": (9.6, 5.0), "vel": (v2, 0.0), "radius": 0.25, "mass": mass, "energy": 0.0, "emax": 1.0},
            ],
            params=params,
        )
        p_before = mass * (world.rvel[0] + world.rvel[1])
        ke_before = 0.5 * mass * float(np.sum(world.rvel**2))
        for _ in range(24):
            step(world, [BRAKE, BRAKE])
        p_after = mass * (world.rvel[0] + world.rvel[1])
        ke_after = 0.5 * mass * float(np.sum(world.rvel**2))
        assert p_after[0] == p_before[0] and p_after[1] == p_before[1]
        assert abs(ke_after - ke_before) <= 1e-6 * ke_before

    # unequal masses: momentum to 1e-12 relative, KE within 1e-6
    for _ in range(300):
        m1, m2 = float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.5, 4.0))
        v1, v2 = float(rng.uniform(0.2, 1.5)), -float(rng.uniform(0.2, 1.5))
        world = make_world(
            robots=[
                {"pos": (9.0, 5.0), "vel": (v1, 0.0), "radius": 0.25, "mass": m1, "energy": 0.0, "emax": 1.0},
                {"pos": (9.6, 5.0), "vel": (v2, 0.0), "radius": 0.25, "mass": m2, "energy": 0.0, "emax": 1.0},
            ],
            params=params,
        )
        p_before = m1 * world.rvel[0] + m2 * world.rvel[1]
        ke_before = 0.5 * float(m1 * np.sum(world.rvel[0] ** 2) + m2 * np.sum(world.rvel[1] ** 2))
        for _ in range(24):
            step(world, [BRAKE, BRAKE])
        p_after = m1 * world.rvel[0] + m2 * world.rvel[1]
        ke_after = 0.5 * float(m1 * np.sum(world.rvel[0] ** 2) + m2 * np.sum(world.rvel[1] ** 2))
        assert np.allclose(p_after, p_before, rtol=1e-12, atol=1e-12)
        assert abs(ke_after - ke_before) <= 1e-6 * ke_before

    # semi-implicit Euler free motion matches the closed form exactly
    world = make_world(
        robots=[{"pos": (2.0, 3.0), "vel": (0.5, 0.25), "energy": 0.0, "emax": 1.0}],
        params=params,
    )
    for _ in range(200):
        step(world, [BRAKE])
    assert world.rpos[0, 0] == 2.0 + 200 * 0.5 * params.dt
    assert world.rpos[0, 1] == 3.0 + 200 * 0.25 * params.dt

    # determinism across worker thread counts: bit-equal trial statistics
    from swarmcodesign.evaluation import EvaluationContext, EvaluationSettings, evaluate_generation
    from swarmcodesign.sim2d import EnvConfig, PackageGroup
    from swarmcodesign.speciation import assign_species

    cfg = GenomeConfig()
    population = [random_genome(cfg, derive_rng(1004, i)) for i in range(8)]
    partition = assign_species(population, None, 0.4, DistanceWeights())

    def run(threads):
        ctx = EvaluationContext(
            env=EnvConfig(width=12.0, height=12.0, base_x=6.0, base_y=6.0, base_radius=1.0,
                          obstacle_count=2, obstacle_radius_min=0.3, obstacle_radius_max=0.5,
                          packages=(PackageGroup(count=8, shape="mixed"),)),
            params=SimParams(ticks=200),
            weights=FitnessWeights(),
            budget=BudgetModel(),
            settings=EvaluationSettings(swarm_size=5, n_trials=2),
            gamma=2.0,
            elite_cap=3,
            master_seed=55,
            generation=0,
            genomes_by_id={g.id: g for g in population},
            prev_fitness={},
        )
        return evaluate_generation(population, partition, ctx, threads=threads)

    serial = run(1)
    threaded = run(4)
    for gid in serial:
        assert serial[gid].raw == threaded[gid].raw
        assert serial[gid].smoothed == threaded[gid].smoothed
        assert serial[gid].marginal == threaded[gid].marginal

    elapsed = time.monotonic() - started
    _report("3 physics properties", elapsed < 60.0, f"completed in {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 4. dominance sampling
# ---------------------------------------------------------------------------


def test_criterion_4_dominance_chi_square():
    import dataclasses

    cfg = GenomeConfig()
    outer = derive_rng(1005)
    p_values = []
    for vector_index in range(5):
        k = int(outer.integers(2, 6))
        dominances = outer.uniform(0.05, 1.0, size=k)
        genomes = [
            dataclasses.replace(random_genome(cfg, outer), dominance=float(d)) for d in dominances
        ]
        swarm_size = k + 10
        rng = derive_rng(1006, vector_index)
        counts = np.zeros(k)
        assemblies = 10_000
        for _ in range(assemblies):
            comp = assemble_swarm(genomes[0], genomes[1:], swarm_size, rng)
            for slot in comp.slots[k:]:
                counts[slot] += 1
        expected = dominances / dominances.sum() * counts.sum()
        result = scipy.stats.chisquare(counts, expected)
        p_values.append(result.pvalue)
    passed = all(p > 0.01 for p in p_values)
    _report("4 dominance sampling", passed, "chi-square p-values: " + ", ".join(f"{p:.3f}" for p in p_values))


# ---------------------------------------------------------------------------
# 5-7. emergent desk-scale properties
# ---------------------------------------------------------------------------


def _final_best(log: RunLog) -> dict:
    return log.records()[-1]["best"]


def _converged_team_species(log: RunLog, window: int = 25) -> int:
    """Modal best-team species count over the run's final generations.

    The winning individual's partner set fluctuates generation to generation,
    so the converged team size is the mode of the tail, not the last sample.
    """
    import collections

    counts = [r["best"]["team"]["n_species"] for r in log.records()[-window:]]
    most = collections.Counter(counts).most_common()
    top = most[0][1]
    return min(c for c, n in most if n == top)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_runs")


def test_criterion_5_emergent_speciation(workdir):
    started = time.monotonic()
    seeds = (1, 2, 3, 4, 5)
    pincher_counts = []
    mixed_counts = []
    for seed in seeds:
        log = _run_cli("pincher_only_desk.yaml", workdir / f"p{seed}", "--seed", str(seed))
        pincher_counts.append(_converged_team_species(log))
        log = _run_cli("mixed_effectors_desk.yaml", workdir / f"m{seed}", "--seed", str(seed))
        mixed_counts.append(_converged_team_species(log))
    pincher_ok = sum(1 for c in pincher_counts if c == 1) >= 4
    mixed_ok = sum(1 for c in mixed_counts if c >= 2) >= 4
    elapsed = time.monotonic() - started
    _report(
        "5 emergent speciation",
        pincher_ok and mixed_ok and elapsed < 1800,
        f"pincher teams {pincher_counts}, mixed teams {mixed_counts}, {elapsed/60:.1f} min (< 30)",
    )


def test_criterion_6_budget_monotonicity(workdir):
    started = time.monotonic()
    budgets = (3000.0, 5000.0, 8000.0)
    seeds = (1, 2, 3, 4, 5)
    medians = []
    cost_ok = True
    details = []
    for budget in budgets:
        species_counts = []
        costs = []
        for seed in seeds:
            out = workdir / f"b{int(budget)}_{seed}"
            log = _run_cli(
                "budget_collab_desk.yaml", out, "--seed", str(seed), "--budget", str(budget)
            )
            species_counts.append(_converged_team_species(log))
            costs.append(statistics.median(r["best"]["team"]["cost"] for r in log.records()[-25:]))
        med_species = statistics.median(species_counts)
        med_cost = statistics.median(costs)
        medians.append(med_species)
        cost_ok = cost_ok and med_cost <= budget * 1.1
        details.append(f"budget {budget:.0f}: species {species_counts} cost median {med_cost:.0f}")
    monotone = all(medians[i] <= medians[i + 1] for i in range(len(medians) - 1))
    elapsed = time.monotonic() - started
    _report(
        "6 budget monotonicity",
        monotone and cost_ok and elapsed < 2700,
        f"median species {medians}; {'; '.join(details)}; {elapsed/60:.1f} min (< 45)",
    )


def test_criterion_7_scale_decoupling(workdir):
    started = time.monotonic()
    seeds = (1, 2, 3, 4, 5)
    improved = 0
    for seed in seeds:
        log = _run_cli("scale_desk.yaml", workdir / f"s{seed}", "--seed", str(seed))
        records = log.records()
        assert len(records) == 50
        for record in records:
            slots = sum(record["best"]["team"]["species_slots"].values())
            assert slots == 40, f"composition with {slots} slots"
        if records[-1]["best"]["fitness"] > records[0]["best"]["fitness"]:
            improved += 1
    elapsed = time.monotonic() - started
    _report(
        "7 scale decoupling",
        improved >= 4 and elapsed < 1200,
        f"{improved}/5 seeds improved, 40-slot compositions throughout, {elapsed/60:.1f} min (< 20)",
    )


# ---------------------------------------------------------------------------
# 8. reproducibility across thread counts
# ---------------------------------------------------------------------------


def test_criterion_8_thread_reproducibility(workdir):
    logs = []
    for threads in ("1", "4"):
        out = workdir / f"repro_t{threads}"
        _run_cli(
            "pincher_only_desk.yaml", out, "--seed", "9", "--generations", "12", "--threads", threads
        )
        logs.append((out / "generations.jsonl").read_bytes())
    passed = logs[0] == logs[1] and len(logs[0]) > 0
    _report("8 reproducibility", passed, "byte-identical generation logs for --threads 1 vs 4")
