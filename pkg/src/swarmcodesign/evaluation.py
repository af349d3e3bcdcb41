"""Per-individual evaluation: swarm assembly and marginal contribution.

Every individual is scored by simulating a swarm built around it (itself plus
one elite per partner species, remaining slots dominance-sampled) against a
baseline swarm in which its slots are refilled from the same partner elites,
over matched environments.  The fitness difference gates the final score.

Seeds derive from (master seed, generation, genome id, trial index), so
records are independent of evaluation order and worker-thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .btvm import Program, compile_program
from .errors import EvaluationError, PlanError
from .fitness import (
    BudgetModel,
    FitnessRecord,
    FitnessWeights,
    budget_penalty,
    ema_smooth,
    gated_fitness,
    raw_fitness,
    roi_fitness,
    swarm_cost,
)
from .genome import EFFECTOR_NAMES, Genome
from .seeding import SALT_ENV, SALT_EVAL, SALT_ROBOT, derive_rng, derive_seed
from .sim2d import EnvConfig, SimParams, TrialStats, generate_environment, insert_robots, run_trial
from .speciation import SpeciesPartition, select_partners, tag_distance


def elite_count(species_size: int, elite_cap: int) -> int:
    """Elite slots for a species: max(1, min(E, floor(size / 5) + 1))."""
    if species_size < 1:
        raise ValueError(f"species size must be >= 1, got {species_size}")
    return max(1, min(elite_cap, species_size // 5 + 1))


@dataclass(frozen=True)
class EvaluationSettings:
    swarm_size: int = 10
    n_trials: int = 3
    p_marginal: float = 0.25
    ema_alpha: float = 0.6
    objective: str = "fitness"  # "fitness" | "roi"


@dataclass
class SwarmComposition:
    """A physical swarm: participant designs and one participant index per slot.

    Participant 0 is the focal individual in focal compositions; baseline
    compositions hold partner elites only.
    """

    participants: List[Genome]
    participant_species: List[int]
    slots: List[int]  # participant index per slot, length = swarm size
    focal_included: bool

    def genomes(self) -> List[Genome]:
        return [self.participants[k] for k in self.slots]

    def species_slot_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for k in self.slots:
            sid = self.participant_species[k]
            counts[sid] = counts.get(sid, 0) + 1
        return counts

    def unique_species(self) -> int:
        return len(set(self.participant_species))

    def cost_items(self):
        counts = [0] * len(self.participants)
        for k in self.slots:
            counts[k] += 1
        return [(g, c) for g, c in zip(self.participants, counts) if c > 0]


@dataclass
class EvaluationPlan:
    """Fixed choices for one individual's evaluation."""

    n_trials: int
    partner_species: List[int]
    partner_elites: List[Genome]
    env_seed_keys: List[int]  # shared by focal and baseline trial i


@dataclass
class EvaluationContext:
    """Run-wide inputs the evaluation pipeline needs each generation."""

    env: EnvConfig
    params: SimParams
    weights: FitnessWeights
    budget: BudgetModel
    settings: EvaluationSettings
    gamma: float
    elite_cap: int
    master_seed: int
    generation: int
    genomes_by_id: Dict[int, Genome]
    prev_fitness: Dict[int, float]
    program_cache: Dict[int, Program] = field(default_factory=dict)

    def program_for(self, g: Genome) -> Program:
        prog = self.program_cache.get(g.id)
        if prog is None:
            prog = compile_program(g.behavior.opcodes)
            self.program_cache[g.id] = prog
        return prog


def _dominance_probs(participants: Sequence[Genome]) -> np.ndarray:
    weights = np.array([g.dominance for g in participants], dtype=np.float64)
    total = weights.sum()
    if total <= 0:  # all-zero dominance falls back to uniform sampling
        return np.full(len(participants), 1.0 / len(participants))
    return weights / total


def assemble_swarm(
    focal: Genome,
    partner_elites: Sequence[Genome],
    swarm_size: int,
    rng: np.random.Generator,
    focal_species: int = -1,
    partner_species: Optional[Sequence[int]] = None,
) -> SwarmComposition:
    """Build the focal swarm: guaranteed slots, then dominance-ratio sampling."""
    participants = [focal, *partner_elites]
    if swarm_size < len(participants):
        raise PlanError(
            f"swarm size {swarm_size} cannot guarantee slots for {len(participants)} participants"
        )
    species = [focal_species, *(partner_species if partner_species is not None else [-1] * len(partner_elites))]
    slots = list(range(len(participants)))
    free = swarm_size - len(participants)
    if free > 0:
        probs = _dominance_probs(participants)
        slots.extend(int(k) for k in rng.choice(len(participants), size=free, p=probs))
    return SwarmComposition(
        participants=participants,
        participant_species=species,
        slots=slots,
        focal_included=True,
    )


def assemble_baseline(focal_comp: SwarmComposition, rng: np.random.Generator) -> Optional[SwarmComposition]:
    """Refill the focal individual's slots from the same partner elites.

    Partner-occupied slots are kept as-is so baseline trial i differs from
    focal trial i only where the focal individual stood.  Returns None when
    there are no partners (a lone individual's baseline performs nothing).
    """
    if len(focal_comp.participants) <= 1:
        return None
    elites = focal_comp.participants[1:]
    species = focal_comp.participant_species[1:]
    probs = _dominance_probs(elites)
    slots: List[int] = []
    for k in focal_comp.slots:
        if k == 0:
            slots.append(int(rng.choice(len(elites), p=probs)))
        else:
            slots.append(k - 1)
    return SwarmComposition(
        participants=list(elites),
        participant_species=list(species),
        slots=slots,
        focal_included=False,
    )


def _species_elites(species, ctx: EvaluationContext) -> List[Genome]:
    """Current elite pool of a species, ranked by last known fitness."""
    ranked = sorted(
        range(len(species.members)),
        key=lambda i: (-ctx.prev_fitness.get(species.members[i], 0.0), i),
    )
    n = elite_count(len(species.members), ctx.elite_cap)
    return [ctx.genomes_by_id[species.members[i]] for i in ranked[:n]]


def build_plan(
    focal: Genome,
    partition: SpeciesPartition,
    ctx: EvaluationContext,
    rng: np.random.Generator,
) -> EvaluationPlan:
    """Choose partners, one elite per partner species, and trial seeds."""
    partner_ids = select_partners(focal, partition, ctx.gamma)
    max_partners = ctx.settings.swarm_size - 1
    if len(partner_ids) > max_partners:
        # More willing partners than swarm slots: keep the nearest tags.
        partner_ids = sorted(
            partner_ids,
            key=lambda sid: (
                tag_distance(focal.tag, partition.species_of_id(sid).prototype.tag, ctx.gamma),
                sid,
            ),
        )[:max_partners]
        partner_ids.sort()
    elites = []
    for sid in partner_ids:
        pool = _species_elites(partition.species_of_id(sid), ctx)
        elites.append(pool[int(rng.integers(len(pool)))])
    seeds = [
        derive_seed(ctx.master_seed, ctx.generation, focal.id, t, SALT_ENV)
        for t in range(ctx.settings.n_trials)
    ]
    return EvaluationPlan(
        n_trials=ctx.settings.n_trials,
        partner_species=partner_ids,
        partner_elites=elites,
        env_seed_keys=seeds,
    )


def _run_composition_trial(
    comp: SwarmComposition,
    env_seed: int,
    robot_seed: int,
    ctx: EvaluationContext,
) -> TrialStats:
    world = generate_environment(ctx.env, ctx.params, env_seed)
    genomes = comp.genomes()
    programs = [ctx.program_for(g) for g in genomes]
    world = insert_robots(world, genomes, programs, robot_seed)
    return run_trial(world)


def evaluate_individual(
    focal: Genome,
    partition: SpeciesPartition,
    plan: Optional[EvaluationPlan],
    ctx: EvaluationContext,
) -> FitnessRecord:
    """Score one individual per the marginal-contribution pipeline."""
    rng = derive_rng(ctx.master_seed, ctx.generation, focal.id, SALT_EVAL)
    if plan is None:
        plan = build_plan(focal, partition, ctx, rng)

    focal_species = partition.assignment.get(focal.id, -1)
    comp = assemble_swarm(
        focal,
        plan.partner_elites,
        ctx.settings.swarm_size,
        rng,
        focal_species=focal_species,
        partner_species=plan.partner_species,
    )
    baseline = assemble_baseline(comp, rng)
    cost = swarm_cost(comp.cost_items(), comp.unique_species(), ctx.budget)

    focal_scores = []
    baseline_scores = []
    focal_stats: List[TrialStats] = []
    for t, env_seed in enumerate(plan.env_seed_keys):
        try:
            robot_seed = derive_seed(ctx.master_seed, ctx.generation, focal.id, t, SALT_ROBOT)
            stats = _run_composition_trial(comp, env_seed, robot_seed, ctx)
            focal_scores.append(raw_fitness(stats, ctx.weights))
            focal_stats.append(stats)
            if baseline is not None:
                b_stats = _run_composition_trial(baseline, env_seed, robot_seed, ctx)
                baseline_scores.append(raw_fitness(b_stats, ctx.weights))
        except Exception as exc:  # pragma: no cover - kernel failures are unexpected
            raise EvaluationError(
                f"trial {t} failed for genome {focal.id} (env seed {env_seed}): {exc}"
            ) from exc

    f_focal = float(np.mean(focal_scores))
    f_baseline = float(np.mean(baseline_scores)) if baseline_scores else 0.0
    base = f_focal * budget_penalty(cost, ctx.budget)
    if ctx.settings.objective == "roi":
        base = roi_fitness(base, cost)
    final = gated_fitness(f_focal, f_baseline, base, ctx.settings.p_marginal)
    smoothed = ema_smooth(ctx.prev_fitness.get(focal.id), final, ctx.settings.ema_alpha)
    marginal = f_focal - f_baseline

    team_summary = {
        "cost": cost,
        "n_species": comp.unique_species(),
        "species_slots": {int(k): int(v) for k, v in sorted(comp.species_slot_counts().items())},
        "species_traits": {
            int(sid): _trait_row(g)
            for sid, g in sorted(
                zip(comp.participant_species, comp.participants), key=lambda item: item[0]
            )
        },
        "deliveries_total": float(np.mean([s.n_delivered + s.n_collab_delivered for s in focal_stats])),
        "deliveries_individual": float(np.mean([s.n_delivered for s in focal_stats])),
        "deliveries_collab": float(np.mean([s.n_collab_delivered for s in focal_stats])),
        "energy_used_avg": float(np.mean([s.energy_used_avg for s in focal_stats])),
    }
    return FitnessRecord(
        raw=f_focal * budget_penalty(cost, ctx.budget),
        smoothed=smoothed,
        marginal=marginal,
        gated=not marginal > 0,
        team_summary=team_summary,
    )


def _trait_row(g: Genome) -> Dict[str, object]:
    hw = g.hardware
    return {
        "radius": hw.radius,
        "chassis_tier": hw.chassis_tier,
        "battery_tier": hw.battery_tier,
        "motor_tier": hw.motor_tier,
        "effector": EFFECTOR_NAMES[hw.end_effector],
        "torque_setpoint": hw.torque_setpoint,
        "battery_setpoint": hw.battery_setpoint,
        "dominance": g.dominance,
        "selectivity": g.selectivity,
    }


def evaluate_generation(
    population: Sequence[Genome],
    partition: SpeciesPartition,
    ctx: EvaluationContext,
    threads: int = 1,
    fitness_sharing: bool = False,
) -> Dict[int, FitnessRecord]:
    """Evaluate every individual; merge results by genome id, update species totals.

    A species' total adjusted fitness is the sum of its members' final
    (gated, budget-penalized, smoothed) scores; with ``fitness_sharing`` each
    member's contribution is divided by the species size first.  Seeds are
    fixed per individual, so the result is identical for any thread count or
    completion order.
    """
    if threads <= 1:
        records = {g.id: evaluate_individual(g, partition, None, ctx) for g in population}
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(evaluate_individual, g, partition, None, ctx) for g in population]
            records = {g.id: f.result() for g, f in zip(population, futures)}

    for sp in partition.species:
        total = sum(records[m].smoothed for m in sp.members)
        sp.total_adjusted_fitness = total / len(sp.members) if fitness_sharing else total
    return records
