"""Generation loop: elitism, offspring quotas, compatibility-constrained mating.

Each generation: dynamic speciation, collaborative evaluation, then
reproduction.  Population slots are apportioned to species in proportion to
total adjusted fitness (largest-remainder, exact); each species fills its
quota with its top elites first (capped by the elite formula) and offspring
for the rest.  A species whose quota reaches zero goes extinct, which is what
prunes the large burst of singleton species a random initial population
produces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .evaluation import (
    EvaluationContext,
    EvaluationSettings,
    elite_count,
    evaluate_generation,
)
from .fitness import BudgetModel, FitnessRecord, FitnessWeights
from .genome import Genome, GenomeConfig, MutationConfig, crossover, mutate, random_genome
from .seeding import SALT_INIT, SALT_MATING, derive_rng
from .sim2d import EnvConfig, SimParams
from .speciation import DistanceWeights, Species, SpeciesPartition, assign_species, compatibility_distance

__all__ = [
    "EvolutionConfig",
    "EngineState",
    "GenerationReport",
    "elite_count",
    "allocate_offspring",
    "select_parents",
    "make_offspring",
    "init_state",
    "step_generation",
    "best_team",
]


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 30
    elite_cap: int = 3
    tournament_size: int = 3
    max_partner_retries: int = 5
    intra_crossover_p: float = 0.7
    inter_crossover_p: float = 0.025
    delta: float = 0.4
    crossover_blend: bool = False
    fitness_sharing: bool = False

    def validate(self) -> None:
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.elite_cap < 1:
            raise ConfigError("elite_cap must be >= 1")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        for name in ("intra_crossover_p", "inter_crossover_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")


@dataclass
class GenerationReport:
    """One generation's telemetry.

    ``duration_s`` is wall clock and is kept out of serialized run logs so
    logs stay byte-identical across reruns.
    """

    generation: int
    census: Dict[int, int]
    founded: List[int]
    extinct: List[int]
    best: Dict[str, object]
    duration_s: float = 0.0


@dataclass
class EngineState:
    population: List[Genome]
    partition: Optional[SpeciesPartition]
    records: Dict[int, FitnessRecord]
    generation: int
    rng: np.random.Generator
    master_seed: int


def allocate_offspring(species: List[Species], slots: int) -> Dict[int, int]:
    """Largest-remainder apportionment of ``slots`` by total adjusted fitness.

    Quotas sum exactly to ``slots``.  Zero-fitness species receive nothing
    unless every species is at zero, in which case shares are uniform.
    """
    if slots < 0:
        raise ValueError(f"slots must be non-negative, got {slots}")
    ordered = sorted(species, key=lambda s: s.species_id)
    totals = np.array([max(s.total_adjusted_fitness, 0.0) for s in ordered], dtype=np.float64)
    if totals.sum() <= 0:
        shares = np.full(len(ordered), slots / len(ordered))
    else:
        shares = totals / totals.sum() * slots
    quotas = np.floor(shares).astype(int)
    remainders = shares - quotas
    short = slots - int(quotas.sum())
    # ties broken toward the lower species id (stable sort on -remainder)
    for idx in sorted(range(len(ordered)), key=lambda i: (-remainders[i], ordered[i].species_id))[:short]:
        quotas[idx] += 1
    return {sp.species_id: int(q) for sp, q in zip(ordered, quotas)}


def _tournament(candidates: List[int], fitness: Dict[int, float], k: int, rng: np.random.Generator) -> int:
    best_id = candidates[int(rng.integers(len(candidates)))]
    for _ in range(k - 1):
        challenger = candidates[int(rng.integers(len(candidates)))]
        if fitness.get(challenger, 0.0) > fitness.get(best_id, 0.0):
            best_id = challenger
    return best_id


def select_parents(
    species: Species,
    partition: SpeciesPartition,
    population_ids: List[int],
    fitness: Dict[int, float],
    genomes_by_id: Dict[int, Genome],
    weights: DistanceWeights,
    config: EvolutionConfig,
    rng: np.random.Generator,
) -> Tuple[Genome, Genome]:
    """Tournament mating with a compatibility constraint on the second parent.

    Parent two must lie within ``delta`` of parent one; after
    ``max_partner_retries`` failed intra-species tournaments, one global
    tournament over the whole population is accepted unconditionally.
    """
    k = config.tournament_size
    p1 = genomes_by_id[_tournament(species.members, fitness, k, rng)]
    for _ in range(config.max_partner_retries):
        candidate = genomes_by_id[_tournament(species.members, fitness, k, rng)]
        if compatibility_distance(p1, candidate, weights) < config.delta:
            return p1, candidate
    p2 = genomes_by_id[_tournament(population_ids, fitness, k, rng)]
    return p1, p2


def make_offspring(
    p1: Genome,
    p2: Genome,
    partition: SpeciesPartition,
    config: EvolutionConfig,
    mc: MutationConfig,
    rng: np.random.Generator,
) -> Genome:
    """Crossover-or-clone (same-species 70%, cross-species 2.5%), then mutate."""
    same = partition.assignment.get(p1.id) == partition.assignment.get(p2.id)
    p_cross = config.intra_crossover_p if same else config.inter_crossover_p
    child = crossover(p1, p2, rng, blend=config.crossover_blend) if rng.random() < p_cross else p1
    return mutate(child, mc, rng)


def init_state(
    genome_config: GenomeConfig,
    evolution_config: EvolutionConfig,
    master_seed: int,
) -> EngineState:
    init_rng = derive_rng(master_seed, SALT_INIT)
    population = [random_genome(genome_config, init_rng) for _ in range(evolution_config.population_size)]
    return EngineState(
        population=population,
        partition=None,
        records={},
        generation=0,
        rng=derive_rng(master_seed, SALT_MATING),
        master_seed=master_seed,
    )


def step_generation(
    state: EngineState,
    env: EnvConfig,
    params: SimParams,
    fitness_weights: FitnessWeights,
    budget: BudgetModel,
    settings: EvaluationSettings,
    distance_weights: DistanceWeights,
    evolution_config: EvolutionConfig,
    mutation_config: MutationConfig,
    threads: int = 1,
) -> Tuple[EngineState, GenerationReport]:
    """Run one generation; returns the successor state and a report.

    The input state is never modified: a failed evaluation propagates with
    the original state intact.
    """
    t_start = time.perf_counter()
    partition = assign_species(state.population, state.partition, evolution_config.delta, distance_weights)

    genomes_by_id = {g.id: g for g in state.population}
    ctx = EvaluationContext(
        env=env,
        params=params,
        weights=fitness_weights,
        budget=budget,
        settings=settings,
        gamma=distance_weights.gamma,
        elite_cap=evolution_config.elite_cap,
        master_seed=state.master_seed,
        generation=state.generation,
        genomes_by_id=genomes_by_id,
        prev_fitness={gid: rec.smoothed for gid, rec in state.records.items()},
    )
    records = evaluate_generation(
        state.population, partition, ctx, threads=threads,
        fitness_sharing=evolution_config.fitness_sharing,
    )
    fitness_map = {gid: rec.smoothed for gid, rec in records.items()}

    quotas = allocate_offspring(partition.species, evolution_config.population_size)
    population_ids = [g.id for g in state.population]
    next_population: List[Genome] = []
    rng = state.rng
    for sp in sorted(partition.species, key=lambda s: s.species_id):
        quota = quotas[sp.species_id]
        if quota == 0:
            continue
        ranked = sorted(range(len(sp.members)), key=lambda i: (-fitness_map[sp.members[i]], i))
        n_elite = min(elite_count(len(sp.members), evolution_config.elite_cap), quota)
        next_population.extend(genomes_by_id[sp.members[i]] for i in ranked[:n_elite])
        for _ in range(quota - n_elite):
            p1, p2 = select_parents(
                sp, partition, population_ids, fitness_map, genomes_by_id,
                distance_weights, evolution_config, rng,
            )
            next_population.append(make_offspring(p1, p2, partition, evolution_config, mutation_config, rng))
    assert len(next_population) == evolution_config.population_size

    previous_ids = {sp.species_id for sp in state.partition.species} if state.partition else set()
    current_ids = {sp.species_id for sp in partition.species}
    report = GenerationReport(
        generation=state.generation,
        census={sp.species_id: len(sp.members) for sp in partition.species},
        founded=sorted(current_ids - previous_ids),
        extinct=sorted(previous_ids - current_ids),
        best=_best_record(state.population, partition, records),
        duration_s=time.perf_counter() - t_start,
    )
    next_state = EngineState(
        population=next_population,
        partition=partition,
        records=records,
        generation=state.generation + 1,
        rng=rng,
        master_seed=state.master_seed,
    )
    return next_state, report


def _best_record(population, partition: SpeciesPartition, records: Dict[int, FitnessRecord]) -> Dict[str, object]:
    best = max(population, key=lambda g: (records[g.id].smoothed, -g.id))
    rec = records[best.id]
    return {
        "genome_id": best.id,
        "species_id": partition.assignment[best.id],
        "fitness": rec.smoothed,
        "raw": rec.raw,
        "marginal": rec.marginal,
        "gated": rec.gated,
        "team": rec.team_summary,
        "program": [int(op) for op in best.behavior.opcodes],
    }


def best_team(state: EngineState) -> Optional[Dict[str, object]]:
    """Best evaluated individual's team composition and score, if any."""
    if not state.records or state.partition is None:
        return None
    evaluated = [g for g in state.population if g.id in state.records]
    if not evaluated:
        return None
    return _best_record(evaluated, state.partition, state.records)
