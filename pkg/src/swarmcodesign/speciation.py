"""Genetic compatibility distances, species assignment, and partner choice.

Species are maintained NEAT-style: each previous species re-selects its
prototype as the population member nearest the old prototype, remaining
individuals join their nearest prototype within the threshold ``delta``, and
anyone left founds a new species.  Partner selection for collaborative
evaluation is decoupled from full genetic distance: it reads only the tag
bitstrings and the focal individual's selectivity gene.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .genome import Genome

_HW_DIMS = 5.0  # chassis/battery/motor tiers + two setpoints


@dataclass(frozen=True)
class DistanceWeights:
    """Weights and parameters of the compatibility metric.

    ``radius_min``/``radius_max`` normalize the radius-difference component;
    the scenario loader keeps them in sync with the genome bounds.
    """

    w_tag: float = 1.0
    w_hw: float = 0.5
    w_bt: float = 0.3
    w_tool: float = 0.35
    w_size: float = 0.7
    gamma: float = 2.0
    radius_min: float = 0.1
    radius_max: float = 0.5

    def validate(self) -> None:
        for name in ("w_tag", "w_hw", "w_bt", "w_tool", "w_size"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if not self.radius_min < self.radius_max:
            raise ConfigError("radius bounds must satisfy min < max")


@dataclass
class Species:
    species_id: int
    prototype: Genome
    members: List[int]  # genome ids, prototype first
    total_adjusted_fitness: float = 0.0
    age: int = 0


@dataclass
class SpeciesPartition:
    species: List[Species] = field(default_factory=list)
    assignment: Dict[int, int] = field(default_factory=dict)  # genome id -> species id
    next_species_id: int = 0

    def species_of(self, genome_id: int) -> Species:
        return self.species_of_id(self.assignment[genome_id])

    def species_of_id(self, species_id: int) -> Species:
        for sp in self.species:
            if sp.species_id == species_id:
                return sp
        raise KeyError(f"species {species_id} not in partition")


def tag_distance(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    """(H / L) ** gamma, with H the Hamming distance between the bitstrings."""
    if a.shape != b.shape:
        raise ShapeError(f"tag shapes differ: {a.shape} vs {b.shape}")
    hamming = int(np.count_nonzero(a != b))
    return (hamming / a.shape[0]) ** gamma


def compatibility_distance(a: Genome, b: Genome, w: DistanceWeights) -> float:
    """Weighted sum of per-component gene distances.

    Components: tag (Hamming, gamma-scaled), continuous hardware excluding
    radius and tool (range-normalized Euclidean over tiers and setpoints,
    divided by sqrt(dims) so it stays in [0, 1]), fraction of differing
    opcodes, binary tool difference, and range-normalized radius difference.
    """
    if a.behavior.opcodes.shape != b.behavior.opcodes.shape:
        raise ShapeError("behavior arrays differ in shape")
    d_tag = tag_distance(a.tag, b.tag, w.gamma)

    ha, hb = a.hardware, b.hardware
    diffs = (
        (ha.chassis_tier - hb.chassis_tier) / 2.0,
        (ha.battery_tier - hb.battery_tier) / 2.0,
        (ha.motor_tier - hb.motor_tier) / 2.0,
        ha.torque_setpoint - hb.torque_setpoint,
        ha.battery_setpoint - hb.battery_setpoint,
    )
    d_hw = float(np.sqrt(sum(d * d for d in diffs)) / np.sqrt(_HW_DIMS))

    d_bt = float(np.count_nonzero(a.behavior.opcodes != b.behavior.opcodes)) / a.behavior.opcodes.shape[0]
    d_tool = 0.0 if ha.end_effector == hb.end_effector else 1.0
    d_size = abs(ha.radius - hb.radius) / (w.radius_max - w.radius_min)

    return (
        w.w_tag * d_tag
        + w.w_hw * d_hw
        + w.w_bt * d_bt
        + w.w_tool * d_tool
        + w.w_size * d_size
    )


def _nearest(genome: Genome, candidates: List[Species], w: DistanceWeights):
    """Nearest species by prototype distance; ties break to the lowest id."""
    best: Optional[Species] = None
    best_d = np.inf
    for sp in sorted(candidates, key=lambda s: s.species_id):
        d = compatibility_distance(genome, sp.prototype, w)
        if d < best_d:
            best, best_d = sp, d
    return best, best_d


def assign_species(
    population: List[Genome],
    previous: Optional[SpeciesPartition],
    delta: float,
    w: DistanceWeights,
) -> SpeciesPartition:
    """Partition ``population`` into species, continuing previous lineages.

    Survival pass (ascending species id): each previous species claims the
    unclaimed member nearest its old prototype as the new prototype, provided
    that member lies within ``delta``; otherwise the lineage is extinct.
    Assignment pass (population order): every remaining individual joins its
    nearest prototype within ``delta`` or founds a new species.  Newly
    founded species immediately become candidate prototypes.
    """
    if not population:
        raise ShapeError("population must be non-empty")
    previous = previous or SpeciesPartition()

    pool = list(population)
    survivors: List[Species] = []
    for old in sorted(previous.species, key=lambda s: s.species_id):
        if not pool:
            break
        dists = [compatibility_distance(g, old.prototype, w) for g in pool]
        idx = int(np.argmin(dists))
        if dists[idx] <= delta:
            claimed = pool.pop(idx)
            survivors.append(
                Species(
                    species_id=old.species_id,
                    prototype=claimed,
                    members=[claimed.id],
                    age=old.age + 1,
                )
            )

    partition = SpeciesPartition(
        species=survivors,
        assignment={sp.prototype.id: sp.species_id for sp in survivors},
        next_species_id=previous.next_species_id,
    )
    for g in pool:
        sp, d = _nearest(g, partition.species, w)
        if sp is not None and d <= delta:
            sp.members.append(g.id)
            partition.assignment[g.id] = sp.species_id
        else:
            fresh = Species(
                species_id=partition.next_species_id,
                prototype=g,
                members=[g.id],
                age=0,
            )
            partition.next_species_id += 1
            partition.species.append(fresh)
            partition.assignment[g.id] = fresh.species_id
    partition.species.sort(key=lambda s: s.species_id)
    return partition


def select_partners(focal: Genome, partition: SpeciesPartition, gamma: float) -> List[int]:
    """Species ids whose prototype tag lies strictly within the focal's selectivity.

    Reads nothing but tags and the selectivity gene; the focal's own species
    is never a partner.  Output is sorted ascending for determinism.
    """
    own = partition.assignment.get(focal.id)
    partners = []
    for sp in sorted(partition.species, key=lambda s: s.species_id):
        if sp.species_id == own:
            continue
        if tag_distance(focal.tag, sp.prototype.tag, gamma) < focal.selectivity:
            partners.append(sp.species_id)
    return partners
