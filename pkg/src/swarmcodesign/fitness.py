"""Fitness formula, swarm cost accounting, budget penalty, gating, smoothing.

Everything here is a pure function of its inputs; the evaluation pipeline
composes them.  The final per-individual score is
``raw_fitness * budget_penalty``, gated by the sign of the marginal
contribution and smoothed with an EMA across generations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .genome import Genome
from .sim2d import TrialStats


@dataclass(frozen=True)
class FitnessWeights:
    w_delivery: float = 100.0
    w_collab_bonus: float = 50.0
    w_pickup: float = 1.0
    w_energy: float = 0.03
    w_proximity: float = 1.0
    w_closeness: float = 30.0


@dataclass(frozen=True)
class BudgetModel:
    """Swarm budget constraint plus the component cost table."""

    c_budget: float = math.inf  # infinite budget disables the penalty
    decay: float = 0.001
    floor: float = 0.05
    species_fee: float = 0.0  # fabrication fee per unique species in the swarm
    chassis_cost: Tuple[float, float, float] = (50.0, 100.0, 200.0)
    motor_cost: Tuple[float, float, float] = (40.0, 90.0, 180.0)
    battery_cost: Tuple[float, float, float] = (30.0, 70.0, 150.0)
    effector_cost: Tuple[float, float] = (20.0, 35.0)  # suction, pincher
    radius_cost_per_m: float = 100.0

    def validate(self) -> None:
        if not 0.0 < self.floor < 1.0:
            raise ConfigError(f"penalty floor must be in (0, 1), got {self.floor}")
        if self.decay < 0:
            raise ConfigError("decay must be non-negative")
        costs = (
            *self.chassis_cost,
            *self.motor_cost,
            *self.battery_cost,
            *self.effector_cost,
            self.radius_cost_per_m,
            self.species_fee,
        )
        if any(c < 0 for c in costs):
            raise ConfigError("all costs must be non-negative")


@dataclass
class FitnessRecord:
    """Per-individual evaluation outcome."""

    raw: float  # trial-mean raw fitness times the budget penalty
    smoothed: float  # EMA-filtered final score used for selection
    marginal: float  # focal minus baseline trial-set means
    gated: bool  # True when the marginal penalty was applied
    team_summary: Dict[str, float] = field(default_factory=dict)


def raw_fitness(stats: TrialStats, w: FitnessWeights) -> float:
    """Score one trial from its raw statistics.

    Sums the delivery, collaboration, pickup, energy, proximity, and
    closeness terms, halves the total when no package was retrieved, and
    floors the result at 0.1.
    """
    s_delivery = stats.n_delivered * w.w_delivery
    s_collab = (
        stats.grip_points_delivered * w.w_delivery
        + stats.n_collab_delivered * w.w_collab_bonus
    )
    s_pickup = (stats.n_picked + stats.n_collab_picked) * w.w_pickup
    s_energy = stats.energy_avg_final * w.w_energy
    s_proximity = (
        float(np.mean(stats.proximity_scores)) if len(stats.proximity_scores) else 0.0
    ) * w.w_proximity
    s_closeness = (
        float(np.mean(stats.closeness_progress)) if len(stats.closeness_progress) else 0.0
    ) * w.w_closeness

    activity = 0.5 if stats.n_delivered + stats.n_collab_delivered == 0 else 1.0
    total = s_delivery + s_collab + s_pickup + s_energy + s_proximity + s_closeness
    return max(total * activity, 0.1)


def unit_cost(g: Genome, b: BudgetModel) -> float:
    """Fabrication cost of a single robot."""
    hw = g.hardware
    return (
        b.chassis_cost[hw.chassis_tier - 1]
        + b.motor_cost[hw.motor_tier - 1]
        + b.battery_cost[hw.battery_tier - 1]
        + b.effector_cost[hw.end_effector]
        + b.radius_cost_per_m * hw.radius
    )


def swarm_cost(composition: Iterable[Tuple[Genome, int]], species_count: int, b: BudgetModel) -> float:
    """Total fabrication cost: per-robot components plus per-species fees."""
    total = 0.0
    for g, count in composition:
        total += unit_cost(g, b) * count
    return total + species_count * b.species_fee


def budget_penalty(c_swarm: float, b: BudgetModel) -> float:
    """Soft budget multiplier: 1 within budget, exponential decay above, floored."""
    excess = c_swarm - b.c_budget
    if excess <= 0:
        return 1.0
    return max(b.floor, math.exp(-b.decay * excess))


def gated_fitness(f_focal: float, f_baseline: float, base_fitness: float, p_marginal: float = 0.25) -> float:
    """Apply the marginal-contribution gate.

    A strictly positive marginal contribution leaves the score unchanged;
    zero or negative multiplies it by ``p_marginal``.
    """
    if f_focal - f_baseline > 0:
        return base_fitness
    return base_fitness * p_marginal


def ema_smooth(previous: Optional[float], new: float, alpha: float = 0.6) -> float:
    """EMA with ``alpha`` weighting the history; first observation passes through."""
    if previous is None:
        return new
    return alpha * previous + (1.0 - alpha) * new


def roi_fitness(f: float, c_swarm: float, epsilon: float = 1.0) -> float:
    """Return-on-investment objective: fitness per unit of swarm cost."""
    return f / max(c_swarm, epsilon)
