"""Scenario files: loading, defaults, validation, and override plumbing.

A scenario is a nested YAML document validated against the bundled JSON
schema, then materialized into the per-module config dataclasses.  Radius
bounds are stated once (under ``genome``) and propagated into the mutation
and distance configs so they cannot drift apart.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Tuple

import jsonschema
import numpy as np
import yaml

from .errors import ScenarioError
from .evaluation import EvaluationSettings
from .evolution import EvolutionConfig
from .fitness import BudgetModel, FitnessWeights
from .genome import GenomeConfig, MutationConfig
from .sim2d import EnvConfig, PackageGroup, SimParams, spawn_ring_positions
from .speciation import DistanceWeights

ENV_PREFIX = "SWARMCODESIGN_"
OVERRIDABLE = ("seed", "generations", "threads", "objective", "budget", "out")


@dataclass(frozen=True)
class Scenario:
    """Fully resolved run configuration."""

    name: str
    seed: int
    generations: int
    threads: int
    swarm_size: int
    checkpoint_interval: int
    env: EnvConfig
    params: SimParams
    genome_config: GenomeConfig
    mutation: MutationConfig
    distance: DistanceWeights
    fitness_weights: FitnessWeights
    budget: BudgetModel
    evolution: EvolutionConfig
    evaluation: EvaluationSettings
    raw: Dict = field(default_factory=dict, compare=False)


def _schema() -> Dict:
    with resources.files("swarmcodesign").joinpath("scenario_schema.json").open("r") as fh:
        return json.load(fh)


def _merge(defaults: Dict, override: Optional[Dict]) -> Dict:
    out = dict(defaults)
    for key, value in (override or {}).items():
        out[key] = value
    return out


def _as_tuple3(value) -> Tuple[float, float, float]:
    return (float(value[0]), float(value[1]), float(value[2]))


def scenario_from_dict(raw: Dict) -> Scenario:
    """Materialize a (schema-validated) scenario dict into config objects."""
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario invalid at {path}: {exc.message}") from None

    arena = raw.get("arena", {})
    base = arena.get("base", {})
    obstacles = arena.get("obstacles", {})
    groups = []
    for spec in raw.get("packages", [{"count": 16}]):
        groups.append(
            PackageGroup(
                count=int(spec["count"]),
                kind=spec.get("kind", "individual"),
                shape=spec.get("shape", "mixed"),
                weight_law=spec.get("weight_law", "uniform"),
                weight_min=float(spec.get("weight_min", 1.0)),
                weight_max=float(spec.get("weight_max", 6.0)),
                radius_base=float(spec.get("radius_base", 0.08)),
                radius_per_kg=float(spec.get("radius_per_kg", 0.02)),
                grip_points_min=int(spec.get("grip_points_min", 2)),
                grip_points_max=int(spec.get("grip_points_max", 4)),
                grip_effectors=spec.get("grip_effectors", "alternate"),
            )
        )
    env = EnvConfig(
        width=float(arena.get("width", 16.0)),
        height=float(arena.get("height", 16.0)),
        base_x=float(base.get("x", arena.get("width", 16.0) / 2.0)),
        base_y=float(base.get("y", arena.get("height", 16.0) / 2.0)),
        base_radius=float(base.get("radius", 1.2)),
        obstacle_count=int(obstacles.get("count", 5)),
        obstacle_radius_min=float(obstacles.get("radius_min", 0.4)),
        obstacle_radius_max=float(obstacles.get("radius_max", 0.8)),
        packages=tuple(groups),
    )

    sim = raw.get("sim", {})
    params_kwargs = {}
    for name in (
        "dt", "max_speed", "pickup_range", "kp", "kd", "c_move", "c_idle",
        "stuck_fraction", "band_lo", "band_hi", "walk_reach",
        "lift_ref_radius", "lift_reserve",
    ):
        if name in sim:
            params_kwargs[name] = float(sim[name])
    for name in ("ticks", "stuck_window", "walk_redraw_ticks"):
        if name in sim:
            params_kwargs[name] = int(sim[name])
    for name in ("chassis_density", "motor_force", "motor_torque", "battery_capacity"):
        if name in sim:
            params_kwargs[name] = _as_tuple3(sim[name])
    params = SimParams(**params_kwargs)

    gset = raw.get("genome", {})
    genome_config = GenomeConfig(
        tag_length=int(gset.get("tag_length", 16)),
        radius_min=float(gset.get("radius_min", 0.1)),
        radius_max=float(gset.get("radius_max", 0.5)),
        bt_length=int(gset.get("bt_length", 32)),
        selectivity_init=tuple(gset.get("selectivity_init", (0.2, 0.8))),
        dominance_init=tuple(gset.get("dominance_init", (0.1, 0.9))),
    )

    mut = raw.get("mutation", {})
    mutation = MutationConfig(
        tag_flip_p=float(mut.get("tag_flip_p", 0.05)),
        selectivity_sigma=float(mut.get("selectivity_sigma", 0.1)),
        dominance_sigma=float(mut.get("dominance_sigma", 0.1)),
        radius_sigma=float(mut.get("radius_sigma", 0.1 * (genome_config.radius_max - genome_config.radius_min))),
        setpoint_sigma=float(mut.get("setpoint_sigma", 0.1)),
        tier_reassign_p=float(mut.get("tier_reassign_p", 0.1)),
        effector_flip_p=float(mut.get("effector_flip_p", 0.1)),
        bt_mutation_p=float(mut.get("bt_mutation_p", 0.9)),
        bt_subtree_p=float(mut.get("bt_subtree_p", 0.05)),
        radius_min=genome_config.radius_min,
        radius_max=genome_config.radius_max,
    )

    dist = raw.get("distance", {})
    distance = DistanceWeights(
        w_tag=float(dist.get("w_tag", 1.0)),
        w_hw=float(dist.get("w_hw", 0.5)),
        w_bt=float(dist.get("w_bt", 0.3)),
        w_tool=float(dist.get("w_tool", 0.35)),
        w_size=float(dist.get("w_size", 0.7)),
        gamma=float(dist.get("gamma", 2.0)),
        radius_min=genome_config.radius_min,
        radius_max=genome_config.radius_max,
    )

    fit = raw.get("fitness", {})
    fitness_weights = FitnessWeights(
        w_delivery=float(fit.get("w_delivery", 100.0)),
        w_collab_bonus=float(fit.get("w_collab_bonus", 50.0)),
        w_pickup=float(fit.get("w_pickup", 1.0)),
        w_energy=float(fit.get("w_energy", 0.03)),
        w_proximity=float(fit.get("w_proximity", 1.0)),
        w_closeness=float(fit.get("w_closeness", 30.0)),
    )

    bud = raw.get("budget", {})
    amount = bud.get("amount")
    budget = BudgetModel(
        c_budget=math.inf if amount is None else float(amount),
        decay=float(bud.get("decay", 0.001)),
        floor=float(bud.get("floor", 0.05)),
        species_fee=float(bud.get("species_fee", 0.0)),
        chassis_cost=_as_tuple3(bud.get("chassis_cost", (50.0, 100.0, 200.0))),
        motor_cost=_as_tuple3(bud.get("motor_cost", (40.0, 90.0, 180.0))),
        battery_cost=_as_tuple3(bud.get("battery_cost", (30.0, 70.0, 150.0))),
        effector_cost=(
            float(bud.get("effector_cost", (20.0, 35.0))[0]),
            float(bud.get("effector_cost", (20.0, 35.0))[1]),
        ),
        radius_cost_per_m=float(bud.get("radius_cost_per_m", 100.0)),
    )

    evo = raw.get("evolution", {})
    evolution = EvolutionConfig(
        population_size=int(raw.get("population_size", 30)),
        elite_cap=int(evo.get("elite_cap", 3)),
        tournament_size=int(evo.get("tournament_size", 3)),
        max_partner_retries=int(evo.get("max_partner_retries", 5)),
        intra_crossover_p=float(evo.get("intra_crossover_p", 0.7)),
        inter_crossover_p=float(evo.get("inter_crossover_p", 0.025)),
        delta=float(dist.get("delta", 0.4)),
        crossover_blend=bool(evo.get("crossover_blend", False)),
        fitness_sharing=bool(evo.get("fitness_sharing", False)),
    )

    ev = raw.get("evaluation", {})
    evaluation = EvaluationSettings(
        swarm_size=int(raw.get("swarm_size", 10)),
        n_trials=int(ev.get("n_trials", 3)),
        p_marginal=float(ev.get("p_marginal", 0.25)),
        ema_alpha=float(ev.get("ema_alpha", 0.6)),
        objective=raw.get("objective", "fitness"),
    )

    return Scenario(
        name=str(raw.get("name", "unnamed")),
        seed=int(raw.get("seed", 0)),
        generations=int(raw.get("generations", 100)),
        threads=int(raw.get("threads", 1)),
        swarm_size=int(raw.get("swarm_size", 10)),
        checkpoint_interval=int(raw.get("checkpoint_interval", 25)),
        env=env,
        params=params,
        genome_config=genome_config,
        mutation=mutation,
        distance=distance,
        fitness_weights=fitness_weights,
        budget=budget,
        evolution=evolution,
        evaluation=evaluation,
        raw=raw,
    )


def resolved_dict(scenario: Scenario) -> Dict:
    """JSON-safe resolved configuration for the run manifest."""
    out = {
        "name": scenario.name,
        "seed": scenario.seed,
        "generations": scenario.generations,
        "threads": scenario.threads,
        "swarm_size": scenario.swarm_size,
        "population_size": scenario.evolution.population_size,
        "objective": scenario.evaluation.objective,
        "checkpoint_interval": scenario.checkpoint_interval,
        "env": asdict(scenario.env),
        "sim": asdict(scenario.params),
        "genome": asdict(scenario.genome_config),
        "mutation": asdict(scenario.mutation),
        "distance": asdict(scenario.distance),
        "fitness": asdict(scenario.fitness_weights),
        "budget": asdict(scenario.budget),
        "evolution": asdict(scenario.evolution),
        "evaluation": asdict(scenario.evaluation),
    }
    if math.isinf(out["budget"]["c_budget"]):
        out["budget"]["c_budget"] = None
    out["env"]["packages"] = [asdict(g) for g in scenario.env.packages]
    return out


def apply_env_overrides(raw: Dict, environ=None) -> Dict:
    """Apply SWARMCODESIGN_* environment overrides (weaker than CLI flags)."""
    environ = os.environ if environ is None else environ
    out = dict(raw)
    if ENV_PREFIX + "SEED" in environ:
        out["seed"] = int(environ[ENV_PREFIX + "SEED"])
    if ENV_PREFIX + "GENERATIONS" in environ:
        out["generations"] = int(environ[ENV_PREFIX + "GENERATIONS"])
    if ENV_PREFIX + "THREADS" in environ:
        out["threads"] = int(environ[ENV_PREFIX + "THREADS"])
    if ENV_PREFIX + "OBJECTIVE" in environ:
        out["objective"] = environ[ENV_PREFIX + "OBJECTIVE"]
    if ENV_PREFIX + "BUDGET" in environ:
        out.setdefault("budget", {})
        out["budget"] = dict(out["budget"])
        out["budget"]["amount"] = float(environ[ENV_PREFIX + "BUDGET"])
    return out


def apply_flag_overrides(raw: Dict, args) -> Dict:
    """Apply argparse overrides (strongest precedence)."""
    out = dict(raw)
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "generations", None) is not None:
        out["generations"] = args.generations
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "objective", None) is not None:
        out["objective"] = args.objective
    if getattr(args, "budget", None) is not None:
        out.setdefault("budget", {})
        out["budget"] = dict(out["budget"])
        out["budget"]["amount"] = args.budget
    return out


def load_scenario(path, args=None, environ=None) -> Scenario:
    """Load a scenario file with env-var and flag overrides applied."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: scenario file must contain a mapping")
    raw = apply_env_overrides(raw, environ)
    if args is not None:
        raw = apply_flag_overrides(raw, args)
    return scenario_from_dict(raw)


def validate_scenario(scenario: Scenario) -> Tuple[List[str], List[str]]:
    """Semantic checks beyond the schema; returns (errors, warnings)."""
    errors: List[str] = []
    warnings: List[str] = []

    def check(config, label):
        try:
            config.validate()
        except Exception as exc:
            errors.append(f"{label}: {exc}")

    check(scenario.genome_config, "genome")
    check(scenario.mutation, "mutation")
    check(scenario.distance, "distance")
    check(scenario.budget, "budget")
    check(scenario.evolution, "evolution")

    if scenario.seed < 0:
        errors.append("seed: must be non-negative")
    if scenario.generations < 1:
        errors.append("generations: must be >= 1")
    if scenario.swarm_size < 1:
        errors.append("swarm_size: must be >= 1")
    if scenario.evaluation.objective not in ("fitness", "roi"):
        errors.append(f"objective: unknown mode {scenario.evaluation.objective!r}")

    p = scenario.params
    if p.dt <= 0 or p.ticks < 1:
        errors.append("sim: dt must be positive and ticks >= 1")
    if p.max_speed * p.dt >= scenario.genome_config.radius_min:
        errors.append(
            "sim: max_speed*dt must stay below radius_min (per-tick displacement "
            f"{p.max_speed * p.dt:.3f} m vs radius_min {scenario.genome_config.radius_min} m)"
        )
    if p.pickup_range <= 0:
        errors.append("sim.pickup_range: must be positive")

    env = scenario.env
    # spawn feasibility: every ring position must land inside the arena
    positions = spawn_ring_positions(
        scenario.swarm_size,
        np.array([env.base_x, env.base_y]),
        env.base_radius,
        scenario.genome_config.radius_max,
    )
    margin = scenario.genome_config.radius_max
    if (
        positions[:, 0].min() < margin
        or positions[:, 0].max() > env.width - margin
        or positions[:, 1].min() < margin
        or positions[:, 1].max() > env.height - margin
    ):
        errors.append("arena: swarm spawn rings do not fit inside the arena")

    for gi, group in enumerate(env.packages):
        if group.count < 0:
            errors.append(f"packages[{gi}].count: must be >= 0")
        if group.weight_min > group.weight_max:
            errors.append(f"packages[{gi}]: weight_min > weight_max")
        r_lo = group.radius_base + group.radius_per_kg * group.weight_min
        r_hi = group.radius_base + group.radius_per_kg * group.weight_max
        band_lo = p.band_lo * r_lo
        band_hi = p.band_hi * r_hi
        if band_hi < scenario.genome_config.radius_min or band_lo > scenario.genome_config.radius_max:
            warnings.append(
                f"packages[{gi}]: no robot radius in [{scenario.genome_config.radius_min}, "
                f"{scenario.genome_config.radius_max}] falls inside the compatibility band"
            )
        if group.kind == "collaborative" and not (1 <= group.grip_points_min <= group.grip_points_max <= 4):
            errors.append(f"packages[{gi}]: grip points must satisfy 1 <= min <= max <= 4")

    max_partners = scenario.evolution.population_size - 1
    if scenario.swarm_size < 1 + max_partners:
        warnings.append(
            f"swarm_size {scenario.swarm_size} < 1 + worst-case partner count {max_partners}; "
            "partner sets larger than the swarm are truncated to the nearest tags"
        )
    return errors, warnings
