"""Heterogeneous genome: partner tag, routing genes, task policy, hardware.

One genome describes one robot design end to end.  All operations are pure
given an explicit ``numpy.random.Generator``; fresh genome ids are drawn from
the same stream so identical seeds reproduce identical genomes bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from . import btvm
from .errors import ConfigError, ShapeError

EFFECTOR_SUCTION = 0
EFFECTOR_PINCHER = 1
EFFECTOR_NAMES = {EFFECTOR_SUCTION: "suction", EFFECTOR_PINCHER: "pincher"}

TIERS = (1, 2, 3)

# Pre-made seed policy templates: a full forage-return loop, a greedy
# explorer, and a collaborator biased toward random package targets.
_B = btvm
TEMPLATE_FORAGE_RETURN = (
    _B.SEL,
    _B.SEQ, _B.COND_HAS_PACKAGE,
    _B.SEL,
    _B.SEQ, _B.COND_NEAR_BASE, _B.ACT_DROP, _B.END,
    _B.ACT_MOVE_TO_BASE,
    _B.END,
    _B.END,
    _B.SEQ,
    _B.SEL,
    _B.SEQ, _B.COND_NEAR_PACKAGE, _B.ACT_PICK_UP, _B.END,
    _B.ACT_MOVE_TO_PACK,
    _B.END,
    _B.END,
    _B.ACT_RANDOM_WALK,
    _B.END,
)
TEMPLATE_EXPLORER = (
    _B.SEL,
    _B.SEQ, _B.COND_NEAR_PACKAGE, _B.ACT_PICK_UP, _B.END,
    _B.SEQ, _B.COND_HAS_PACKAGE, _B.ACT_MOVE_TO_BASE, _B.END,
    _B.ACT_RANDOM_WALK,
    _B.END,
)
TEMPLATE_COLLABORATOR = (
    _B.SEL,
    _B.SEQ, _B.COND_AM_I_STUCK, _B.ACT_RANDOM_WALK, _B.END,
    _B.SEQ, _B.COND_HAS_PACKAGE,
    _B.SEL,
    _B.SEQ, _B.COND_NEAR_BASE, _B.ACT_DROP, _B.END,
    _B.ACT_MOVE_TO_BASE,
    _B.END,
    _B.END,
    _B.SEQ, _B.COND_NEAR_PACKAGE, _B.ACT_PICK_UP, _B.END,
    _B.ACT_MOVE_TO_RANDOM_PACK,
    _B.END,
)
SEED_TEMPLATES = (TEMPLATE_FORAGE_RETURN, TEMPLATE_EXPLORER, TEMPLATE_COLLABORATOR)


@dataclass(frozen=True)
class GenomeConfig:
    """Bounds and shapes shared by every genome of a run."""

    tag_length: int = 16
    radius_min: float = 0.1
    radius_max: float = 0.5
    bt_length: int = 32
    selectivity_init: Tuple[float, float] = (0.2, 0.8)
    dominance_init: Tuple[float, float] = (0.1, 0.9)

    def validate(self) -> None:
        if self.tag_length < 1:
            raise ConfigError(f"tag_length must be >= 1, got {self.tag_length}")
        if not self.radius_min < self.radius_max:
            raise ConfigError(
                f"radius bounds must satisfy min < max, got [{self.radius_min}, {self.radius_max}]"
            )
        if self.radius_min <= 0:
            raise ConfigError("radius_min must be positive")
        if self.bt_length < max(len(t) for t in SEED_TEMPLATES):
            raise ConfigError(f"bt_length {self.bt_length} shorter than the seed templates")
        for name in ("selectivity_init", "dominance_init"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigError(f"{name} must be an ordered sub-interval of [0, 1]")


@dataclass(frozen=True)
class MutationConfig:
    """Per-gene mutation rates and step sizes.

    ``radius_min``/``radius_max`` duplicate the genome bounds so mutation can
    clamp without a second config object; the scenario loader keeps them in
    sync with :class:`GenomeConfig`.
    """

    tag_flip_p: float = 0.05
    selectivity_sigma: float = 0.1
    dominance_sigma: float = 0.1
    radius_sigma: float = 0.04
    setpoint_sigma: float = 0.1
    tier_reassign_p: float = 0.1
    effector_flip_p: float = 0.1
    bt_mutation_p: float = 0.9
    bt_subtree_p: float = 0.05  # remainder are point mutations
    radius_min: float = 0.1
    radius_max: float = 0.5

    def validate(self) -> None:
        for name in ("tag_flip_p", "tier_reassign_p", "effector_flip_p", "bt_mutation_p", "bt_subtree_p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name in ("selectivity_sigma", "dominance_sigma", "radius_sigma", "setpoint_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.radius_min < self.radius_max:
            raise ConfigError("mutation radius bounds must satisfy min < max")


@dataclass(frozen=True)
class HardwareGenes:
    radius: float
    chassis_tier: int
    battery_tier: int
    motor_tier: int
    end_effector: int
    torque_setpoint: float
    battery_setpoint: float


@dataclass(frozen=True, eq=False)
class BehaviorGenes:
    opcodes: np.ndarray  # int32, fixed bt_length, values in [0, 13]


@dataclass(frozen=True, eq=False)
class Genome:
    id: int
    tag: np.ndarray  # uint8, fixed tag_length, values in {0, 1}
    selectivity: float
    dominance: float
    behavior: BehaviorGenes
    hardware: HardwareGenes


def genes_equal(a: Genome, b: Genome) -> bool:
    """Value equality over every gene, ignoring the ids."""
    return (
        np.array_equal(a.tag, b.tag)
        and a.selectivity == b.selectivity
        and a.dominance == b.dominance
        and np.array_equal(a.behavior.opcodes, b.behavior.opcodes)
        and a.hardware == b.hardware
    )


def check_genome(g: Genome, config: GenomeConfig) -> None:
    """Raise if any gene violates its domain."""
    if g.tag.shape != (config.tag_length,):
        raise ShapeError(f"tag length {g.tag.shape} != {config.tag_length}")
    if not np.all((g.tag == 0) | (g.tag == 1)):
        raise ShapeError("tag bits must be 0 or 1")
    if not 0.0 <= g.selectivity <= 1.0:
        raise ShapeError(f"selectivity {g.selectivity} outside [0, 1]")
    if not 0.0 <= g.dominance <= 1.0:
        raise ShapeError(f"dominance {g.dominance} outside [0, 1]")
    ops = g.behavior.opcodes
    if ops.shape != (config.bt_length,):
        raise ShapeError(f"behavior length {ops.shape} != {config.bt_length}")
    if np.any((ops < 0) | (ops >= btvm.N_OPCODES)):
        raise ShapeError("behavior opcode outside [0, 13]")
    hw = g.hardware
    if not config.radius_min <= hw.radius <= config.radius_max:
        raise ShapeError(f"radius {hw.radius} outside bounds")
    for name in ("chassis_tier", "battery_tier", "motor_tier"):
        if getattr(hw, name) not in TIERS:
            raise ShapeError(f"{name} must be in {TIERS}")
    if hw.end_effector not in (EFFECTOR_SUCTION, EFFECTOR_PINCHER):
        raise ShapeError("end_effector must be 0 (suction) or 1 (pincher)")
    for name in ("torque_setpoint", "battery_setpoint"):
        if not 0.0 <= getattr(hw, name) <= 1.0:
            raise ShapeError(f"{name} outside [0, 1]")


def _fresh_id(rng: np.random.Generator) -> int:
    # Ids come from the caller's stream so runs replay identically; 62 bits
    # keeps collisions out of reach for any realistic population history.
    return int(rng.integers(1, 1 << 62))


def _template_opcodes(template: Tuple[int, ...], length: int) -> np.ndarray:
    ops = np.full(length, btvm.NOP, dtype=np.int32)
    ops[: len(template)] = template
    return ops


def random_genome(config: GenomeConfig, rng: np.random.Generator) -> Genome:
    """Draw one genome uniformly within the configured bounds.

    The task policy is one of the pre-made seed templates, chosen uniformly;
    mutation supplies behavioral diversity from the first offspring onward.
    """
    config.validate()
    genome_id = _fresh_id(rng)
    tag = rng.integers(0, 2, size=config.tag_length).astype(np.uint8)
    selectivity = float(rng.uniform(*config.selectivity_init))
    dominance = float(rng.uniform(*config.dominance_init))
    template = SEED_TEMPLATES[int(rng.integers(len(SEED_TEMPLATES)))]
    behavior = BehaviorGenes(opcodes=_template_opcodes(template, config.bt_length))
    hardware = HardwareGenes(
        radius=float(rng.uniform(config.radius_min, config.radius_max)),
        chassis_tier=int(rng.choice(TIERS)),
        battery_tier=int(rng.choice(TIERS)),
        motor_tier=int(rng.choice(TIERS)),
        end_effector=int(rng.integers(2)),
        torque_setpoint=float(rng.uniform(0.0, 1.0)),
        battery_setpoint=float(rng.uniform(0.0, 1.0)),
    )
    return Genome(
        id=genome_id,
        tag=tag,
        selectivity=selectivity,
        dominance=dominance,
        behavior=behavior,
        hardware=hardware,
    )


def _random_subtree(rng: np.random.Generator, depth: int = 0) -> list[int]:
    """Small random tree; children may nest one level to jump between shapes."""
    ctrl = btvm.SEQ if rng.random() < 0.5 else btvm.SEL
    out = [ctrl]
    for _ in range(int(rng.integers(1, 4))):
        if depth == 0 and rng.random() < 0.3:
            out.extend(_random_subtree(rng, depth=1))
        else:
            out.append(int(rng.choice(btvm.LEAVES)))
    out.append(btvm.END)
    return out


def _subtree_span(ops: np.ndarray, start: int) -> int:
    """Length of the subtree rooted at ``start`` in a raw array (best effort)."""
    if ops[start] not in (btvm.SEQ, btvm.SEL):
        return 1
    depth = 0
    for i in range(start, len(ops)):
        op = ops[i]
        if op in (btvm.SEQ, btvm.SEL):
            depth += 1
        elif op == btvm.END:
            depth -= 1
            if depth == 0:
                return i - start + 1
    return len(ops) - start


def mutate_behavior(opcodes: np.ndarray, mc: MutationConfig, rng: np.random.Generator):
    """Apply one policy mutation; returns (new opcodes, kind).

    ``kind`` is "subtree" with probability ``bt_subtree_p`` (a random subtree
    splices over a random position), else "point" (one position rewritten).
    """
    ops = opcodes.copy()
    length = len(ops)
    if rng.random() < mc.bt_subtree_p:
        start = int(rng.integers(length))
        span = _subtree_span(ops, start)
        repl = _random_subtree(rng)
        spliced = np.concatenate([ops[:start], np.asarray(repl, dtype=np.int32), ops[start + span:]])
        if len(spliced) >= length:
            ops = spliced[:length]
        else:
            ops = np.concatenate([spliced, np.full(length - len(spliced), btvm.NOP, dtype=np.int32)])
        return ops, "subtree"
    pos = int(rng.integers(length))
    ops[pos] = int(rng.integers(btvm.N_OPCODES))
    return ops, "point"


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def mutate(g: Genome, mc: MutationConfig, rng: np.random.Generator) -> Genome:
    """Return a mutated copy with a fresh id; all values clamped to bounds."""
    genome_id = _fresh_id(rng)

    tag = g.tag.copy()
    if mc.tag_flip_p > 0:
        flips = rng.random(len(tag)) < mc.tag_flip_p
        tag[flips] ^= 1

    selectivity = _clamp(g.selectivity + rng.normal(0.0, mc.selectivity_sigma), 0.0, 1.0)
    dominance = _clamp(g.dominance + rng.normal(0.0, mc.dominance_sigma), 0.0, 1.0)

    hw = g.hardware
    radius = _clamp(hw.radius + rng.normal(0.0, mc.radius_sigma), mc.radius_min, mc.radius_max)
    tiers = {}
    for name in ("chassis_tier", "battery_tier", "motor_tier"):
        value = getattr(hw, name)
        if rng.random() < mc.tier_reassign_p:
            value = int(rng.choice(TIERS))
        tiers[name] = value
    effector = hw.end_effector
    if rng.random() < mc.effector_flip_p:
        effector = 1 - effector
    torque = _clamp(hw.torque_setpoint + rng.normal(0.0, mc.setpoint_sigma), 0.0, 1.0)
    battery = _clamp(hw.battery_setpoint + rng.normal(0.0, mc.setpoint_sigma), 0.0, 1.0)

    opcodes = g.behavior.opcodes
    if rng.random() < mc.bt_mutation_p:
        opcodes, _ = mutate_behavior(opcodes, mc, rng)
    else:
        opcodes = opcodes.copy()

    return Genome(
        id=genome_id,
        tag=tag,
        selectivity=selectivity,
        dominance=dominance,
        behavior=BehaviorGenes(opcodes=opcodes),
        hardware=HardwareGenes(
            radius=radius,
            chassis_tier=tiers["chassis_tier"],
            battery_tier=tiers["battery_tier"],
            motor_tier=tiers["motor_tier"],
            end_effector=effector,
            torque_setpoint=torque,
            battery_setpoint=battery,
        ),
    )


def crossover(a: Genome, b: Genome, rng: np.random.Generator, blend: bool = False) -> Genome:
    """Recombine two parents into a child with a fresh id.

    Default is a uniform per-component choice: every tag bit, every opcode
    position and every scalar gene comes from exactly one parent.  With
    ``blend=True`` the continuous genes interpolate uniformly instead.
    """
    if a.tag.shape != b.tag.shape or a.behavior.opcodes.shape != b.behavior.opcodes.shape:
        raise ShapeError("parents do not share tag/behavior shapes")
    genome_id = _fresh_id(rng)

    tag_mask = rng.random(len(a.tag)) < 0.5
    tag = np.where(tag_mask, a.tag, b.tag).astype(np.uint8)

    def pick(x: float, y: float) -> float:
        if blend:
            u = rng.random()
            return u * x + (1.0 - u) * y
        return x if rng.random() < 0.5 else y

    def pick_cat(x, y):
        return x if rng.random() < 0.5 else y

    selectivity = pick(a.selectivity, b.selectivity)
    dominance = pick(a.dominance, b.dominance)

    op_mask = rng.random(len(a.behavior.opcodes)) < 0.5
    opcodes = np.where(op_mask, a.behavior.opcodes, b.behavior.opcodes).astype(np.int32)

    ha, hb = a.hardware, b.hardware
    hardware = HardwareGenes(
        radius=pick(ha.radius, hb.radius),
        chassis_tier=pick_cat(ha.chassis_tier, hb.chassis_tier),
        battery_tier=pick_cat(ha.battery_tier, hb.battery_tier),
        motor_tier=pick_cat(ha.motor_tier, hb.motor_tier),
        end_effector=pick_cat(ha.end_effector, hb.end_effector),
        torque_setpoint=pick(ha.torque_setpoint, hb.torque_setpoint),
        battery_setpoint=pick(ha.battery_setpoint, hb.battery_setpoint),
    )
    return Genome(
        id=genome_id,
        tag=tag,
        selectivity=selectivity,
        dominance=dominance,
        behavior=BehaviorGenes(opcodes=opcodes),
        hardware=hardware,
    )


def clone(g: Genome, rng: np.random.Generator) -> Genome:
    """Copy of ``g`` under a fresh id (gene values bit-identical)."""
    return replace(
        g,
        id=_fresh_id(rng),
        tag=g.tag.copy(),
        behavior=BehaviorGenes(opcodes=g.behavior.opcodes.copy()),
    )
