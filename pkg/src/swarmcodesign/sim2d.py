"""Deterministic 2D foraging world.

``generate_environment`` lays out packages and obstacles (robot-independent,
so focal and baseline evaluation trials share byte-identical layouts),
``insert_robots`` instantiates a swarm from genomes, and ``run_trial`` drives
the jitted kernel for a full trial.  ``step`` exposes a single physics tick
for direct testing against closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from . import btvm
from .btvm import Program, TickResult
from .errors import ScenarioError
from .genome import Genome
from .seeding import SALT_ROBOT, derive_rng, derive_uint64

MAX_GRIPS = 4

# Hardware derivation tables (tier 1..3).  Premium chassis material is
# lighter; premium motors and batteries are stronger.  All overridable via
# SimParams for scenario tuning.
DEFAULT_CHASSIS_DENSITY = (12.0, 9.0, 6.5)  # kg / m^2
DEFAULT_MOTOR_FORCE = (6.0, 12.0, 24.0)  # N at setpoint 1.0
DEFAULT_MOTOR_TORQUE = (8.0, 16.0, 32.0)  # lift units at setpoint 1.0
DEFAULT_BATTERY_CAPACITY = (600.0, 1400.0, 3000.0)  # J at setpoint 1.0


@dataclass(frozen=True)
class SimParams:
    """Physics and hardware-derivation constants for a run."""

    dt: float = 0.05
    ticks: int = 2000
    max_speed: float = 1.5
    pickup_range: float = 0.15
    kp: float = 20.0
    kd: float = 6.0
    c_move: float = 0.06  # J per newton-second of commanded force
    c_idle: float = 0.4  # J per s
    stuck_window: int = 30
    stuck_fraction: float = 0.1  # of robot radius
    band_lo: float = 0.5  # robot/package diameter compatibility band
    band_hi: float = 2.0
    walk_redraw_ticks: int = 80
    walk_reach: float = 0.25
    chassis_density: Tuple[float, float, float] = DEFAULT_CHASSIS_DENSITY
    motor_force: Tuple[float, float, float] = DEFAULT_MOTOR_FORCE
    motor_torque: Tuple[float, float, float] = DEFAULT_MOTOR_TORQUE
    battery_capacity: Tuple[float, float, float] = DEFAULT_BATTERY_CAPACITY
    lift_ref_radius: float = 0.2
    lift_reserve: float = 2.0


@dataclass(frozen=True)
class PackageGroup:
    """One family of packages in a scenario."""

    count: int
    kind: str = "individual"  # "individual" | "collaborative"
    shape: str = "mixed"  # "circle" | "square" | "mixed"
    weight_law: str = "uniform"  # "uniform" | "distance"
    weight_min: float = 1.0
    weight_max: float = 6.0
    radius_base: float = 0.08
    radius_per_kg: float = 0.02
    grip_points_min: int = 2
    grip_points_max: int = 4
    grip_effectors: str = "alternate"  # "alternate" | "match_shape" | "random"


@dataclass(frozen=True)
class EnvConfig:
    width: float = 16.0
    height: float = 16.0
    base_x: float = 8.0
    base_y: float = 8.0
    base_radius: float = 1.2
    obstacle_count: int = 5
    obstacle_radius_min: float = 0.4
    obstacle_radius_max: float = 0.8
    packages: Tuple[PackageGroup, ...] = (PackageGroup(count=16),)


@dataclass
class TrialStats:
    """Raw counts and aggregates feeding every fitness term."""

    n_delivered: int = 0
    n_collab_delivered: int = 0
    n_picked: int = 0
    n_collab_picked: int = 0
    grip_points_delivered: int = 0
    energy_avg_final: float = 0.0  # mean normalized remaining energy, [0, 1]
    proximity_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    closeness_progress: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energy_used_avg: float = 0.0  # mean joules spent per robot


@dataclass
class World:
    """Full simulator state: environment plus (optionally) a swarm."""

    params: SimParams
    base: np.ndarray
    base_radius: float
    bounds: np.ndarray  # xmin, xmax, ymin, ymax
    # packages
    ppos: np.ndarray
    psc: np.ndarray
    pgdir: np.ndarray
    pint: np.ndarray
    pgeff: np.ndarray
    pgocc: np.ndarray
    pflags: np.ndarray
    obst: np.ndarray
    # robots (empty until insert_robots)
    rpos: np.ndarray
    rvel: np.ndarray
    rsc: np.ndarray
    rint: np.ndarray
    rprox: np.ndarray
    rhist: np.ndarray
    rwalk: np.ndarray
    rrng: np.ndarray
    rops: np.ndarray
    rjmp: np.ndarray
    counters: np.ndarray = field(default_factory=lambda: np.zeros(K.N_COUNTERS, dtype=np.int64))
    tick: int = 0

    @property
    def n_robots(self) -> int:
        return self.rpos.shape[0]

    @property
    def n_packages(self) -> int:
        return self.ppos.shape[0]

    def param_vector(self) -> np.ndarray:
        p = self.params
        par = np.zeros(K.N_PARAMS, dtype=np.float64)
        par[K.PAR_DT] = p.dt
        par[K.PAR_BX] = self.base[0]
        par[K.PAR_BY] = self.base[1]
        par[K.PAR_BR] = self.base_radius
        par[K.PAR_XMIN] = self.bounds[0]
        par[K.PAR_XMAX] = self.bounds[1]
        par[K.PAR_YMIN] = self.bounds[2]
        par[K.PAR_YMAX] = self.bounds[3]
        par[K.PAR_KP] = p.kp
        par[K.PAR_KD] = p.kd
        par[K.PAR_VMAX] = p.max_speed
        par[K.PAR_PICKR] = p.pickup_range
        par[K.PAR_CMOVE] = p.c_move
        par[K.PAR_CIDLE] = p.c_idle
        par[K.PAR_WSTUCK] = p.stuck_window
        par[K.PAR_FSTUCK] = p.stuck_fraction
        par[K.PAR_BANDLO] = p.band_lo
        par[K.PAR_BANDHI] = p.band_hi
        par[K.PAR_WALKT] = p.walk_redraw_ticks
        par[K.PAR_WALKR] = p.walk_reach
        return par


def derive_body(g: Genome, params: SimParams):
    """Map hardware genes to physical quantities.

    mass from chassis area density, drive force and lift capacity from the
    motor tier scaled by the torque setpoint (capacity additionally trades
    against radius around a reference size, minus a locomotion reserve), and
    battery capacity from the tier scaled by the battery setpoint.
    """
    hw = g.hardware
    mass = params.chassis_density[hw.chassis_tier - 1] * math.pi * hw.radius**2
    max_force = params.motor_force[hw.motor_tier - 1] * hw.torque_setpoint
    capacity = max(
        0.0,
        params.motor_torque[hw.motor_tier - 1]
        * hw.torque_setpoint
        * (params.lift_ref_radius / hw.radius)
        - params.lift_reserve,
    )
    energy_max = params.battery_capacity[hw.battery_tier - 1] * hw.battery_setpoint
    return mass, max_force, capacity, energy_max


def _empty_robot_arrays(params: SimParams):
    window = params.stuck_window
    return dict(
        rpos=np.zeros((0, 2)),
        rvel=np.zeros((0, 2)),
        rsc=np.zeros((0, 6)),
        rint=np.zeros((0, 5), dtype=np.int32),
        rprox=np.zeros(0),
        rhist=np.zeros((0, window, 2)),
        rwalk=np.zeros((0, 2)),
        rrng=np.zeros(0, dtype=np.uint64),
        rops=np.zeros((0, 1), dtype=np.int32),
        rjmp=np.zeros((0, 1), dtype=np.int32),
    )


def _sample_point(rng, bounds, margin):
    x = rng.uniform(bounds[0] + margin, bounds[1] - margin)
    y = rng.uniform(bounds[2] + margin, bounds[3] - margin)
    return x, y


def generate_environment(env: EnvConfig, params: SimParams, seed: int) -> World:
    """Build a world (no robots yet) by rejection sampling, deterministic per seed."""
    rng = derive_rng(seed)
    bounds = np.array([0.0, env.width, 0.0, env.height])
    base = np.array([env.base_x, env.base_y])

    if env.base_radius <= 0 or env.width <= 4 * env.base_radius or env.height <= 4 * env.base_radius:
        raise ScenarioError("arena too small relative to the base")

    max_retries = 2000
    obstacles = []
    for _ in range(env.obstacle_count):
        radius = float(rng.uniform(env.obstacle_radius_min, env.obstacle_radius_max))
        for attempt in range(max_retries + 1):
            if attempt == max_retries:
                raise ScenarioError("could not place obstacles; arena too crowded")
            x, y = _sample_point(rng, bounds, radius + 0.1)
            if math.hypot(x - base[0], y - base[1]) < env.base_radius + radius + 1.0:
                continue
            if any(math.hypot(x - ox, y - oy) < orad + radius + 0.3 for ox, oy, orad in obstacles):
                continue
            obstacles.append((x, y, radius))
            break
    obst = np.array(obstacles, dtype=np.float64).reshape(-1, 3)

    total = sum(g.count for g in env.packages)
    ppos = np.zeros((total, 2))
    psc = np.zeros((total, 3))
    pint = np.full((total, 4), -1, dtype=np.int32)
    pgdir = np.zeros((total, MAX_GRIPS, 2))
    pgeff = np.full((total, MAX_GRIPS), -1, dtype=np.int32)
    pgocc = np.full((total, MAX_GRIPS), -1, dtype=np.int32)
    pflags = np.zeros((total, 2), dtype=np.int32)

    d_max = max(
        math.hypot(cx - base[0], cy - base[1])
        for cx in (bounds[0], bounds[1])
        for cy in (bounds[2], bounds[3])
    )

    idx = 0
    for group in env.packages:
        if group.kind not in ("individual", "collaborative"):
            raise ScenarioError(f"unknown package kind {group.kind!r}")
        for _ in range(group.count):
            for attempt in range(max_retries + 1):
                if attempt == max_retries:
                    raise ScenarioError("could not place packages; arena too crowded")
                x, y = _sample_point(rng, bounds, 0.5)
                d_base = math.hypot(x - base[0], y - base[1])
                if d_base < env.base_radius + 0.6:
                    continue
                if any(
                    math.hypot(x - ox, y - oy) < orad + 0.5 for ox, oy, orad in obstacles
                ):
                    continue
                if any(
                    math.hypot(x - ppos[k, 0], y - ppos[k, 1]) < 0.4 for k in range(idx)
                ):
                    continue
                break
            if group.weight_law == "distance":
                frac = min(d_base / d_max, 1.0)
                weight = group.weight_max * (1.0 - frac) + group.weight_min * frac
            elif group.weight_law == "uniform":
                weight = float(rng.uniform(group.weight_min, group.weight_max))
            else:
                raise ScenarioError(f"unknown weight law {group.weight_law!r}")

            if group.shape == "mixed":
                shape = int(rng.integers(2))
            elif group.shape == "circle":
                shape = 0
            elif group.shape == "square":
                shape = 1
            else:
                raise ScenarioError(f"unknown package shape {group.shape!r}")

            ppos[idx] = (x, y)
            psc[idx, K.P_WEIGHT] = weight
            psc[idx, K.P_RAD] = group.radius_base + group.radius_per_kg * weight
            psc[idx, K.P_INITD] = d_base
            pint[idx, K.PI_SHAPE] = shape
            pint[idx, K.PI_HELDBY] = -1
            if group.kind == "individual":
                pint[idx, K.PI_KIND] = K.KIND_INDIVIDUAL
                pint[idx, K.PI_NGRIPS] = 0
            else:
                pint[idx, K.PI_KIND] = K.KIND_COLLAB
                n_grips = int(rng.integers(group.grip_points_min, group.grip_points_max + 1))
                pint[idx, K.PI_NGRIPS] = n_grips
                phase = rng.uniform(0.0, 2.0 * math.pi)
                for g in range(n_grips):
                    angle = phase + 2.0 * math.pi * g / n_grips
                    pgdir[idx, g] = (math.cos(angle), math.sin(angle))
                    if group.grip_effectors == "alternate":
                        pgeff[idx, g] = g % 2
                    elif group.grip_effectors == "match_shape":
                        pgeff[idx, g] = shape
                    elif group.grip_effectors == "random":
                        pgeff[idx, g] = int(rng.integers(2))
                    else:
                        raise ScenarioError(
                            f"unknown grip effector rule {group.grip_effectors!r}"
                        )
            idx += 1

    return World(
        params=params,
        base=base,
        base_radius=env.base_radius,
        bounds=bounds,
        ppos=ppos,
        psc=psc,
        pgdir=pgdir,
        pint=pint,
        pgeff=pgeff,
        pgocc=pgocc,
        pflags=pflags,
        obst=obst,
        **_empty_robot_arrays(params),
    )


def spawn_ring_positions(n: int, base: np.ndarray, base_radius: float, max_robot_radius: float) -> np.ndarray:
    """Deterministic spawn positions on concentric rings around the base."""
    spacing = 2.0 * max_robot_radius + 0.15
    positions = np.zeros((n, 2))
    placed = 0
    ring = 0
    while placed < n:
        ring_radius = base_radius + max_robot_radius + 0.2 + ring * spacing
        capacity = max(1, int(2.0 * math.pi * ring_radius / spacing))
        take = min(capacity, n - placed)
        for k in range(take):
            angle = 2.0 * math.pi * k / capacity + ring * 0.5
            positions[placed] = base + ring_radius * np.array([math.cos(angle), math.sin(angle)])
            placed += 1
        ring += 1
    return positions


def insert_robots(world: World, genomes: Sequence[Genome], programs: Sequence[Program], seed: int) -> World:
    """Fill the robot arrays from genomes; spawn positions ring the base."""
    n = len(genomes)
    if n == 0:
        return world
    if len(programs) != n:
        raise ScenarioError("one compiled program required per genome")
    params = world.params
    bt_len = programs[0].opcodes.shape[0]

    rpos = spawn_ring_positions(n, world.base, world.base_radius, max(g.hardware.radius for g in genomes))
    rvel = np.zeros((n, 2))
    rsc = np.zeros((n, 6))
    rint = np.full((n, 5), -1, dtype=np.int32)
    rops = np.zeros((n, bt_len), dtype=np.int32)
    rjmp = np.zeros((n, bt_len), dtype=np.int32)
    for i, (g, prog) in enumerate(zip(genomes, programs)):
        mass, max_force, capacity, energy_max = derive_body(g, params)
        rsc[i, K.R_RAD] = g.hardware.radius
        rsc[i, K.R_MASS] = mass
        rsc[i, K.R_MAXF] = max_force
        rsc[i, K.R_CAP] = capacity
        rsc[i, K.R_EN] = energy_max
        rsc[i, K.R_EMAX] = energy_max
        rint[i, K.RI_EFF] = g.hardware.end_effector
        rops[i] = prog.opcodes
        rjmp[i] = prog.jumps

    return replace(
        world,
        rpos=rpos,
        rvel=rvel,
        rsc=rsc,
        rint=rint,
        rprox=np.zeros(n),
        rhist=np.zeros((n, params.stuck_window, 2)),
        rwalk=np.zeros((n, 2)),
        rrng=derive_uint64(seed, SALT_ROBOT, n=n),
        rops=rops,
        rjmp=rjmp,
        counters=np.zeros(K.N_COUNTERS, dtype=np.int64),
        tick=0,
    )


def _scratch(world: World):
    n = world.n_robots
    p = max(world.n_packages, 1)
    return (
        np.full(n, K.NO_CMD, dtype=np.int32),  # cact
        np.zeros((n, 2)),  # ctgt
        np.full(n, -1, dtype=np.int32),  # cpkg
        np.zeros((n, 2)),  # fscr
        np.zeros((p, 2)),  # pvel
        np.zeros(max(n, p) + 1, dtype=np.int32),  # iscratch
    )


def run_trial(world: World, n_ticks: Optional[int] = None, trace=None) -> TrialStats:
    """Run a full trial in the jitted kernel and aggregate its statistics.

    With ``trace`` (a path or writable text file), one JSON record per tick
    is appended: robot poses/velocities/energy/held state plus package
    positions and delivery flags.  Tracing runs the kernel tick by tick and
    is meant for debugging and visualization, not for bulk evaluation.
    """
    if n_ticks is None:
        n_ticks = world.params.ticks
    if trace is not None:
        return _run_trial_traced(world, n_ticks, trace)
    par = world.param_vector()
    cact, ctgt, cpkg, fscr, pvel, iscratch = _scratch(world)
    K.run_trial_kernel(
        world.tick,
        n_ticks,
        world.rpos, world.rvel, world.rsc, world.rint, world.rprox, world.rhist,
        world.rwalk, world.rrng, world.rops, world.rjmp,
        world.ppos, world.psc, world.pgdir, world.pint, world.pgeff, world.pgocc,
        world.pflags, world.obst, par, world.counters, cact, ctgt, cpkg, fscr, pvel, iscratch,
    )
    world.tick += n_ticks
    return finalize_stats(world)


def _trace_record(world: World) -> dict:
    return {
        "tick": world.tick,
        "robots": {
            "pos": world.rpos.round(5).tolist(),
            "vel": world.rvel.round(5).tolist(),
            "energy": world.rsc[:, K.R_EN].round(3).tolist(),
            "held": world.rint[:, K.RI_HELD].tolist(),
        },
        "packages": {
            "pos": world.ppos.round(5).tolist(),
            "delivered": world.pflags[:, K.PF_DELIV].tolist(),
            "held_by": world.pint[:, K.PI_HELDBY].tolist(),
        },
    }


def _run_trial_traced(world: World, n_ticks: int, trace) -> TrialStats:
    import json

    own = isinstance(trace, (str, bytes)) or hasattr(trace, "__fspath__")
    fh = open(trace, "w") if own else trace
    try:
        par = world.param_vector()
        cact, ctgt, cpkg, fscr, pvel, iscratch = _scratch(world)
        for _ in range(n_ticks):
            K.run_trial_kernel(
                world.tick,
                1,
                world.rpos, world.rvel, world.rsc, world.rint, world.rprox, world.rhist,
                world.rwalk, world.rrng, world.rops, world.rjmp,
                world.ppos, world.psc, world.pgdir, world.pint, world.pgeff, world.pgocc,
                world.pflags, world.obst, par, world.counters, cact, ctgt, cpkg, fscr,
                pvel, iscratch,
            )
            world.tick += 1
            fh.write(json.dumps(_trace_record(world), sort_keys=True) + "\n")
    finally:
        if own:
            fh.close()
    return finalize_stats(world)


def step(world: World, commands: Sequence[TickResult]) -> World:
    """Advance one tick given explicit per-robot commands (mutates the world).

    The command mapping mirrors the interpreter-driven path: movement actions
    become PD targets, absent actions brake, pickup/drop resolve after
    integration.
    """
    n = world.n_robots
    if len(commands) != n:
        raise ScenarioError(f"need {n} commands, got {len(commands)}")
    par = world.param_vector()
    cact, ctgt, cpkg, fscr, pvel, iscratch = _scratch(world)
    for i, cmd in enumerate(commands):
        action = cmd.action if cmd is not None and cmd.action is not None else K.NO_CMD
        cact[i] = action
        ctgt[i] = world.rpos[i]
        if action == btvm.ACT_MOVE_TO_BASE:
            ctgt[i] = world.base
        elif action in (btvm.ACT_MOVE_TO_PACK, btvm.ACT_MOVE_TO_RANDOM_PACK):
            if cmd.target is not None:
                ctgt[i] = world.ppos[cmd.target]
        elif action == btvm.ACT_RANDOM_WALK:
            if world.rint[i, K.RI_WAGE] >= 0:
                ctgt[i] = world.rwalk[i]
        elif action == btvm.ACT_PICK_UP:
            cpkg[i] = cmd.target if cmd.target is not None else -1
    smask = np.empty((n, world.n_packages), dtype=np.uint8)
    K.static_compat_mask(world.rsc, world.rint, world.psc, world.pint, world.pgeff, par, smask)
    pfree = np.empty((world.n_packages, 2), dtype=np.int32)
    K.free_grip_counts(world.pint, world.pgeff, world.pgocc, pfree)
    rcat = np.empty(n, dtype=np.int32)
    K._sim_tick(
        world.tick,
        world.rpos, world.rvel, world.rsc, world.rint, world.rprox, world.rhist,
        world.ppos, world.psc, world.pgdir, world.pint, world.pgeff, world.pgocc,
        world.pflags, pfree, smask, world.obst, par, world.counters,
        cact, ctgt, cpkg, fscr, pvel, iscratch, rcat,
    )
    world.tick += 1
    return world


def pd_control(position, velocity, target, kp: float, kd: float, max_force: float) -> np.ndarray:
    """Proportional-derivative force toward a target, clamped to max_force."""
    if kp <= 0 or kd < 0:
        raise ScenarioError("PD gains must be positive (kp) and non-negative (kd)")
    position = np.asarray(position, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    force = kp * (target - position) - kd * velocity
    magnitude = float(np.hypot(force[0], force[1]))
    if magnitude > max_force and magnitude > 0.0:
        force = force * (max_force / magnitude)
    return force


def proximity_score(d_base: float) -> float:
    """Holding-robot shaping score: 10 / (1 + 0.1 * distance to base)."""
    return 10.0 / (1.0 + 0.1 * d_base)


def attempt_pickup(world: World, robot: int, package: int) -> bool:
    """Try to attach robot to package right now; no-op on failure."""
    par = world.param_vector()
    smask = np.empty((world.n_robots, world.n_packages), dtype=np.uint8)
    K.static_compat_mask(world.rsc, world.rint, world.psc, world.pint, world.pgeff, par, smask)
    pfree = np.empty((world.n_packages, 2), dtype=np.int32)
    K.free_grip_counts(world.pint, world.pgeff, world.pgocc, pfree)
    ok = K._try_pickup(
        robot, package,
        world.rpos, world.rvel, world.rsc, world.rint,
        world.ppos, world.psc, world.pint, world.pgdir, world.pgeff, world.pgocc,
        world.pflags, pfree, smask, par, world.counters,
    )
    return bool(ok)


def finalize_stats(world: World) -> TrialStats:
    """Aggregate kernel counters and world state into trial statistics."""
    counters = world.counters
    n = world.n_robots
    ticks = max(world.tick, 1)
    emax = world.rsc[:, K.R_EMAX]
    energy = world.rsc[:, K.R_EN]
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(emax > 0, energy / np.maximum(emax, 1e-300), 0.0)
    undelivered = world.pflags[:, K.PF_DELIV] == 0
    d_final = np.hypot(
        world.ppos[undelivered, 0] - world.base[0], world.ppos[undelivered, 1] - world.base[1]
    )
    d_init = world.psc[undelivered, K.P_INITD]
    closeness = (d_init - d_final) / d_init

    return TrialStats(
        n_delivered=int(counters[K.CNT_DELIV]),
        n_collab_delivered=int(counters[K.CNT_CDELIV]),
        n_picked=int(counters[K.CNT_PICK]),
        n_collab_picked=int(counters[K.CNT_CPICK]),
        grip_points_delivered=int(counters[K.CNT_GRIPS]),
        energy_avg_final=float(np.mean(normalized)) if n else 0.0,
        proximity_scores=world.rprox / ticks if n else np.zeros(0),
        closeness_progress=closeness,
        energy_used_avg=float(np.mean(emax - energy)) if n else 0.0,
    )


def worlds_equal_pre_robots(a: World, b: World) -> bool:
    """Bitwise equality of the robot-independent layout."""
    return (
        np.array_equal(a.ppos, b.ppos)
        and np.array_equal(a.psc, b.psc)
        and np.array_equal(a.pgdir, b.pgdir)
        and np.array_equal(a.pint, b.pint)
        and np.array_equal(a.pgeff, b.pgeff)
        and np.array_equal(a.obst, b.obst)
        and np.array_equal(a.base, b.base)
        and a.base_radius == b.base_radius
        and np.array_equal(a.bounds, b.bounds)
    )
