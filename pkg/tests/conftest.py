"""Shared builders for hand-constructed simulation worlds."""

import numpy as np
import pytest

from swarmcodesign import _kernels as K
from swarmcodesign.btvm import NOP, compile_program
from swarmcodesign.sim2d import MAX_GRIPS, SimParams, World

IDLE_PROGRAM = compile_program(np.full(16, NOP, dtype=np.int32))


def make_world(
    robots=(),
    packages=(),
    obstacles=(),
    params=None,
    width=20.0,
    height=20.0,
    base=(10.0, 10.0),
    base_radius=1.0,
):
    """Build a World from explicit robot/package dicts (physics-test precision).

    Robot keys: pos, vel, radius, mass, max_force, capacity, energy, emax,
    effector, program.  Package keys: pos, weight, radius, shape, kind,
    grip_dirs, grip_effs.
    """
    params = params or SimParams()
    n = len(robots)
    p = len(packages)
    bt_len = 16

    rpos = np.zeros((n, 2))
    rvel = np.zeros((n, 2))
    rsc = np.zeros((n, 6))
    rint = np.full((n, 5), -1, dtype=np.int32)
    rops = np.zeros((n, bt_len), dtype=np.int32)
    rjmp = np.zeros((n, bt_len), dtype=np.int32)
    for i, spec in enumerate(robots):
        rpos[i] = spec["pos"]
        rvel[i] = spec.get("vel", (0.0, 0.0))
        rsc[i, K.R_RAD] = spec.get("radius", 0.2)
        rsc[i, K.R_MASS] = spec.get("mass", 1.0)
        rsc[i, K.R_MAXF] = spec.get("max_force", 10.0)
        rsc[i, K.R_CAP] = spec.get("capacity", 10.0)
        rsc[i, K.R_EN] = spec.get("energy", 1000.0)
        rsc[i, K.R_EMAX] = spec.get("emax", spec.get("energy", 1000.0))
        rint[i, K.RI_EFF] = spec.get("effector", 1)
        program = spec.get("program", IDLE_PROGRAM)
        rops[i] = program.opcodes
        rjmp[i] = program.jumps

    ppos = np.zeros((p, 2))
    psc = np.zeros((p, 3))
    pint = np.full((p, 4), -1, dtype=np.int32)
    pgdir = np.zeros((p, MAX_GRIPS, 2))
    pgeff = np.full((p, MAX_GRIPS), -1, dtype=np.int32)
    pgocc = np.full((p, MAX_GRIPS), -1, dtype=np.int32)
    pflags = np.zeros((p, 2), dtype=np.int32)
    base = np.asarray(base, dtype=np.float64)
    for j, spec in enumerate(packages):
        ppos[j] = spec["pos"]
        psc[j, K.P_WEIGHT] = spec.get("weight", 1.0)
        psc[j, K.P_RAD] = spec.get("radius", 0.12)
        psc[j, K.P_INITD] = float(np.hypot(ppos[j, 0] - base[0], ppos[j, 1] - base[1]))
        pint[j, K.PI_SHAPE] = spec.get("shape", 1)
        pint[j, K.PI_KIND] = spec.get("kind", K.KIND_INDIVIDUAL)
        pint[j, K.PI_HELDBY] = -1
        grip_dirs = spec.get("grip_dirs", ())
        grip_effs = spec.get("grip_effs", ())
        pint[j, K.PI_NGRIPS] = len(grip_dirs)
        for g, (direction, eff) in enumerate(zip(grip_dirs, grip_effs)):
            pgdir[j, g] = direction
            pgeff[j, g] = eff

    return World(
        params=params,
        base=base,
        base_radius=base_radius,
        bounds=np.array([0.0, width, 0.0, height]),
        ppos=ppos,
        psc=psc,
        pgdir=pgdir,
        pint=pint,
        pgeff=pgeff,
        pgocc=pgocc,
        pflags=pflags,
        obst=np.asarray(obstacles, dtype=np.float64).reshape(-1, 3),
        rpos=rpos,
        rvel=rvel,
        rsc=rsc,
        rint=rint,
        rprox=np.zeros(n),
        rhist=np.zeros((n, params.stuck_window, 2)),
        rwalk=np.zeros((n, 2)),
        rrng=np.arange(1, n + 1, dtype=np.uint64),
        rops=rops,
        rjmp=rjmp,
    )


@pytest.fixture
def frictionless_params():
    """No PD braking, so free bodies keep their velocity between collisions."""
    return SimParams(kp=20.0, kd=0.0, dt=0.0625, max_speed=64.0)
