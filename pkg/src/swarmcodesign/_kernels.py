"""Jitted inner loops of the foraging simulator.

All per-tick work (observation building, policy interpretation, PD control,
semi-implicit Euler integration, elastic collisions, pickup/drop/delivery
resolution, energy accounting) runs inside nopython kernels so trials execute
at native speed on a single core.  Kernels own no global state: every array
is passed in, and randomness comes from per-robot xorshift64* streams seeded
outside, which keeps trials bit-reproducible for any thread schedule.

Trial-constant compatibility (effector/shape match, capacity, diameter band)
is precomputed into a robot-by-package mask; per-tick eligibility then only
consults the delivered/held flags and per-effector free-grip counts.

Array layout contracts (columns):
  rsc  (N, 6) float64: radius, mass, max_force, lift_capacity, energy, energy_max
  rint (N, 5) int32:   effector, held package, grip slot, walk age, random target
  psc  (P, 3) float64: weight, radius, initial base distance
  pint (P, 4) int32:   shape, kind, held_by, grip count
  pflags (P, 2) int32: delivered, ever picked
  pfree (P, 2) int32:  free grip points per effector (collaborative only)
  obst (O, 3) float64: x, y, radius
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .btvm import (
    ACT_DROP,
    ACT_MOVE_TO_BASE,
    ACT_MOVE_TO_PACK,
    ACT_MOVE_TO_RANDOM_PACK,
    ACT_PICK_UP,
    ACT_RANDOM_WALK,
    bt_tick_flat,
)

# rsc columns
R_RAD, R_MASS, R_MAXF, R_CAP, R_EN, R_EMAX = 0, 1, 2, 3, 4, 5
# rint columns
RI_EFF, RI_HELD, RI_GRIP, RI_WAGE, RI_RPKG = 0, 1, 2, 3, 4
# psc columns
P_WEIGHT, P_RAD, P_INITD = 0, 1, 2
# pint columns
PI_SHAPE, PI_KIND, PI_HELDBY, PI_NGRIPS = 0, 1, 2, 3
# pflags columns
PF_DELIV, PF_PICKED = 0, 1
# parameter vector indices
(
    PAR_DT,
    PAR_BX,
    PAR_BY,
    PAR_BR,
    PAR_XMIN,
    PAR_XMAX,
    PAR_YMIN,
    PAR_YMAX,
    PAR_KP,
    PAR_KD,
    PAR_VMAX,
    PAR_PICKR,
    PAR_CMOVE,
    PAR_CIDLE,
    PAR_WSTUCK,
    PAR_FSTUCK,
    PAR_BANDLO,
    PAR_BANDHI,
    PAR_WALKT,
    PAR_WALKR,
) = range(20)
N_PARAMS = 20
# counter indices
CNT_DELIV, CNT_CDELIV, CNT_PICK, CNT_CPICK, CNT_GRIPS = 0, 1, 2, 3, 4
N_COUNTERS = 5

KIND_INDIVIDUAL = 0
KIND_COLLAB = 1

# robot categories for one tick
CAT_FREE = 0
CAT_ANCHOR = 1  # attached to an incomplete collaborative package
CAT_CARRIER = 2  # attached to a complete one

NO_CMD = -1


@njit(cache=True, nogil=True, inline="always")
def _rand01(rrng, i):
    # xorshift64*: tiny counter-based stream so results never depend on
    # which worker thread runs the trial.
    x = rrng[i]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    rrng[i] = x
    z = (x * np.uint64(0x2545F4914F6CDD1D)) >> np.uint64(11)
    return float(z) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True, inline="always")
def _dist(ax, ay, bx, by):
    dx = ax - bx
    dy = ay - by
    return np.sqrt(dx * dx + dy * dy)


@njit(cache=True, nogil=True)
def static_compat_mask(rsc, rint, psc, pint, pgeff, par, smask):
    """Trial-constant part of "can robot i acquire package p"."""
    n_robots = rsc.shape[0]
    n_pkg = psc.shape[0]
    for i in range(n_robots):
        rr = rsc[i, R_RAD]
        eff = rint[i, RI_EFF]
        for p in range(n_pkg):
            ok = True
            pr = psc[p, P_RAD]
            if rr < par[PAR_BANDLO] * pr or rr > par[PAR_BANDHI] * pr:
                ok = False
            elif pint[p, PI_KIND] == KIND_INDIVIDUAL:
                if pint[p, PI_SHAPE] != eff or rsc[i, R_CAP] < psc[p, P_WEIGHT]:
                    ok = False
            else:
                any_grip = False
                for g in range(pint[p, PI_NGRIPS]):
                    if pgeff[p, g] == eff:
                        any_grip = True
                        break
                ok = any_grip
            smask[i, p] = 1 if ok else 0


@njit(cache=True, nogil=True)
def free_grip_counts(pint, pgeff, pgocc, pfree):
    """Recount free grip points per effector for every collaborative package."""
    for p in range(pint.shape[0]):
        pfree[p, 0] = 0
        pfree[p, 1] = 0
        if pint[p, PI_KIND] != KIND_COLLAB:
            continue
        for g in range(pint[p, PI_NGRIPS]):
            if pgocc[p, g] < 0:
                pfree[p, pgeff[p, g]] += 1


@njit(cache=True, nogil=True, inline="always")
def _eligible(i, p, rint, pint, pflags, pfree, smask):
    if smask[i, p] == 0 or pflags[p, PF_DELIV] != 0:
        return False
    if pint[p, PI_KIND] == KIND_INDIVIDUAL:
        return pint[p, PI_HELDBY] < 0
    return pfree[p, rint[i, RI_EFF]] > 0


@njit(cache=True, nogil=True)
def _try_pickup(
    i, p, rpos, rvel, rsc, rint, ppos, psc, pint, pgdir, pgeff, pgocc, pflags, pfree, smask, par, cnt
):
    """Attempt the actual attachment; returns True on success.

    Re-verifies adjacency and eligibility against post-integration state so
    earlier pickups in the same tick cannot be double-claimed.
    """
    if p < 0 or rint[i, RI_HELD] >= 0:
        return False
    if not _eligible(i, p, rint, pint, pflags, pfree, smask):
        return False
    gap = _dist(rpos[i, 0], rpos[i, 1], ppos[p, 0], ppos[p, 1]) - rsc[i, R_RAD] - psc[p, P_RAD]
    if gap > par[PAR_PICKR]:
        return False
    if pint[p, PI_KIND] == KIND_INDIVIDUAL:
        pint[p, PI_HELDBY] = i
        rint[i, RI_HELD] = p
        ppos[p, 0] = rpos[i, 0]
        ppos[p, 1] = rpos[i, 1]
        if pflags[p, PF_PICKED] == 0:
            pflags[p, PF_PICKED] = 1
            cnt[CNT_PICK] += 1
        return True
    # collaborative: occupy the nearest free grip point matching the effector
    best_g = -1
    best_d = 1e300
    for g in range(pint[p, PI_NGRIPS]):
        if pgocc[p, g] >= 0 or pgeff[p, g] != rint[i, RI_EFF]:
            continue
        ax = ppos[p, 0] + pgdir[p, g, 0] * (psc[p, P_RAD] + rsc[i, R_RAD])
        ay = ppos[p, 1] + pgdir[p, g, 1] * (psc[p, P_RAD] + rsc[i, R_RAD])
        d = _dist(rpos[i, 0], rpos[i, 1], ax, ay)
        if d < best_d:
            best_d = d
            best_g = g
    if best_g < 0:
        return False
    pgocc[p, best_g] = i
    pfree[p, rint[i, RI_EFF]] -= 1
    rint[i, RI_HELD] = p
    rint[i, RI_GRIP] = best_g
    rpos[i, 0] = ppos[p, 0] + pgdir[p, best_g, 0] * (psc[p, P_RAD] + rsc[i, R_RAD])
    rpos[i, 1] = ppos[p, 1] + pgdir[p, best_g, 1] * (psc[p, P_RAD] + rsc[i, R_RAD])
    rvel[i, 0] = 0.0
    rvel[i, 1] = 0.0
    full = True
    for g in range(pint[p, PI_NGRIPS]):
        if pgocc[p, g] < 0:
            full = False
            break
    if full and pflags[p, PF_PICKED] == 0:
        pflags[p, PF_PICKED] = 1
        cnt[CNT_CPICK] += 1
    return True


@njit(cache=True, nogil=True)
def _decide(
    t,
    rpos,
    rvel,
    rsc,
    rint,
    rrng,
    rwalk,
    rhist,
    rops,
    rjmp,
    ppos,
    psc,
    pint,
    pflags,
    pfree,
    smask,
    par,
    cact,
    ctgt,
    cpkg,
    iscratch,
    bt_stack_type,
    bt_stack_jump,
):
    """Observation building + policy interpretation for every robot."""
    n_robots = rpos.shape[0]
    n_pkg = ppos.shape[0]
    window = int(par[PAR_WSTUCK])
    for i in range(n_robots):
        held = rint[i, RI_HELD]
        has_pkg = held >= 0
        best_p = -1
        best_gap = 1e300
        n_elig = 0
        if not has_pkg:
            for p in range(n_pkg):
                if _eligible(i, p, rint, pint, pflags, pfree, smask):
                    iscratch[n_elig] = p
                    n_elig += 1
                    gap = (
                        _dist(rpos[i, 0], rpos[i, 1], ppos[p, 0], ppos[p, 1])
                        - rsc[i, R_RAD]
                        - psc[p, P_RAD]
                    )
                    if gap < best_gap:
                        best_gap = gap
                        best_p = p
        near_pkg = best_p >= 0 and best_gap <= par[PAR_PICKR]
        near_base = _dist(rpos[i, 0], rpos[i, 1], par[PAR_BX], par[PAR_BY]) <= par[PAR_BR]
        stuck = False
        if t >= window:
            moved = _dist(rpos[i, 0], rpos[i, 1], rhist[i, t % window, 0], rhist[i, t % window, 1])
            stuck = moved < par[PAR_FSTUCK] * rsc[i, R_RAD]

        status, action = bt_tick_flat(
            rops[i], rjmp[i], has_pkg, near_pkg, near_base, stuck, best_p >= 0, n_elig > 0,
            bt_stack_type, bt_stack_jump,
        )

        cact[i] = action
        cpkg[i] = -1
        ctgt[i, 0] = rpos[i, 0]
        ctgt[i, 1] = rpos[i, 1]
        if action == ACT_MOVE_TO_PACK:
            ctgt[i, 0] = ppos[best_p, 0]
            ctgt[i, 1] = ppos[best_p, 1]
        elif action == ACT_MOVE_TO_BASE:
            ctgt[i, 0] = par[PAR_BX]
            ctgt[i, 1] = par[PAR_BY]
        elif action == ACT_MOVE_TO_RANDOM_PACK:
            cur = rint[i, RI_RPKG]
            valid = cur >= 0 and _eligible(i, cur, rint, pint, pflags, pfree, smask)
            if not valid:
                cur = iscratch[int(_rand01(rrng, i) * n_elig)]
                rint[i, RI_RPKG] = cur
            ctgt[i, 0] = ppos[cur, 0]
            ctgt[i, 1] = ppos[cur, 1]
        elif action == ACT_RANDOM_WALK:
            age = rint[i, RI_WAGE]
            reached = (
                age >= 0
                and _dist(rpos[i, 0], rpos[i, 1], rwalk[i, 0], rwalk[i, 1]) < par[PAR_WALKR]
            )
            if age < 0 or age > int(par[PAR_WALKT]) or reached:
                rwalk[i, 0] = par[PAR_XMIN] + _rand01(rrng, i) * (par[PAR_XMAX] - par[PAR_XMIN])
                rwalk[i, 1] = par[PAR_YMIN] + _rand01(rrng, i) * (par[PAR_YMAX] - par[PAR_YMIN])
                rint[i, RI_WAGE] = 0
            else:
                rint[i, RI_WAGE] = age + 1
            ctgt[i, 0] = rwalk[i, 0]
            ctgt[i, 1] = rwalk[i, 1]
        elif action == ACT_PICK_UP:
            cpkg[i] = best_p


@njit(cache=True, nogil=True, inline="always")
def _pd_force(px, py, vx, vy, tx, ty, kp, kd, fmax):
    fx = kp * (tx - px) - kd * vx
    fy = kp * (ty - py) - kd * vy
    mag = np.sqrt(fx * fx + fy * fy)
    if mag > fmax and mag > 0.0:
        scale = fmax / mag
        fx *= scale
        fy *= scale
    return fx, fy


@njit(cache=True, nogil=True, inline="always")
def _is_movement(action):
    return (
        action == ACT_MOVE_TO_PACK
        or action == ACT_MOVE_TO_BASE
        or action == ACT_RANDOM_WALK
        or action == ACT_MOVE_TO_RANDOM_PACK
    )


@njit(cache=True, nogil=True)
def _sim_tick(
    t,
    rpos,
    rvel,
    rsc,
    rint,
    rprox,
    rhist,
    ppos,
    psc,
    pgdir,
    pint,
    pgeff,
    pgocc,
    pflags,
    pfree,
    smask,
    obst,
    par,
    cnt,
    cact,
    ctgt,
    cpkg,
    fscr,
    pvel,
    iscratch,
    rcat,
):
    """One simulation step given per-robot commands.

    Phase order: PD forces, semi-implicit Euler integration (free bodies and
    collective-transport assemblies), collision resolution, pickup/drop
    resolution, delivery resolution, energy decrement, stats accumulation.
    """
    n_robots = rpos.shape[0]
    n_pkg = ppos.shape[0]
    n_obs = obst.shape[0]
    dt = par[PAR_DT]
    vmax = par[PAR_VMAX]
    window = int(par[PAR_WSTUCK])

    # Completion flags for collaborative packages, fixed for this tick.
    for p in range(n_pkg):
        flag = 0
        if pint[p, PI_KIND] == KIND_COLLAB and pflags[p, PF_DELIV] == 0 and pint[p, PI_NGRIPS] > 0:
            flag = 1
            for g in range(pint[p, PI_NGRIPS]):
                if pgocc[p, g] < 0:
                    flag = 0
                    break
        iscratch[p] = flag

    # Robot category for this tick (free / anchored / carrier).
    for i in range(n_robots):
        held = rint[i, RI_HELD]
        if held < 0 or pint[held, PI_KIND] == KIND_INDIVIDUAL:
            rcat[i] = CAT_FREE
        elif iscratch[held] == 1:
            rcat[i] = CAT_CARRIER
        else:
            rcat[i] = CAT_ANCHOR

    # --- forces
    for i in range(n_robots):
        fx = 0.0
        fy = 0.0
        if rsc[i, R_EN] > 0.0:
            fx, fy = _pd_force(
                rpos[i, 0],
                rpos[i, 1],
                rvel[i, 0],
                rvel[i, 1],
                ctgt[i, 0],
                ctgt[i, 1],
                par[PAR_KP],
                par[PAR_KD],
                rsc[i, R_MAXF],
            )
        fscr[i, 0] = fx
        fscr[i, 1] = fy

    # --- integrate free robots (v then x), with speed cap before the move
    for i in range(n_robots):
        if rcat[i] == CAT_ANCHOR:
            rvel[i, 0] = 0.0
            rvel[i, 1] = 0.0
            continue
        if rcat[i] == CAT_CARRIER:
            continue
        rvel[i, 0] += (fscr[i, 0] / rsc[i, R_MASS]) * dt
        rvel[i, 1] += (fscr[i, 1] / rsc[i, R_MASS]) * dt
        speed = np.sqrt(rvel[i, 0] * rvel[i, 0] + rvel[i, 1] * rvel[i, 1])
        if speed > vmax:
            scale = vmax / speed
            rvel[i, 0] *= scale
            rvel[i, 1] *= scale
        rpos[i, 0] += rvel[i, 0] * dt
        rpos[i, 1] += rvel[i, 1] * dt

    # --- collective transport: complete assemblies move at the mean of the
    # carriers' intended velocities, scaled down when capacity < weight
    for p in range(n_pkg):
        pvel[p, 0] = 0.0
        pvel[p, 1] = 0.0
        if iscratch[p] != 1:
            continue
        sx = 0.0
        sy = 0.0
        cap = 0.0
        ng = pint[p, PI_NGRIPS]
        for g in range(ng):
            r = pgocc[p, g]
            if r < 0:
                continue
            if rsc[r, R_EN] > 0.0 and _is_movement(cact[r]):
                dx = ctgt[r, 0] - ppos[p, 0]
                dy = ctgt[r, 1] - ppos[p, 1]
                norm = np.sqrt(dx * dx + dy * dy)
                if norm > 1e-12:
                    sx += (dx / norm) * vmax
                    sy += (dy / norm) * vmax
            if rsc[r, R_EN] > 0.0:
                cap += rsc[r, R_CAP]
        factor = 1.0
        if psc[p, P_WEIGHT] > 0.0 and cap < psc[p, P_WEIGHT]:
            factor = cap / psc[p, P_WEIGHT]
        pvel[p, 0] = (sx / ng) * factor
        pvel[p, 1] = (sy / ng) * factor
        ppos[p, 0] += pvel[p, 0] * dt
        ppos[p, 1] += pvel[p, 1] * dt

    # --- collisions: walls, static obstacles, robot-robot (elastic, e = 1)
    for i in range(n_robots):
        if rcat[i] != CAT_FREE:
            continue
        rr = rsc[i, R_RAD]
        if rpos[i, 0] - rr < par[PAR_XMIN]:
            rpos[i, 0] = par[PAR_XMIN] + rr
            if rvel[i, 0] < 0.0:
                rvel[i, 0] = -rvel[i, 0]
        if rpos[i, 0] + rr > par[PAR_XMAX]:
            rpos[i, 0] = par[PAR_XMAX] - rr
            if rvel[i, 0] > 0.0:
                rvel[i, 0] = -rvel[i, 0]
        if rpos[i, 1] - rr < par[PAR_YMIN]:
            rpos[i, 1] = par[PAR_YMIN] + rr
            if rvel[i, 1] < 0.0:
                rvel[i, 1] = -rvel[i, 1]
        if rpos[i, 1] + rr > par[PAR_YMAX]:
            rpos[i, 1] = par[PAR_YMAX] - rr
            if rvel[i, 1] > 0.0:
                rvel[i, 1] = -rvel[i, 1]
        for o in range(n_obs):
            dx = rpos[i, 0] - obst[o, 0]
            dy = rpos[i, 1] - obst[o, 1]
            d = np.sqrt(dx * dx + dy * dy)
            rsum = rr + obst[o, 2]
            if d < rsum:
                if d > 1e-12:
                    nx = dx / d
                    ny = dy / d
                else:
                    nx = 1.0
                    ny = 0.0
                rpos[i, 0] = obst[o, 0] + nx * rsum
                rpos[i, 1] = obst[o, 1] + ny * rsum
                vn = rvel[i, 0] * nx + rvel[i, 1] * ny
                if vn < 0.0:
                    rvel[i, 0] -= 2.0 * vn * nx
                    rvel[i, 1] -= 2.0 * vn * ny

    for i in range(n_robots):
        for j in range(i + 1, n_robots):
            if rcat[i] != CAT_FREE and rcat[j] != CAT_FREE:
                continue  # two kinematic bodies never push each other
            dx = rpos[j, 0] - rpos[i, 0]
            dy = rpos[j, 1] - rpos[i, 1]
            rsum = rsc[i, R_RAD] + rsc[j, R_RAD]
            if abs(dx) > rsum or abs(dy) > rsum:
                continue
            d = np.sqrt(dx * dx + dy * dy)
            if d >= rsum:
                continue
            if d > 1e-12:
                nx = dx / d
                ny = dy / d
            else:
                nx = 1.0
                ny = 0.0
            inv_i = 0.0 if rcat[i] != CAT_FREE else 1.0 / rsc[i, R_MASS]
            inv_j = 0.0 if rcat[j] != CAT_FREE else 1.0 / rsc[j, R_MASS]
            inv_sum = inv_i + inv_j
            overlap = rsum - d
            rpos[i, 0] -= nx * overlap * (inv_i / inv_sum)
            rpos[i, 1] -= ny * overlap * (inv_i / inv_sum)
            rpos[j, 0] += nx * overlap * (inv_j / inv_sum)
            rpos[j, 1] += ny * overlap * (inv_j / inv_sum)
            vn = (rvel[j, 0] - rvel[i, 0]) * nx + (rvel[j, 1] - rvel[i, 1]) * ny
            if vn < 0.0:
                jm = -2.0 * vn / inv_sum
                rvel[i, 0] -= jm * inv_i * nx
                rvel[i, 1] -= jm * inv_i * ny
                rvel[j, 0] += jm * inv_j * nx
                rvel[j, 1] += jm * inv_j * ny

    # --- carried individual packages ride their holder
    for p in range(n_pkg):
        if pint[p, PI_KIND] == KIND_INDIVIDUAL and pint[p, PI_HELDBY] >= 0 and pflags[p, PF_DELIV] == 0:
            holder = pint[p, PI_HELDBY]
            ppos[p, 0] = rpos[holder, 0]
            ppos[p, 1] = rpos[holder, 1]

    # --- assemblies vs obstacles/walls: positional projection only
    for p in range(n_pkg):
        if iscratch[p] != 1:
            continue
        pr = psc[p, P_RAD]
        if ppos[p, 0] - pr < par[PAR_XMIN]:
            ppos[p, 0] = par[PAR_XMIN] + pr
        if ppos[p, 0] + pr > par[PAR_XMAX]:
            ppos[p, 0] = par[PAR_XMAX] - pr
        if ppos[p, 1] - pr < par[PAR_YMIN]:
            ppos[p, 1] = par[PAR_YMIN] + pr
        if ppos[p, 1] + pr > par[PAR_YMAX]:
            ppos[p, 1] = par[PAR_YMAX] - pr
        for o in range(n_obs):
            dx = ppos[p, 0] - obst[o, 0]
            dy = ppos[p, 1] - obst[o, 1]
            d = np.sqrt(dx * dx + dy * dy)
            rsum = pr + obst[o, 2]
            if d < rsum:
                if d > 1e-12:
                    nx = dx / d
                    ny = dy / d
                else:
                    nx = 1.0
                    ny = 0.0
                ppos[p, 0] = obst[o, 0] + nx * rsum
                ppos[p, 1] = obst[o, 1] + ny * rsum

    # --- attached robots follow their grip anchors
    for p in range(n_pkg):
        if pint[p, PI_KIND] != KIND_COLLAB or pflags[p, PF_DELIV] != 0:
            continue
        for g in range(pint[p, PI_NGRIPS]):
            r = pgocc[p, g]
            if r < 0:
                continue
            rpos[r, 0] = ppos[p, 0] + pgdir[p, g, 0] * (psc[p, P_RAD] + rsc[r, R_RAD])
            rpos[r, 1] = ppos[p, 1] + pgdir[p, g, 1] * (psc[p, P_RAD] + rsc[r, R_RAD])
            rvel[r, 0] = pvel[p, 0]
            rvel[r, 1] = pvel[p, 1]

    # --- pickup / drop resolution (ascending robot index)
    for i in range(n_robots):
        action = cact[i]
        if action == ACT_PICK_UP:
            _try_pickup(
                i, cpkg[i], rpos, rvel, rsc, rint, ppos, psc, pint, pgdir, pgeff, pgocc,
                pflags, pfree, smask, par, cnt,
            )
        elif action == ACT_DROP and rint[i, RI_HELD] >= 0:
            held = rint[i, RI_HELD]
            if pint[held, PI_KIND] == KIND_INDIVIDUAL:
                pint[held, PI_HELDBY] = -1
            else:
                pgocc[held, rint[i, RI_GRIP]] = -1
                pfree[held, pgeff[held, rint[i, RI_GRIP]]] += 1
            rint[i, RI_HELD] = -1
            rint[i, RI_GRIP] = -1

    # --- delivery resolution: any undelivered package inside the base disc
    for p in range(n_pkg):
        if pflags[p, PF_DELIV] != 0:
            continue
        if _dist(ppos[p, 0], ppos[p, 1], par[PAR_BX], par[PAR_BY]) > par[PAR_BR]:
            continue
        pflags[p, PF_DELIV] = 1
        if pint[p, PI_KIND] == KIND_INDIVIDUAL:
            holder = pint[p, PI_HELDBY]
            if holder >= 0:
                rint[holder, RI_HELD] = -1
                pint[p, PI_HELDBY] = -1
            cnt[CNT_DELIV] += 1
        else:
            for g in range(pint[p, PI_NGRIPS]):
                r = pgocc[p, g]
                if r >= 0:
                    rint[r, RI_HELD] = -1
                    rint[r, RI_GRIP] = -1
                    pgocc[p, g] = -1
                    pfree[p, pgeff[p, g]] += 1
            cnt[CNT_CDELIV] += 1
            cnt[CNT_GRIPS] += pint[p, PI_NGRIPS]

    # --- energy decrement + stats accumulation
    for i in range(n_robots):
        if rcat[i] == CAT_CARRIER:
            held = rint[i, RI_HELD]
            speed = 0.0
            if held >= 0:
                speed = np.sqrt(pvel[held, 0] ** 2 + pvel[held, 1] ** 2)
            drain = par[PAR_CMOVE] * rsc[i, R_MAXF] * (speed / vmax) + par[PAR_CIDLE]
        elif rcat[i] == CAT_ANCHOR:
            drain = par[PAR_CIDLE]
        else:
            fmag = np.sqrt(fscr[i, 0] ** 2 + fscr[i, 1] ** 2)
            drain = par[PAR_CMOVE] * fmag + par[PAR_CIDLE]
        energy = rsc[i, R_EN] - drain * dt
        rsc[i, R_EN] = energy if energy > 0.0 else 0.0

        if rint[i, RI_HELD] >= 0:
            d_base = _dist(rpos[i, 0], rpos[i, 1], par[PAR_BX], par[PAR_BY])
            rprox[i] += 10.0 / (1.0 + 0.1 * d_base)
        rhist[i, t % window, 0] = rpos[i, 0]
        rhist[i, t % window, 1] = rpos[i, 1]


@njit(cache=True, nogil=True)
def run_trial_kernel(
    t0,
    n_ticks,
    rpos,
    rvel,
    rsc,
    rint,
    rprox,
    rhist,
    rwalk,
    rrng,
    rops,
    rjmp,
    ppos,
    psc,
    pgdir,
    pint,
    pgeff,
    pgocc,
    pflags,
    obst,
    par,
    cnt,
    cact,
    ctgt,
    cpkg,
    fscr,
    pvel,
    iscratch,
):
    n_robots = rpos.shape[0]
    n_pkg = ppos.shape[0]
    bt_len = rops.shape[1]
    smask = np.empty((n_robots, n_pkg), dtype=np.uint8)
    static_compat_mask(rsc, rint, psc, pint, pgeff, par, smask)
    pfree = np.empty((n_pkg, 2), dtype=np.int32)
    free_grip_counts(pint, pgeff, pgocc, pfree)
    rcat = np.empty(n_robots, dtype=np.int32)
    bt_stack_type = np.empty(bt_len + 1, dtype=np.int32)
    bt_stack_jump = np.empty(bt_len + 1, dtype=np.int32)
    for t in range(t0, t0 + n_ticks):
        _decide(
            t, rpos, rvel, rsc, rint, rrng, rwalk, rhist, rops, rjmp,
            ppos, psc, pint, pflags, pfree, smask, par, cact, ctgt, cpkg, iscratch,
            bt_stack_type, bt_stack_jump,
        )
        _sim_tick(
            t, rpos, rvel, rsc, rint, rprox, rhist, ppos, psc, pgdir, pint,
            pgeff, pgocc, pflags, pfree, smask, obst, par, cnt, cact, ctgt, cpkg,
            fscr, pvel, iscratch, rcat,
        )
    return n_ticks
