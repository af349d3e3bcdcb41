"""Flat behavior-tree virtual machine.

A task-planning policy is stored in the genome as a fixed-length array of
integer opcodes.  ``compile_program`` canonicalizes that raw array (mutation
can produce any byte soup) and precomputes, for every control node, the jump
index used to skip its remaining subtree.  ``tick`` interprets the compiled
program against one robot observation and yields at most one action command.

Interpreter semantics:
  * SEQ returns FAILURE at its first failing child, SUCCESS if all succeed.
  * SEL returns SUCCESS at its first succeeding child, FAILURE if all fail.
  * Condition leaves map observation flags to SUCCESS/FAILURE.
  * Movement actions return RUNNING and halt interpretation for this tick.
  * PICK_UP/DROP are instantaneous: SUCCESS (setting the action field) when
    their precondition holds, FAILURE otherwise.  Interpretation continues
    after an instantaneous action; if several run in one tick the last one
    wins, so the simulator receives at most one command per robot per tick.
  * A root status of SUCCESS/FAILURE with no action means "brake".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import ShapeError

# Opcodes.  Logged program arrays use exactly this numbering.
SEQ = 0
SEL = 1
COND_HAS_PACKAGE = 2
COND_NEAR_PACKAGE = 3
COND_NEAR_BASE = 4
COND_AM_I_STUCK = 5
ACT_MOVE_TO_PACK = 6
ACT_MOVE_TO_BASE = 7
ACT_RANDOM_WALK = 8
ACT_PICK_UP = 9
ACT_DROP = 10
ACT_MOVE_TO_RANDOM_PACK = 11
END = 12
NOP = 13

N_OPCODES = 14
CONDITIONS = (COND_HAS_PACKAGE, COND_NEAR_PACKAGE, COND_NEAR_BASE, COND_AM_I_STUCK)
ACTIONS = (
    ACT_MOVE_TO_PACK,
    ACT_MOVE_TO_BASE,
    ACT_RANDOM_WALK,
    ACT_PICK_UP,
    ACT_DROP,
    ACT_MOVE_TO_RANDOM_PACK,
)
LEAVES = CONDITIONS + ACTIONS

OPCODE_NAMES = {
    SEQ: "SEQ",
    SEL: "SEL",
    COND_HAS_PACKAGE: "COND_HAS_PACKAGE",
    COND_NEAR_PACKAGE: "COND_NEAR_PACKAGE",
    COND_NEAR_BASE: "COND_NEAR_BASE",
    COND_AM_I_STUCK: "COND_AM_I_STUCK",
    ACT_MOVE_TO_PACK: "ACT_MOVE_TO_PACK",
    ACT_MOVE_TO_BASE: "ACT_MOVE_TO_BASE",
    ACT_RANDOM_WALK: "ACT_RANDOM_WALK",
    ACT_PICK_UP: "ACT_PICK_UP",
    ACT_DROP: "ACT_DROP",
    ACT_MOVE_TO_RANDOM_PACK: "ACT_MOVE_TO_RANDOM_PACK",
    END: "END",
    NOP: "NOP",
}

# Status flags.
SUCCESS = 0
FAILURE = 1
RUNNING = 2

NO_ACTION = -1

FALLBACK_TREE = (SEL, ACT_RANDOM_WALK, END)


@dataclass(frozen=True, eq=False)
class Program:
    """A compiled behavior tree: canonical opcodes plus jump indices.

    ``opcodes`` is padded with NOP to the genome's fixed length; ``length``
    is one past the root END.  For a control node at position i, ``jumps[i]``
    points one past its matching END; for every other opcode it is i + 1.
    """

    opcodes: np.ndarray
    jumps: np.ndarray
    length: int


@dataclass(frozen=True)
class Observation:
    """What one robot senses at the start of a tick.

    ``nearest_package_id``/``random_package_id`` are present iff some package
    the robot could currently acquire exists (compatible, undelivered, free).
    """

    has_package: bool = False
    near_package: bool = False
    near_base: bool = False
    am_i_stuck: bool = False
    nearest_package_id: Optional[int] = None
    random_package_id: Optional[int] = None


@dataclass(frozen=True)
class TickResult:
    status: int
    action: Optional[int] = None
    target: Optional[int] = None


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def _parse(raw: np.ndarray, max_len: int):
    """Parse a raw opcode array into a canonical node tree.

    A node is either a leaf opcode (int) or a ``(SEQ|SEL, [children])`` pair.
    Canonicalization rules: NOPs are skipped, an END with no open node stops
    parsing, empty control nodes are dropped, anything after the root node
    completes is ignored, unterminated nodes are closed at end of input, and
    opening a node that could not be closed within ``max_len`` truncates.
    """
    root = None
    stack: list[list] = []  # each entry: children list of an open control node
    opstack: list[int] = []  # matching control opcodes
    cost = 0  # flattened length of everything accepted so far

    def close_top():
        nonlocal root, cost
        op = opstack.pop()
        children = stack.pop()
        if not children:
            cost -= 2  # dropped empty control node
            return
        node = (op, children)
        if stack:
            stack[-1].append(node)
        else:
            root = node

    for tok in raw:
        tok = int(tok)
        if root is not None:
            break
        if tok == NOP:
            continue
        if tok in (SEQ, SEL):
            if cost + 2 > max_len:
                break
            stack.append([])
            opstack.append(tok)
            cost += 2
        elif tok == END:
            if not stack:
                break  # END outside any node: structurally impossible
            close_top()
        else:  # leaf
            if cost + 1 > max_len:
                break
            cost += 1
            if stack:
                stack[-1].append(tok)
            else:
                root = tok  # bare leaf at root level completes the tree
    while stack and root is None:
        close_top()
    return root


def _flatten(node, out: list[int]) -> None:
    if isinstance(node, tuple):
        op, children = node
        out.append(op)
        for child in children:
            _flatten(child, out)
        out.append(END)
    else:
        out.append(node)


def compile_program(opcodes, max_len: Optional[int] = None) -> Program:
    """Canonicalize a raw opcode array and compute jump indices.

    Never rejects: any input (including all-NOP) yields an interpretable
    program, falling back to a lone random-walk selector.  The output array
    keeps the input's padded length.
    """
    raw = np.asarray(opcodes, dtype=np.int32).ravel()
    if max_len is None:
        max_len = len(raw)
    if max_len < len(FALLBACK_TREE):
        raise ShapeError(f"program length {max_len} cannot hold a minimal tree")
    if np.any((raw < 0) | (raw >= N_OPCODES)):
        raise ShapeError("opcode out of range [0, 13]")

    root = _parse(raw, max_len)
    if root is None:
        root = (SEL, [ACT_RANDOM_WALK])
    elif not isinstance(root, tuple):
        root = (SEL, [root])  # wrap a bare-leaf root so the root is a control node

    flat: list[int] = []
    _flatten(root, flat)
    out = np.full(max_len, NOP, dtype=np.int32)
    out[: len(flat)] = flat

    jumps = np.arange(1, max_len + 1, dtype=np.int32)
    stack = []
    for i, op in enumerate(flat):
        if op in (SEQ, SEL):
            stack.append(i)
        elif op == END:
            jumps[stack.pop()] = i + 1
    return Program(opcodes=out, jumps=jumps, length=len(flat))


# ---------------------------------------------------------------------------
# Flat interpreter (shared with the simulation kernel)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def bt_tick_flat(opcodes, jumps, has_pkg, near_pkg, near_base, stuck, has_nearest, has_random,
                 stack_type, stack_jump):
    """One interpretation pass.  Returns (status, action opcode or -1).

    Forward jumps only, so the walk is bounded by one array traversal.
    ``stack_type``/``stack_jump`` are caller-provided int32 scratch of at
    least len(opcodes) + 1 entries (hoisted out of the hot loop).
    """
    n = opcodes.shape[0]
    sp = 0
    i = 0
    action = NO_ACTION
    while i < n:
        op = opcodes[i]
        if op == SEQ or op == SEL:
            stack_type[sp] = op
            stack_jump[sp] = jumps[i]
            sp += 1
            i += 1
            continue
        if op == NOP:  # canonical programs only pad after the root END
            i += 1
            continue
        if op == END:
            sp -= 1
            s = SUCCESS if stack_type[sp] == SEQ else FAILURE
            nxt = i + 1
        else:
            nxt = i + 1
            if op == COND_HAS_PACKAGE:
                s = SUCCESS if has_pkg else FAILURE
            elif op == COND_NEAR_PACKAGE:
                s = SUCCESS if near_pkg else FAILURE
            elif op == COND_NEAR_BASE:
                s = SUCCESS if near_base else FAILURE
            elif op == COND_AM_I_STUCK:
                s = SUCCESS if stuck else FAILURE
            elif op == ACT_PICK_UP:
                if near_pkg and not has_pkg:
                    s = SUCCESS
                    action = op
                else:
                    s = FAILURE
            elif op == ACT_DROP:
                if has_pkg:
                    s = SUCCESS
                    action = op
                else:
                    s = FAILURE
            elif op == ACT_MOVE_TO_PACK:
                if has_nearest:
                    return RUNNING, op
                s = FAILURE
            elif op == ACT_MOVE_TO_RANDOM_PACK:
                if has_random:
                    return RUNNING, op
                s = FAILURE
            else:  # ACT_MOVE_TO_BASE, ACT_RANDOM_WALK
                return RUNNING, op
        # Propagate the child status through enclosing control nodes.
        while True:
            if sp == 0:
                return s, action
            ftype = stack_type[sp - 1]
            if ftype == SEQ and s == FAILURE:
                sp -= 1
                nxt = stack_jump[sp]
            elif ftype == SEL and s == SUCCESS:
                sp -= 1
                nxt = stack_jump[sp]
            else:
                break
        i = nxt
    return FAILURE, action  # unreachable for canonical programs


def _result(status: int, action: int, obs: Observation) -> TickResult:
    if action == NO_ACTION:
        return TickResult(status=int(status), action=None, target=None)
    target = None
    if action in (ACT_MOVE_TO_PACK, ACT_PICK_UP):
        target = obs.nearest_package_id
    elif action == ACT_MOVE_TO_RANDOM_PACK:
        target = obs.random_package_id
    return TickResult(status=int(status), action=int(action), target=target)


def tick(program: Program, obs: Observation) -> TickResult:
    """Interpret one tick of a compiled program against an observation."""
    n = program.opcodes.shape[0]
    scratch_type = np.empty(n + 1, np.int32)
    scratch_jump = np.empty(n + 1, np.int32)
    status, action = bt_tick_flat(
        program.opcodes,
        program.jumps,
        obs.has_package,
        obs.near_package,
        obs.near_base,
        obs.am_i_stuck,
        obs.nearest_package_id is not None,
        obs.random_package_id is not None,
        scratch_type,
        scratch_jump,
    )
    return _result(status, action, obs)


# ---------------------------------------------------------------------------
# Recursive reference interpreter (differential-testing oracle)
# ---------------------------------------------------------------------------


def _decompile(program: Program):
    """Rebuild the node tree of a canonical program."""

    def parse_node(i: int):
        op = int(program.opcodes[i])
        if op in (SEQ, SEL):
            children = []
            j = i + 1
            while int(program.opcodes[j]) != END:
                child, j = parse_node(j)
                children.append(child)
            return (op, children), j + 1
        return op, i + 1

    node, _ = parse_node(0)
    return node


def reference_tick(program: Program, obs: Observation) -> TickResult:
    """Plain recursive interpretation of the decompiled tree.

    Contract-identical to ``tick``; implemented independently of the flat
    walk so the two can be fuzzed against each other.
    """
    state = {"action": NO_ACTION, "halted": False}

    def eval_node(node) -> int:
        if isinstance(node, tuple):
            op, children = node
            if op == SEQ:
                for child in children:
                    s = eval_node(child)
                    if state["halted"]:
                        return RUNNING
                    if s == FAILURE:
                        return FAILURE
                return SUCCESS
            for child in children:
                s = eval_node(child)
                if state["halted"]:
                    return RUNNING
                if s == SUCCESS:
                    return SUCCESS
            return FAILURE
        op = node
        if op == COND_HAS_PACKAGE:
            return SUCCESS if obs.has_package else FAILURE
        if op == COND_NEAR_PACKAGE:
            return SUCCESS if obs.near_package else FAILURE
        if op == COND_NEAR_BASE:
            return SUCCESS if obs.near_base else FAILURE
        if op == COND_AM_I_STUCK:
            return SUCCESS if obs.am_i_stuck else FAILURE
        if op == ACT_PICK_UP:
            if obs.near_package and not obs.has_package:
                state["action"] = op
                return SUCCESS
            return FAILURE
        if op == ACT_DROP:
            if obs.has_package:
                state["action"] = op
                return SUCCESS
            return FAILURE
        if op == ACT_MOVE_TO_PACK:
            if obs.nearest_package_id is not None:
                state["action"] = op
                state["halted"] = True
                return RUNNING
            return FAILURE
        if op == ACT_MOVE_TO_RANDOM_PACK:
            if obs.random_package_id is not None:
                state["action"] = op
                state["halted"] = True
                return RUNNING
            return FAILURE
        # ACT_MOVE_TO_BASE, ACT_RANDOM_WALK
        state["action"] = op
        state["halted"] = True
        return RUNNING

    status = eval_node(_decompile(program))
    return _result(status, state["action"], obs)
