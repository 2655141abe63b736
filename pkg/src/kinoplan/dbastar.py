"""Discontinuity-bounded A*: informed search over motion-primitive concatenations.

Like A*, but states within (1-alpha)*delta of an explored node are merged into
it, and a primitive is applicable when its start differs from the current
node by at most alpha*delta in the rotational components.  Returned
trajectories therefore carry bounded "stitching" gaps instead of exact
dynamics, to be repaired by the optimizer.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemModel
from .geometry import Environment, RobotShape, motion_valid, state_valid
from .metric import NNIndex, StateMetric, distance
from .primitives import MotionPrimitive

_FLOAT_SLACK = 1e-9


def heuristic(metric: StateMetric, system: SystemModel, x, x_f) -> float:
    """Admissible time-to-go: straight-line distance over the top speed."""
    x = np.asarray(x, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    return float(np.linalg.norm(x[: system.d_w] - x_f[: system.d_w])) / system.v_max


@dataclass(eq=False)
class SearchNode:
    x: np.ndarray
    g: float
    h: float
    parent: "SearchNode | None" = None
    arrival: MotionPrimitive | None = None
    closed: bool = False


@dataclass
class DbSolution:
    states: np.ndarray
    controls: np.ndarray
    T: int
    cost: float
    junction_gaps: list[float] = field(default_factory=list)
    expansions: int = 0
    nodes: int = 0


@dataclass
class DbCheckReport:
    ok: bool
    max_dynamics_gap: float
    start_gap: float
    goal_gap: float
    violations: list[tuple[str, int]] = field(default_factory=list)


def check_db_bounded(system, metric, env, shape, X, U, delta, x_s, x_f) -> DbCheckReport:
    """Verify all five bounded-discontinuity conditions, listing violations."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float).reshape(-1, system.d_u)
    if len(X) != len(U) + 1:
        raise ValueError("need |X| = |U| + 1")
    tol = delta + _FLOAT_SLACK
    violations: list[tuple[str, int]] = []
    max_gap = 0.0
    for k in range(len(U)):
        gap = distance(metric, system, X[k + 1], system.step(X[k], U[k]))
        max_gap = max(max_gap, gap)
        if gap > tol:
            violations.append(("dynamics_gap", k))
        if not system.controls_in_bounds(U[k]):
            violations.append(("control_bounds", k))
    for k, x in enumerate(X):
        if not state_valid(env, shape, system, x):
            violations.append(("state_valid", k))
    start_gap = distance(metric, system, X[0], x_s)
    goal_gap = distance(metric, system, X[-1], x_f)
    if start_gap > tol:
        violations.append(("start_gap", 0))
    if goal_gap > tol:
        violations.append(("goal_gap", len(X) - 1))
    return DbCheckReport(not violations, max_gap, start_gap, goal_gap, violations)


def _reconstruct(system, metric, goal_node: SearchNode, x_s) -> DbSolution:
    chain = []
    cur = goal_node
    while cur.parent is not None:
        chain.append(cur)
        cur = cur.parent
    chain.reverse()
    if not chain:
        return DbSolution(
            states=np.asarray(x_s, dtype=float)[None, :],
            controls=np.zeros((0, system.d_u)),
            T=0,
            cost=0.0,
        )
    parts, controls, gaps = [], [], []
    prev_end = None
    for node in chain:
        m = node.arrival
        shift = np.zeros(system.d_x)
        shift[: system.d_w] = node.parent.x[: system.d_w]
        tstates = m.states + shift
        if prev_end is not None:
            gaps.append(distance(metric, system, tstates[0], prev_end))
        # junction keeps the next motion's start verbatim; the previous
        # motion's final state is the (<= delta away) state it replaces
        parts.append(tstates[:-1])
        controls.append(m.controls)
        prev_end = tstates[-1]
    # the trajectory ends at the goal node's stored state: for merged nodes
    # this is within the pruning radius of the final motion's end, and it is
    # the state the goal condition was tested against
    gaps.append(distance(metric, system, goal_node.x, prev_end))
    X = np.vstack(parts + [goal_node.x[None, :]])
    U = np.vstack(controls)
    return DbSolution(
        states=X,
        controls=U,
        T=len(U),
        cost=len(U) * system.dt,
        junction_gaps=gaps,
    )


def db_astar(
    x_s,
    x_f,
    env: Environment,
    shape: RobotShape,
    system: SystemModel,
    metric: StateMetric,
    motions,
    delta: float,
    alpha: float = 0.5,
    c_max: float = np.inf,
    deadline: float | None = None,
    debug_monotone: bool = False,
) -> DbSolution | None:
    """Search for a delta-discontinuity-bounded trajectory; None if infeasible.

    Nodes whose f-value reaches c_max are never expanded, and only solutions
    strictly cheaper than c_max are returned.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    motions = list(motions)
    if not motions:
        raise ValueError("need at least one motion primitive")
    x_s = np.asarray(x_s, dtype=float)
    x_f = np.asarray(x_f, dtype=float)

    index_m = NNIndex(system, metric, mode="rotational")
    index_m.add_many([m.start for m in motions], motions)
    index_n = NNIndex(system, metric, mode="full")
    root = SearchNode(x_s, 0.0, heuristic(metric, system, x_s, x_f))
    index_n.add(x_s, root)

    seq = itertools.count()
    heap: list[tuple[float, float, int, float, SearchNode]] = []
    heapq.heappush(heap, (root.g + root.h, root.h, next(seq), root.g, root))
    expansions = 0
    created = 1
    max_f = -np.inf
    # merges can shrink the heuristic by up to the pruning radius in time units
    mono_slack = _FLOAT_SLACK
    if metric.translation_weight > 0:
        mono_slack += (1 - alpha) * delta / (metric.translation_weight * system.v_max)

    while heap:
        f, _, _, g_at_push, node = heapq.heappop(heap)
        if node.closed or g_at_push != node.g:
            continue
        node.closed = True
        if debug_monotone:
            assert f >= max_f - mono_slack, f"popped f went back: {f} < {max_f}"
            max_f = max(max_f, f)
        if distance(metric, system, node.x, x_f) <= delta:
            if node.g < c_max:
                sol = _reconstruct(system, metric, node, x_s)
                sol.expansions = expansions
                sol.nodes = created
                return sol
            continue
        if node.g + node.h >= c_max:
            continue
        if deadline is not None and expansions % 64 == 0 and time.perf_counter() > deadline:
            return None
        expansions += 1
        for mi, _ in index_m.query_radius(node.x, alpha * delta):
            m = index_m.payloads[mi]
            g_t = node.g + m.cost
            end = m.end.copy()
            end[: system.d_w] += node.x[: system.d_w]
            h_end = heuristic(metric, system, end, x_f)
            if g_t + h_end >= c_max:
                continue
            if not motion_valid(env, shape, system, m, node.x[: system.d_w]):
                continue
            neighbors = index_n.query_radius(end, (1 - alpha) * delta)
            if not neighbors:
                child = SearchNode(end, g_t, h_end, node, m)
                created += 1
                heapq.heappush(heap, (g_t + h_end, h_end, next(seq), g_t, child))
                index_n.add(end, child)
            else:
                for ni, _ in neighbors:
                    other = index_n.payloads[ni]
                    if g_t < other.g and not other.closed:
                        other.g = g_t
                        other.parent = node
                        other.arrival = m
                        heapq.heappush(
                            heap, (g_t + other.h, other.h, next(seq), g_t, other)
                        )
    return None
