"""Anytime planner loop: grow primitives, shrink delta, search, repair, harvest.

Each iteration draws the next chunk of the dispersion-sorted library (then
freshly generated motions once exhausted), re-estimates the discontinuity
bound, runs the bounded-discontinuity search under the current cost bound,
repairs any result with the optimizer, and feeds valid pieces of the
optimizer output back into the primitive set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dbastar import db_astar
from .dynamics import SystemModel
from .geometry import Environment, RobotShape
from .metric import StateMetric
from .primitives import (
    MotionPrimitive,
    compute_delta,
    extract_primitives,
    generate_primitives,
)
from .trajopt import OptProblem, OptResult, feasibility_report, optimize_with_time_search


@dataclass(frozen=True)
class PlannerConfig:
    b_d: int = 10  # desired branching factor
    alpha: float = 0.5
    chunk_base: int = 100  # iteration n draws chunk_base * 2^(n-1) primitives
    piece_length: int = 5
    timeout: float = 300.0  # [s]
    time_factors: tuple[float, ...] = (0.8, 1.0, 1.2)
    delta_samples: int = 100
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        if self.b_d < 1 or self.chunk_base < 1 or self.piece_length < 2:
            raise ValueError("b_d, chunk size, and piece_length must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.timeout < 0:
            raise ValueError("timeout must be nonnegative")

    def chunk_size(self, iteration: int) -> int:
        return self.chunk_base * 2 ** (iteration - 1)


@dataclass
class Solution:
    states: np.ndarray
    controls: np.ndarray
    T: int
    cost: float
    found_at: float  # wall-clock seconds since planner start
    iteration: int
    residuals: dict


@dataclass
class IterationRecord:
    iteration: int
    n_motions: int
    delta: float
    db_outcome: str  # "solution" | "infeasible"
    db_cost: float | None
    db_expansions: int
    opt_outcome: str  # "converged" | "failed" | "skipped"
    opt_cost: float | None
    extracted: int
    c_max: float
    db_time: float = 0.0
    opt_time: float = 0.0


@dataclass
class RunTrace:
    iterations: list[IterationRecord] = field(default_factory=list)

    def deterministic_dict(self) -> dict:
        """Trace content excluding wall-clock timings (byte-stable per seed)."""
        return {
            "iterations": [
                {
                    "iteration": r.iteration,
                    "n_motions": r.n_motions,
                    "delta": r.delta,
                    "db_outcome": r.db_outcome,
                    "db_cost": r.db_cost,
                    "db_expansions": r.db_expansions,
                    "opt_outcome": r.opt_outcome,
                    "opt_cost": r.opt_cost,
                    "extracted": r.extracted,
                    "c_max": r.c_max if np.isfinite(r.c_max) else None,
                }
                for r in self.iterations
            ]
        }

    def timing_dict(self) -> dict:
        return {
            "iterations": [
                {"iteration": r.iteration, "db_time": r.db_time, "opt_time": r.opt_time}
                for r in self.iterations
            ]
        }


class _PrimitivePool:
    """Feeds the planner chunks of the sorted library, then fresh motions."""

    def __init__(self, library: list[MotionPrimitive], system: SystemModel, config: PlannerConfig):
        self.library = library
        self.system = system
        self.config = config
        self.cursor = 0
        self.fresh_seed = 0

    def next_chunk(self, iteration: int, deadline: float | None = None) -> list[MotionPrimitive]:
        want = self.config.chunk_size(iteration)
        chunk = self.library[self.cursor:self.cursor + want]
        self.cursor += len(chunk)
        if len(chunk) < want:
            self.fresh_seed += 1
            chunk = chunk + generate_primitives(
                self.system,
                want - len(chunk),
                piece_length=self.config.piece_length,
                seed=(self.config.seed + 1) * 100003 + self.fresh_seed,
                deadline=deadline,
            )
        return chunk


def kmp_db_astar(
    system: SystemModel,
    env: Environment,
    shape: RobotShape,
    metric: StateMetric,
    x_s: np.ndarray,
    x_f: np.ndarray,
    library: list[MotionPrimitive],
    config: PlannerConfig,
    on_solution=None,
) -> tuple[Solution | None, RunTrace]:
    """Anytime kinodynamic planning; returns the best solution and the trace.

    Reported solutions pass the full feasibility check and have strictly
    decreasing costs; the cost bound is handed to the search so later
    iterations only look for improvements.
    """
    t_start = time.perf_counter()
    deadline = t_start + config.timeout
    pool = _PrimitivePool(list(library), system, config)
    motions: list[MotionPrimitive] = []
    c_max = np.inf
    best: Solution | None = None
    trace = RunTrace()
    iteration = 0
    while time.perf_counter() < deadline:
        iteration += 1
        if config.max_iterations is not None and iteration > config.max_iterations:
            break
        motions.extend(pool.next_chunk(iteration, deadline=deadline))
        if not motions:
            break
        delta = compute_delta(
            metric,
            system,
            motions,
            min(config.b_d, len(motions)),
            n_samples=config.delta_samples,
            seed=config.seed,
        )
        t0 = time.perf_counter()
        db = db_astar(
            x_s,
            x_f,
            env,
            shape,
            system,
            metric,
            motions,
            delta,
            alpha=config.alpha,
            c_max=c_max,
            deadline=deadline,
        )
        db_time = time.perf_counter() - t0
        rec = IterationRecord(
            iteration=iteration,
            n_motions=len(motions),
            delta=delta,
            db_outcome="infeasible" if db is None else "solution",
            db_cost=None if db is None else db.cost,
            db_expansions=0 if db is None else db.expansions,
            opt_outcome="skipped",
            opt_cost=None,
            extracted=0,
            c_max=c_max if np.isfinite(c_max) else np.inf,
            db_time=db_time,
        )
        if db is not None and db.T >= 2:
            t0 = time.perf_counter()
            problem = OptProblem(
                system=system,
                T=db.T,
                x_s=np.asarray(x_s, float),
                x_f=np.asarray(x_f, float),
                X0=db.states,
                U0=db.controls,
                env=env,
                shape=shape,
            )
            opt, last_iterate = optimize_with_time_search(
                problem, db.T, factors=config.time_factors, deadline=deadline,
                return_last=True,
            )
            rec.opt_time = time.perf_counter() - t0
            if opt is not None and opt.converged:
                rec.opt_outcome = "converged"
                rec.opt_cost = opt.cost
                report = feasibility_report(
                    system, env, shape, opt.states, opt.controls, x_s, x_f, metric
                )
                if report.ok and opt.cost < c_max:
                    best = Solution(
                        states=opt.states,
                        controls=opt.controls,
                        T=opt.T,
                        cost=opt.cost,
                        found_at=time.perf_counter() - t_start,
                        iteration=iteration,
                        residuals=report.as_dict(),
                    )
                    c_max = opt.cost
                    rec.c_max = c_max
                    if on_solution is not None:
                        on_solution(best)
            else:
                rec.opt_outcome = "failed"
            harvest_states, harvest_controls = _consistent_for_extraction(
                system, opt if opt is not None else last_iterate, db
            )
            extracted = extract_primitives(
                system, harvest_states, harvest_controls, config.piece_length
            )
            rec.extracted = len(extracted)
            motions.extend(extracted)
        elif db is not None:
            # zero-length search result: the start already satisfies the goal
            report = feasibility_report(system, env, shape, db.states, db.controls, x_s, x_f, metric)
            if report.ok and 0.0 < c_max:
                best = Solution(
                    states=db.states,
                    controls=db.controls,
                    T=0,
                    cost=0.0,
                    found_at=time.perf_counter() - t_start,
                    iteration=iteration,
                    residuals=report.as_dict(),
                )
                c_max = 0.0
                rec.c_max = 0.0
                rec.opt_outcome = "converged"
                rec.opt_cost = 0.0
                if on_solution is not None:
                    on_solution(best)
        trace.iterations.append(rec)
        if c_max == 0.0:
            break
    return best, trace


def _consistent_for_extraction(system: SystemModel, opt: OptResult | None, db) -> tuple:
    """Re-rollout the optimizer output so its dynamics defect is exactly zero.

    The optimizer converges to ~1e-6 defects, far above the primitive
    tolerance; rolling its (clamped) controls out from the first state gives
    an exactly consistent trajectory for harvesting.
    """
    if opt is None:
        states, controls = db.states, db.controls
    else:
        states, controls = opt.states, opt.controls
    controls = np.clip(controls, system.u_lo, system.u_hi)
    states = system.rollout(states[0], controls)
    return states, controls
