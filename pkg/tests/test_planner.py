import json

import numpy as np
import pytest

from kinoplan.dynamics import make_system
from kinoplan.geometry import Box, Environment, default_shape
from kinoplan.metric import StateMetric
from kinoplan.planner import PlannerConfig, kmp_db_astar
from kinoplan.trajopt import feasibility_report

SYS1 = make_system("unicycle1", "v0")
METRIC = StateMetric()


def park_env():
    return Environment(
        np.array([0.0, 0.0]),
        np.array([3.0, 1.5]),
        (Box(np.array([1.0, 1.05]), np.array([0.35, 0.3])),
         Box(np.array([2.0, 1.05]), np.array([0.35, 0.3]))),
    )


class TestTrivialCases:
    def test_start_equals_goal(self, lib_u1v0):
        env = park_env()
        x = np.array([0.7, 0.4, 0.0])
        cfg = PlannerConfig(timeout=30.0, seed=1, max_iterations=3)
        best, trace = kmp_db_astar(SYS1, env, default_shape(SYS1), METRIC,
                                   x, x, lib_u1v0, cfg)
        assert best is not None
        assert best.cost == 0.0
        assert best.iteration == 1

    def test_goal_inside_obstacle_yields_none(self, lib_u1v0):
        env = park_env()
        x_s = np.array([0.7, 0.4, 0.0])
        x_f = np.array([2.0, 1.05, 0.0])  # inside the right parked car
        cfg = PlannerConfig(timeout=5.0, seed=1, max_iterations=2, chunk_base=50)
        best, trace = kmp_db_astar(SYS1, env, default_shape(SYS1), METRIC,
                                   x_s, x_f, lib_u1v0, cfg)
        assert best is None
        assert all(r.db_outcome == "infeasible" for r in trace.iterations)

    def test_zero_timeout_returns_immediately(self, lib_u1v0):
        env = park_env()
        x_s = np.array([0.7, 0.4, 0.0])
        x_f = np.array([2.3, 0.4, 0.0])
        cfg = PlannerConfig(timeout=0.0, seed=1)
        best, trace = kmp_db_astar(SYS1, env, default_shape(SYS1), METRIC,
                                   x_s, x_f, lib_u1v0, cfg)
        assert best is None
        assert trace.iterations == []


class TestAnytimeBehavior:
    @pytest.fixture(scope="class")
    def park_run(self, lib_u1v0):
        env = park_env()
        x_s = np.array([0.725, 0.4, 0.0])
        x_f = np.array([2.275, 0.4, 0.0])
        solutions = []
        cfg = PlannerConfig(timeout=90.0, seed=5, max_iterations=4)
        best, trace = kmp_db_astar(SYS1, env, default_shape(SYS1), METRIC,
                                   x_s, x_f, lib_u1v0, cfg,
                                   on_solution=solutions.append)
        return env, x_s, x_f, best, trace, solutions

    def test_finds_solution(self, park_run):
        _, _, _, best, _, solutions = park_run
        assert best is not None
        assert solutions

    def test_costs_strictly_decreasing(self, park_run):
        *_, solutions = park_run
        costs = [s.cost for s in solutions]
        assert all(b < a for a, b in zip(costs, costs[1:]))

    def test_every_solution_feasible(self, park_run):
        env, x_s, x_f, _, _, solutions = park_run
        for s in solutions:
            rep = feasibility_report(SYS1, env, default_shape(SYS1), s.states,
                                     s.controls, x_s, x_f, METRIC)
            assert rep.ok

    def test_delta_nonincreasing_motions_nondecreasing(self, park_run):
        _, _, _, _, trace, _ = park_run
        deltas = [r.delta for r in trace.iterations]
        assert all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))
        counts = [r.n_motions for r in trace.iterations]
        assert all(b >= a for a, b in zip(counts, counts[1:]))

    def test_c_max_nonincreasing(self, park_run):
        _, _, _, _, trace, _ = park_run
        bounds = [r.c_max for r in trace.iterations]
        assert all(b <= a + 1e-12 for a, b in zip(bounds, bounds[1:]))

    def test_best_matches_last_reported(self, park_run):
        _, _, _, best, _, solutions = park_run
        assert best.cost == solutions[-1].cost


class TestDeterminism:
    def test_identical_seed_identical_trace(self, lib_u1v0):
        env = park_env()
        x_s = np.array([0.725, 0.4, 0.0])
        x_f = np.array([2.275, 0.4, 0.0])
        runs = []
        for _ in range(2):
            cfg = PlannerConfig(timeout=600.0, seed=9, max_iterations=3,
                                chunk_base=60)
            _, trace = kmp_db_astar(SYS1, env, default_shape(SYS1), METRIC,
                                    x_s, x_f, lib_u1v0, cfg)
            runs.append(json.dumps(trace.deterministic_dict(), sort_keys=True))
        assert runs[0] == runs[1]


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            PlannerConfig(b_d=0)
        with pytest.raises(ValueError):
            PlannerConfig(alpha=1.0)
        with pytest.raises(ValueError):
            PlannerConfig(chunk_base=0)
        with pytest.raises(ValueError):
            PlannerConfig(timeout=-1.0)

    def test_chunk_schedule_doubles(self):
        cfg = PlannerConfig()
        assert [cfg.chunk_size(n) for n in (1, 2, 3)] == [100, 200, 400]
