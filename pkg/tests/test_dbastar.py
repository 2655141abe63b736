import numpy as np
import pytest

from dbastar_oracle import METRIC, SYS1, lattice_primitives, random_instance
from kinoplan.dbastar import check_db_bounded, db_astar, heuristic
from kinoplan.dynamics import make_system
from kinoplan.geometry import Box, Environment, default_shape
from kinoplan.metric import StateMetric, distance
from kinoplan.primitives import make_primitive


def empty_env(size=4.0):
    return Environment(np.array([-size, -size]), np.array([size, size]))


def straight_prims():
    U = np.tile([0.5, 0.0], (5, 1))
    X = SYS1.rollout([0.0, 0.0, 0.0], U)
    return [make_primitive(SYS1, X, U)]


class TestHeuristic:
    def test_zero_at_goal_position(self):
        x = np.array([1.0, 2.0, 0.5])
        assert heuristic(METRIC, SYS1, x, x) == 0.0

    def test_one_meter_is_two_seconds(self):
        assert heuristic(METRIC, SYS1, [0, 0, 0], [1, 0, 0]) == pytest.approx(2.0)

    def test_spot_check_over_generated_library(self, lib_u1v0):
        rng = np.random.default_rng(31)
        for _ in range(1000):
            m = lib_u1v0[rng.integers(len(lib_u1v0))]
            x = SYS1.sample_state(rng)
            goal = SYS1.sample_state(rng)
            end = m.end.copy()
            end[:2] += x[:2]
            assert heuristic(METRIC, SYS1, x, goal) <= (
                m.cost + heuristic(METRIC, SYS1, end, goal) + 1e-12
            )


class TestDbAstarBasics:
    def test_start_in_goal_ball(self):
        x = np.array([0.5, 0.5, 0.0])
        sol = db_astar(x, x, empty_env(), default_shape(SYS1), SYS1, METRIC,
                       straight_prims(), delta=0.3)
        assert sol is not None
        assert sol.T == 0 and sol.cost == 0.0
        assert np.allclose(sol.states, [x])

    def test_corridor_three_segments(self):
        # 1 m straight-line goal; 0.25 m segments; delta soaks the 0.25 m rest
        env = Environment(np.array([-0.2, -0.4]), np.array([1.4, 0.4]))
        x_s = np.array([0.0, 0.0, 0.0])
        x_f = np.array([1.0, 0.0, 0.0])
        sol = db_astar(x_s, x_f, env, default_shape(SYS1), SYS1, METRIC,
                       straight_prims(), delta=0.3, alpha=0.5)
        assert sol is not None
        assert sol.T == 15
        assert sol.cost == pytest.approx(1.5)
        rep = check_db_bounded(SYS1, METRIC, env, default_shape(SYS1),
                               sol.states, sol.controls, 0.3, x_s, x_f)
        assert rep.ok

    def test_separating_wall_infeasible(self):
        env = Environment(
            np.array([-1.0, -1.0]),
            np.array([2.0, 1.0]),
            (Box(np.array([0.75, 0.0]), np.array([0.15, 1.0])),),  # full-height wall
        )
        sol = db_astar(np.array([0.0, 0.0, 0.0]), np.array([1.5, 0.0, 0.0]),
                       env, default_shape(SYS1), SYS1, METRIC,
                       straight_prims() + lattice_primitives(), delta=0.25)
        assert sol is None

    def test_c_max_below_best_cost_infeasible(self):
        env = empty_env(2.0)
        x_s = np.array([0.0, 0.0, 0.0])
        x_f = np.array([1.0, 0.0, 0.0])
        feasible = db_astar(x_s, x_f, env, default_shape(SYS1), SYS1, METRIC,
                            straight_prims(), delta=0.3)
        assert feasible is not None
        sol = db_astar(x_s, x_f, env, default_shape(SYS1), SYS1, METRIC,
                       straight_prims(), delta=0.3, c_max=feasible.cost - 1e-9)
        assert sol is None

    def test_popped_f_monotone_debug_mode(self):
        rng = np.random.default_rng(41)
        inst = None
        while inst is None:
            inst = random_instance(rng)
        sol = db_astar(inst["x_s"], inst["x_f"], inst["env"], inst["shape"], SYS1,
                       METRIC, inst["motions"], inst["delta"], inst["alpha"],
                       debug_monotone=True)
        assert sol is not None

    def test_invalid_parameters(self):
        env = empty_env()
        with pytest.raises(ValueError):
            db_astar(np.zeros(3), np.zeros(3), env, default_shape(SYS1), SYS1,
                     METRIC, straight_prims(), delta=0.0)
        with pytest.raises(ValueError):
            db_astar(np.zeros(3), np.zeros(3), env, default_shape(SYS1), SYS1,
                     METRIC, straight_prims(), delta=0.2, alpha=1.0)
        with pytest.raises(ValueError):
            db_astar(np.zeros(3), np.zeros(3), env, default_shape(SYS1), SYS1,
                     METRIC, [], delta=0.2)


class TestDijkstraOracle:
    def test_cost_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(55)
        done = 0
        while done < 12:
            inst = random_instance(rng)
            if inst is None:
                continue
            done += 1
            sol = db_astar(inst["x_s"], inst["x_f"], inst["env"], inst["shape"],
                           SYS1, METRIC, inst["motions"], inst["delta"],
                           inst["alpha"], c_max=3.5)
            assert sol is not None, "oracle-feasible instance came back infeasible"
            assert sol.cost == pytest.approx(inst["oracle"], abs=1e-9)


class TestCheckDbBounded:
    def rollout_solution(self):
        rng = np.random.default_rng(61)
        U = rng.uniform(SYS1.u_lo, SYS1.u_hi, (12, 2))
        X = SYS1.rollout([0.5, 0.5, 0.2], U)
        return X, U

    def test_exact_rollout_zero_delta(self):
        X, U = self.rollout_solution()
        rep = check_db_bounded(SYS1, METRIC, empty_env(), default_shape(SYS1),
                               X, U, 0.0, X[0], X[-1])
        assert rep.ok
        assert rep.max_dynamics_gap == 0.0

    def test_translated_state_flags_dynamics_gap(self):
        X, U = self.rollout_solution()
        delta = 0.15
        X = X.copy()
        X[2, :2] += 2 * delta
        rep = check_db_bounded(SYS1, METRIC, empty_env(), default_shape(SYS1),
                               X, U, delta, X[0], X[-1])
        assert not rep.ok
        assert ("dynamics_gap", 1) in rep.violations

    def test_out_of_bound_control_flagged(self):
        X, U = self.rollout_solution()
        U = U.copy()
        U[3, 1] = 0.6
        rep = check_db_bounded(SYS1, METRIC, empty_env(), default_shape(SYS1),
                               X, U, 0.5, X[0], X[-1])
        assert ("control_bounds", 3) in rep.violations

    def test_goal_gap_flagged(self):
        X, U = self.rollout_solution()
        far = X[-1] + np.array([1.0, 0.0, 0.0])
        rep = check_db_bounded(SYS1, METRIC, empty_env(), default_shape(SYS1),
                               X, U, 0.2, X[0], far)
        assert not rep.ok
        assert ("goal_gap", len(X) - 1) in rep.violations

    def test_db_astar_output_passes_own_delta(self, lib_u1v0):
        # bounded-discontinuity guarantee on real searches
        rng = np.random.default_rng(62)
        env = empty_env(3.0)
        shape = default_shape(SYS1)
        checked = 0
        for _ in range(20):
            x_s = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0])
            x_f = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                            rng.uniform(-np.pi, np.pi)])
            delta = float(rng.choice([0.2, 0.35, 0.5]))
            alpha = float(rng.choice([0.3, 0.5, 0.7]))
            sol = db_astar(x_s, x_f, env, shape, SYS1, METRIC, lib_u1v0[:120],
                           delta, alpha, c_max=12.0)
            if sol is None:
                continue
            checked += 1
            rep = check_db_bounded(SYS1, METRIC, env, shape, sol.states,
                                   sol.controls, delta, x_s, x_f)
            assert rep.ok, rep.violations
        assert checked >= 5


class TestAcrossSystems:
    @pytest.mark.parametrize("fixture", ["lib_u2", "lib_trailer"])
    def test_solutions_bounded_for_other_systems(self, fixture, request):
        motions = request.getfixturevalue(fixture)
        system = (make_system("unicycle2") if fixture == "lib_u2"
                  else make_system("car_with_trailer"))
        shape = default_shape(system)
        env = Environment(np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
        rng = np.random.default_rng(63)
        found = 0
        for _ in range(10):
            x_s = system.sample_state(rng)
            x_s[:2] = rng.uniform(-0.5, 0.5, 2)
            x_f = system.sample_state(rng)
            x_f[:2] = rng.uniform(-1.0, 1.0, 2)
            delta = float(rng.choice([0.35, 0.5]))
            sol = db_astar(x_s, x_f, env, shape, system, StateMetric(), motions,
                           delta, 0.5, c_max=15.0)
            if sol is None:
                continue
            found += 1
            rep = check_db_bounded(system, StateMetric(), env, shape, sol.states,
                                   sol.controls, delta, x_s, x_f)
            assert rep.ok, rep.violations
        assert found >= 1
