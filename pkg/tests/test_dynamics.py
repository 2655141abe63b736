import numpy as np
import pytest

from kinoplan.dynamics import ConfigurationError, make_system, wrap_angle

ALL_SYSTEMS = [
    ("unicycle1", "v0"),
    ("unicycle1", "v1"),
    ("unicycle1", "v2"),
    ("unicycle2", "v0"),
    ("car_with_trailer", "v0"),
]


def fd_jacobians(system, x, u, eps=1e-6):
    A = np.zeros((system.d_x, system.d_x))
    B = np.zeros((system.d_x, system.d_u))
    for i in range(system.d_x):
        dx = np.zeros(system.d_x)
        dx[i] = eps
        A[:, i] = (system.step(x + dx, u) - system.step(x - dx, u)) / (2 * eps)
    for i in range(system.d_u):
        du = np.zeros(system.d_u)
        du[i] = eps
        B[:, i] = (system.step(x, u + du) - system.step(x, u - du)) / (2 * eps)
    return A, B


def sample_xu(system, rng):
    # keep angles away from +-pi so central differences never cross the seam
    while True:
        x = system.sample_state(rng)
        if all(abs(abs(x[i]) - np.pi) > 1e-3 for i in system.angular_dims):
            break
    u = rng.uniform(system.u_lo, system.u_hi)
    return x, u


class TestMakeSystem:
    def test_v1_has_positive_minimum_speed(self):
        assert np.allclose(make_system("unicycle1", "v1").u_lo, [0.25, -0.5])

    def test_v2_has_asymmetric_turning(self):
        sys2 = make_system("unicycle1", "v2")
        assert np.allclose(sys2.u_lo, [0.25, -0.25])
        assert np.allclose(sys2.u_hi, [0.5, 0.5])

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigurationError):
            make_system("unicycle1", "v9")
        with pytest.raises(ConfigurationError):
            make_system("hovercraft", "v0")

    def test_trailer_parameters(self):
        tr = make_system("car_with_trailer")
        assert tr.params["L"] == 0.25
        assert tr.params["d1"] == 0.5
        assert np.allclose(tr.u_lo, [-0.1, -np.pi / 3])

    def test_all_use_dt_point_one(self):
        for name, variant in ALL_SYSTEMS:
            assert make_system(name, variant).dt == 0.1


class TestStep:
    def test_straight_line(self):
        sys1 = make_system("unicycle1", "v0")
        assert np.allclose(sys1.step([0, 0, 0], [0.5, 0]), [0.05, 0, 0])

    def test_heading_up(self):
        sys1 = make_system("unicycle1", "v0")
        out = sys1.step([1, 2, np.pi / 2], [0.5, 0.5])
        assert np.allclose(out, [1, 2.05, np.pi / 2 + 0.05], atol=1e-15)

    def test_hand_evaluated_diagonal(self):
        # v=0.4 at 45 deg: dx = dy = 0.4*cos(pi/4)*0.1 = 0.0282842712474619
        sys1 = make_system("unicycle1", "v0")
        out = sys1.step([0, 0, np.pi / 4], [0.4, -0.2])
        expected = [0.028284271247461906, 0.028284271247461906, np.pi / 4 - 0.02]
        assert np.allclose(out, expected, atol=1e-15)

    def test_dimension_mismatch(self):
        sys1 = make_system("unicycle1", "v0")
        with pytest.raises(ValueError):
            sys1.step(np.zeros(4), np.zeros(2))
        with pytest.raises(ValueError):
            sys1.step(np.zeros(3), np.zeros(3))

    def test_angle_wrapped_into_interval(self):
        sys1 = make_system("unicycle1", "v0")
        x = np.array([0.0, 0.0, np.pi - 0.01])
        for _ in range(10):
            x = sys1.step(x, [0.0, 0.5])
        assert -np.pi < x[2] <= np.pi


class TestJacobians:
    def test_theta_zero_row(self):
        sys1 = make_system("unicycle1", "v0")
        A, _ = sys1.step_jacobians([5.0, 1.0, 0.0], [0.3, 0.1])
        assert np.allclose(A[0], [1, 0, 0])

    @pytest.mark.parametrize("name,variant", ALL_SYSTEMS)
    def test_match_finite_differences(self, name, variant):
        system = make_system(name, variant)
        rng = np.random.default_rng(11)
        for _ in range(1000):
            x, u = sample_xu(system, rng)
            A, B = system.step_jacobians(x, u)
            Af, Bf = fd_jacobians(system, x, u)
            scale = max(1.0, np.max(np.abs(A)), np.max(np.abs(B)))
            assert np.max(np.abs(A - Af)) <= 1e-5 * scale
            assert np.max(np.abs(B - Bf)) <= 1e-5 * scale


class TestRollout:
    def test_zero_velocity_fixed_point(self):
        sys2 = make_system("unicycle2")
        x0 = np.array([0.3, 0.4, 1.0, 0.0, 0.0])
        X = sys2.rollout(x0, np.zeros((7, 2)))
        assert np.allclose(X, x0)

    def test_straight_line_at_v_max(self):
        sys1 = make_system("unicycle1", "v0")
        X = sys1.rollout([0, 0, 0], [[0.5, 0]] * 10)
        assert np.allclose(X[-1], [0.5, 0, 0])

    def test_equals_chained_steps(self):
        tr = make_system("car_with_trailer")
        rng = np.random.default_rng(4)
        x0 = tr.sample_state(rng)
        U = rng.uniform(tr.u_lo, tr.u_hi, (5, 2))
        X = tr.rollout(x0, U)
        x = x0
        for k in range(5):
            x = tr.step(x, U[k])
            assert np.allclose(X[k + 1], x)

    @pytest.mark.parametrize("name,variant", ALL_SYSTEMS)
    def test_definitional_recurrence(self, name, variant):
        system = make_system(name, variant)
        rng = np.random.default_rng(6)
        x0 = system.sample_state(rng)
        U = rng.uniform(system.u_lo, system.u_hi, (8, system.d_u))
        X = system.rollout(x0, U)
        for k in range(8):
            assert np.allclose(X[k + 1], system.step(X[k], U[k]))


class TestBounds:
    def test_v1_minimum_speed_rejected(self):
        sys1 = make_system("unicycle1", "v1")
        assert not sys1.controls_in_bounds(np.array([0.2, 0.0]))

    def test_boundary_inclusive(self):
        sys1 = make_system("unicycle1", "v0")
        assert sys1.controls_in_bounds(np.array([0.5, -0.5]))

    def test_trailer_hitch_constraint(self):
        tr = make_system("car_with_trailer")
        assert not tr.state_in_bounds(np.array([0, 0, 0, np.pi / 2]))
        assert tr.state_in_bounds(np.array([0, 0, 0, np.pi / 8]))
        # wrapped hitch angle: headings on opposite sides of the seam
        assert tr.state_in_bounds(np.array([0, 0, np.pi - 0.05, -np.pi + 0.05]))

    def test_unicycle2_velocity_bounds(self):
        sys2 = make_system("unicycle2")
        assert sys2.state_in_bounds(np.array([9, 9, 0, 0.5, -0.5]))
        assert not sys2.state_in_bounds(np.array([0, 0, 0, 0.51, 0]))


class TestTranslationInvariance:
    @pytest.mark.parametrize("name,variant", ALL_SYSTEMS)
    def test_step_equivariant(self, name, variant):
        system = make_system(name, variant)
        rng = np.random.default_rng(13)
        for _ in range(200):
            x, u = sample_xu(system, rng)
            t = rng.uniform(-50, 50, 2)
            shifted = x.copy()
            shifted[:2] += t
            out = system.step(shifted, u)
            expected = system.step(x, u)
            expected[:2] += t
            assert np.max(np.abs(out - expected)) <= 1e-12


class TestWrapAngle:
    def test_interval_is_half_open(self):
        assert wrap_angle(np.pi) == np.pi
        assert wrap_angle(-np.pi) == np.pi
        assert wrap_angle(0.0) == 0.0

    def test_periodic(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-10, 10, 100)
        assert np.allclose(np.cos(wrap_angle(a)), np.cos(a))
        assert np.allclose(np.sin(wrap_angle(a)), np.sin(a))
        assert np.all(wrap_angle(a) > -np.pi)
        assert np.all(wrap_angle(a) <= np.pi)
