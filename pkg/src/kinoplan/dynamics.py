"""Translation-invariant mobile-robot dynamics with discrete Euler stepping.

All systems share the convention that the first two state components are the
workspace translation (x, y) and never enter the continuous dynamics, so a
trajectory can be shifted freely in the plane.  Angular state components are
stored wrapped to (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

D_W = 2  # workspace dimension


class ConfigurationError(ValueError):
    """Unknown system name/variant or invalid system parameters."""


def wrap_angle(a):
    """Wrap an angle (or array of angles) to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def state_diff(system: "SystemModel", x1, x2) -> np.ndarray:
    """Componentwise x1 - x2 with angular components wrapped."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    for i in system.angular_dims:
        d[..., i] = wrap_angle(d[..., i])
    return d


@dataclass(frozen=True)
class SystemModel:
    """A translation-invariant dynamical system in discrete time."""

    name: str
    variant: str
    d_x: int
    d_u: int
    angular_dims: tuple[int, ...]
    u_lo: np.ndarray
    u_hi: np.ndarray
    x_lo: np.ndarray  # per-component bounds; +-inf where unbounded
    x_hi: np.ndarray
    dt: float = 0.1
    d_w: int = D_W
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(self.u_lo <= self.u_hi):
            raise ConfigurationError(f"{self.name}: control bounds must satisfy u_lo <= u_hi")
        if self.dt <= 0:
            raise ConfigurationError(f"{self.name}: dt must be positive")
        for arr in ("u_lo", "u_hi", "x_lo", "x_hi"):
            getattr(self, arr).setflags(write=False)

    @property
    def key(self) -> str:
        return f"{self.name}/{self.variant}"

    @property
    def v_max(self) -> float:
        """Maximum translational speed, used by the time heuristic."""
        raise NotImplementedError

    def f(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Continuous dynamics dx/dt; depends only on the rotational state."""
        raise NotImplementedError

    def f_jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Analytic (df/dx, df/du) of the continuous dynamics."""
        raise NotImplementedError

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One Euler step x + f(x^r, u) * dt with angles renormalized."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.d_x,) or u.shape != (self.d_u,):
            raise ValueError(
                f"{self.key}: expected shapes ({self.d_x},)/({self.d_u},), "
                f"got {x.shape}/{u.shape}"
            )
        xn = x + self.f(x, u) * self.dt
        for i in self.angular_dims:
            xn[i] = wrap_angle(xn[i])
        return xn

    def step_jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians (A, B) of the Euler step w.r.t. state and control."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.d_x,) or u.shape != (self.d_u,):
            raise ValueError(f"{self.key}: dimension mismatch in step_jacobians")
        fx, fu = self.f_jacobians(x, u)
        A = np.eye(self.d_x) + fx * self.dt
        B = fu * self.dt
        return A, B

    def rollout(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Chain Euler steps; returns the state sequence of length len(U)+1."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        X = np.empty((len(U) + 1, self.d_x))
        X[0] = np.asarray(x0, dtype=float)
        for k, u in enumerate(U):
            X[k + 1] = self.step(X[k], u)
        return X

    def controls_in_bounds(self, U: np.ndarray, tol: float = 0.0) -> bool:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return bool(np.all(U >= self.u_lo - tol) and np.all(U <= self.u_hi + tol))

    def state_in_bounds(self, x: np.ndarray, tol: float = 0.0) -> bool:
        """Non-translational bounds only; translation is the geometry's job."""
        x = np.asarray(x, dtype=float)
        r = x[self.d_w:]
        lo, hi = self.x_lo[self.d_w:], self.x_hi[self.d_w:]
        return bool(np.all(r >= lo - tol) and np.all(r <= hi + tol))

    def sample_state(self, rng: np.random.Generator) -> np.ndarray:
        """Random state: translation in [-2, 2]^2, uniform angles/velocities."""
        x = np.empty(self.d_x)
        x[: self.d_w] = rng.uniform(-2.0, 2.0, self.d_w)
        for i in range(self.d_w, self.d_x):
            if i in self.angular_dims:
                x[i] = wrap_angle(rng.uniform(-np.pi, np.pi))
            else:
                x[i] = rng.uniform(self.x_lo[i], self.x_hi[i])
        return x


@dataclass(frozen=True)
class Unicycle1(SystemModel):
    """First-order unicycle: state [x, y, theta], controls [v, omega]."""

    @property
    def v_max(self) -> float:
        return float(max(abs(self.u_lo[0]), abs(self.u_hi[0])))

    def f(self, x, u):
        v, w = u
        return np.array([v * np.cos(x[2]), v * np.sin(x[2]), w])

    def f_jacobians(self, x, u):
        v = u[0]
        c, s = np.cos(x[2]), np.sin(x[2])
        fx = np.zeros((3, 3))
        fx[0, 2] = -v * s
        fx[1, 2] = v * c
        fu = np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]])
        return fx, fu


@dataclass(frozen=True)
class Unicycle2(SystemModel):
    """Second-order unicycle: state [x, y, theta, v, omega], controls [dv, domega]."""

    @property
    def v_max(self) -> float:
        return float(max(abs(self.x_lo[3]), abs(self.x_hi[3])))

    def f(self, x, u):
        v, w = x[3], x[4]
        return np.array([v * np.cos(x[2]), v * np.sin(x[2]), w, u[0], u[1]])

    def f_jacobians(self, x, u):
        c, s = np.cos(x[2]), np.sin(x[2])
        v = x[3]
        fx = np.zeros((5, 5))
        fx[0, 2] = -v * s
        fx[0, 3] = c
        fx[1, 2] = v * c
        fx[1, 3] = s
        fx[2, 4] = 1.0
        fu = np.zeros((5, 2))
        fu[3, 0] = 1.0
        fu[4, 1] = 1.0
        return fx, fu


@dataclass(frozen=True)
class CarWithTrailer(SystemModel):
    """Car pulling one trailer: state [x, y, theta0, theta1], controls [v, phi].

    theta0 is the car heading, theta1 the trailer heading; the hitch angle
    |wrap(theta0 - theta1)| must stay below pi/4.
    """

    hitch_max: float = np.pi / 4

    @property
    def v_max(self) -> float:
        return float(max(abs(self.u_lo[0]), abs(self.u_hi[0])))

    def f(self, x, u):
        v, phi = u
        L = self.params["L"]
        d1 = self.params["d1"]
        th0, th1 = x[2], x[3]
        return np.array(
            [
                v * np.cos(th0),
                v * np.sin(th0),
                v / L * np.tan(phi),
                v / d1 * np.sin(th0 - th1),
            ]
        )

    def f_jacobians(self, x, u):
        v, phi = u
        L = self.params["L"]
        d1 = self.params["d1"]
        th0, th1 = x[2], x[3]
        c0, s0 = np.cos(th0), np.sin(th0)
        cd = np.cos(th0 - th1)
        fx = np.zeros((4, 4))
        fx[0, 2] = -v * s0
        fx[1, 2] = v * c0
        fx[3, 2] = v / d1 * cd
        fx[3, 3] = -v / d1 * cd
        fu = np.array(
            [
                [c0, 0.0],
                [s0, 0.0],
                [np.tan(phi) / L, v / (L * np.cos(phi) ** 2)],
                [np.sin(th0 - th1) / d1, 0.0],
            ]
        )
        return fx, fu

    def state_in_bounds(self, x, tol: float = 0.0) -> bool:
        if not super().state_in_bounds(x, tol):
            return False
        return bool(abs(wrap_angle(x[2] - x[3])) < self.hitch_max + tol)

    def sample_state(self, rng: np.random.Generator) -> np.ndarray:
        x = super().sample_state(rng)
        # resample theta1 near theta0 so the hitch constraint holds
        x[3] = wrap_angle(x[2] + rng.uniform(-self.hitch_max, self.hitch_max) * 0.95)
        return x


_INF = np.inf

_UNICYCLE1_VARIANTS = {
    # variant: (v_lo, v_hi, w_lo, w_hi)
    "v0": (-0.5, 0.5, -0.5, 0.5),
    "v1": (0.25, 0.5, -0.5, 0.5),
    "v2": (0.25, 0.5, -0.25, 0.5),
}


def make_system(name: str, variant: str = "v0") -> SystemModel:
    """Build one of the supported systems with its published bounds."""
    if name == "unicycle1":
        if variant not in _UNICYCLE1_VARIANTS:
            raise ConfigurationError(f"unknown unicycle1 variant {variant!r}")
        v_lo, v_hi, w_lo, w_hi = _UNICYCLE1_VARIANTS[variant]
        return Unicycle1(
            name=name,
            variant=variant,
            d_x=3,
            d_u=2,
            angular_dims=(2,),
            u_lo=np.array([v_lo, w_lo]),
            u_hi=np.array([v_hi, w_hi]),
            x_lo=np.array([-_INF, -_INF, -_INF]),
            x_hi=np.array([_INF, _INF, _INF]),
        )
    if name == "unicycle2":
        if variant != "v0":
            raise ConfigurationError(f"unknown unicycle2 variant {variant!r}")
        return Unicycle2(
            name=name,
            variant=variant,
            d_x=5,
            d_u=2,
            angular_dims=(2,),
            u_lo=np.array([-0.25, -0.25]),
            u_hi=np.array([0.25, 0.25]),
            x_lo=np.array([-_INF, -_INF, -_INF, -0.5, -0.5]),
            x_hi=np.array([_INF, _INF, _INF, 0.5, 0.5]),
        )
    if name == "car_with_trailer":
        if variant != "v0":
            raise ConfigurationError(f"unknown car_with_trailer variant {variant!r}")
        return CarWithTrailer(
            name=name,
            variant=variant,
            d_x=4,
            d_u=2,
            angular_dims=(2, 3),
            u_lo=np.array([-0.1, -np.pi / 3]),
            u_hi=np.array([0.5, np.pi / 3]),
            x_lo=np.array([-_INF, -_INF, -_INF, -_INF]),
            x_hi=np.array([_INF, _INF, _INF, _INF]),
            params={"L": 0.25, "d1": 0.5},
        )
    raise ConfigurationError(f"unknown system {name!r}")
