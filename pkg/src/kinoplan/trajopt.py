"""k-order-Markov trajectory optimization with augmented-Lagrangian constraints.

Decision variables are the state sequence (plus the steering angle for the
trailer, which is not recoverable from consecutive states); remaining
controls are recovered by finite differences.  Equality constraints encode
the Euler dynamics defect and the start/goal states; inequalities encode
control/state bounds and obstacle clearance.  With the horizon fixed, the
time objective is constant, so a smoothness regularizer (sum of squared
control differences) steers the optimizer inside its nullspace.

The augmented-Lagrangian outer loop (penalty x10 per iteration) wraps a
damped Gauss-Newton inner loop; because every residual couples only a few
consecutive timesteps, the normal equations are banded and solved with a
banded Cholesky factorization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solveh_banded

from .dynamics import CarWithTrailer, SystemModel, Unicycle1, Unicycle2, wrap_angle
from .geometry import Environment, RobotShape, state_valid
from .metric import StateMetric, distance

DYN_TOL = 1e-4  # metric units
BOUND_TOL = 1e-6
GAP_TOL = 1e-4
MIN_BVP_HORIZON = 5
HITCH_OPT_MARGIN = 1e-3


@dataclass
class OptProblem:
    system: SystemModel
    T: int
    x_s: np.ndarray
    x_f: np.ndarray
    X0: np.ndarray  # (T+1, d_x) initial guess
    U0: np.ndarray  # (T, d_u)
    env: Environment | None = None
    shape: RobotShape | None = None
    smooth_weight: float = 1.0
    obstacle_margin: float = 1e-3  # [m]
    mu0: float = 10.0
    mu_growth: float = 10.0
    max_outer: int = 8
    inner_tol: float = 1e-6
    max_inner: int = 60

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.X0) != self.T + 1 or len(self.U0) != self.T:
            raise ValueError("guess lengths must match the horizon")


@dataclass
class OptResult:
    states: np.ndarray
    controls: np.ndarray
    T: int
    converged: bool
    residuals: dict
    iterations: int
    wall_time: float
    violation_history: list[float] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return self.T * self._dt

    _dt: float = 0.1


@dataclass
class FeasibilityReport:
    ok: bool
    dynamics_inf_norm: float  # max per-step metric gap
    bound_violation: float
    collision_free: bool
    n_colliding: int
    start_gap: float
    goal_gap: float

    def as_dict(self) -> dict:
        return {
            "dynamics_inf_norm": self.dynamics_inf_norm,
            "bound_violation": self.bound_violation,
            "collision_violation": self.n_colliding,
            "start_gap": self.start_gap,
            "goal_gap": self.goal_gap,
        }


def feasibility_report(
    system: SystemModel,
    env: Environment | None,
    shape: RobotShape | None,
    X,
    U,
    x_s,
    x_f,
    metric: StateMetric | None = None,
) -> FeasibilityReport:
    """Exact residuals of the full motion-planning constraint set."""
    X = np.asarray(X, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if len(X) != len(U) + 1:
        raise ValueError("need |X| = |U| + 1")
    metric = metric or StateMetric()
    dyn = 0.0
    for k in range(len(U)):
        dyn = max(dyn, distance(metric, system, X[k + 1], system.step(X[k], U[k])))
    bound = 0.0
    if len(U):
        bound = max(
            bound,
            float(np.max(np.maximum(U - system.u_hi, 0.0))),
            float(np.max(np.maximum(system.u_lo - U, 0.0))),
        )
    lo, hi = system.x_lo, system.x_hi
    for x in X:
        finite = np.isfinite(hi)
        if finite.any():
            bound = max(bound, float(np.max(np.maximum((x - hi)[finite], 0.0))))
        finite = np.isfinite(lo)
        if finite.any():
            bound = max(bound, float(np.max(np.maximum((lo - x)[finite], 0.0))))
        if isinstance(system, CarWithTrailer):
            bound = max(bound, abs(wrap_angle(x[2] - x[3])) - system.hitch_max)
    n_bad = 0
    if env is not None and shape is not None:
        n_bad = sum(0 if state_valid(env, shape, system, x) else 1 for x in X)
    start_gap = distance(metric, system, X[0], x_s)
    goal_gap = distance(metric, system, X[-1], x_f)
    ok = (
        dyn <= DYN_TOL
        and bound <= BOUND_TOL
        and n_bad == 0
        and start_gap <= GAP_TOL
        and goal_gap <= GAP_TOL
    )
    return FeasibilityReport(ok, dyn, bound, n_bad == 0, n_bad, start_gap, goal_gap)


def _point_box_sd(points: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Signed distance from points (N,2) to an AABB, with gradients (N,2)."""
    c = (lo + hi) / 2
    h = (hi - lo) / 2
    rel = points - c
    q = np.abs(rel) - h
    qp = np.maximum(q, 0.0)
    out_norm = np.linalg.norm(qp, axis=1)
    outside = out_norm > 0
    sd = np.where(outside, out_norm, q.max(axis=1))
    grad = np.zeros_like(points)
    sgn = np.where(rel >= 0, 1.0, -1.0)
    safe = np.where(outside, out_norm, 1.0)
    grad[outside] = (sgn * qp / safe[:, None])[outside]
    inner = ~outside
    if inner.any():
        arg = np.argmax(q[inner], axis=1)
        rows = np.flatnonzero(inner)
        grad[rows, arg] = sgn[rows, arg]
    return sd, grad


class _Triplets:
    """Accumulates COO entries for one sparse Jacobian."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.m = 0

    def add_rows(self, n_rows: int, rows, cols, vals):
        self.rows.append(np.asarray(rows).ravel() + self.m)
        self.cols.append(np.asarray(cols).ravel())
        self.vals.append(np.asarray(vals, dtype=float).ravel())
        self.m += n_rows

    def matrix(self, n: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((0, n))
        return sp.csr_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.m, n),
        )


class _NullTriplets(_Triplets):
    """Counts rows but drops entries (residual-only evaluation)."""

    def add_rows(self, n_rows: int, rows, cols, vals):
        self.m += n_rows

    def matrix(self, n: int):
        return None


class _Transcription:
    """System-specific residuals/Jacobians over the decision vector."""

    n_phi = 0  # extra per-step decision controls (trailer steering)

    def __init__(self, problem: OptProblem):
        self.p = problem
        self.sys = problem.system
        self.T = problem.T
        self.dt = self.sys.dt
        self.d_x = self.sys.d_x
        self.stride = self.d_x + self.n_phi
        self.n = self.stride * self.T + self.d_x

    # --- layout -----------------------------------------------------------
    def xi(self, k, d=0):
        """Flat index of state component d at step k (vectorizable)."""
        return np.asarray(k) * self.stride + d

    def pack(self, X, U) -> np.ndarray:
        X = np.array(X, dtype=float)
        for i in self.sys.angular_dims:
            X[:, i] = np.unwrap(X[:, i])
        z = np.zeros(self.n)
        for d in range(self.d_x):
            z[self.xi(np.arange(self.T + 1), d)] = X[:, d]
        return z

    def states(self, z) -> np.ndarray:
        X = np.empty((self.T + 1, self.d_x))
        for d in range(self.d_x):
            X[:, d] = z[self.xi(np.arange(self.T + 1), d)]
        return X

    def controls(self, z) -> np.ndarray:
        raise NotImplementedError

    # control linearization: per control dim, (T, K) column/value arrays
    def control_jacobian(self, z):
        raise NotImplementedError

    def dynamics_residuals(self, z):
        raise NotImplementedError

    def extra_state_bounds(self, z, tri: _Triplets, gs: list):
        """System-specific state inequality rows (velocity bounds, hitch)."""

    # --- residual groups ----------------------------------------------------
    def eq(self, z, jac: bool = True):
        tri = _Triplets() if jac else _NullTriplets()
        vals = []
        X = self.states(z)
        for target, k in ((self.p.x_s, 0), (self.p.x_f, self.T)):
            r = X[k] - target
            for i in self.sys.angular_dims:
                r[i] = wrap_angle(r[i])
            vals.append(r)
            tri.add_rows(
                self.d_x,
                np.arange(self.d_x),
                self.xi(k, np.arange(self.d_x)),
                np.ones(self.d_x),
            )
        dyn_vals = self.dynamics_residuals_with_jac(z, tri)
        vals.append(dyn_vals)
        return np.concatenate(vals), tri.matrix(self.n)

    def dynamics_residuals_with_jac(self, z, tri):
        raise NotImplementedError

    def ineq(self, z, jac: bool = True):
        tri = _Triplets() if jac else _NullTriplets()
        gs: list[np.ndarray] = []
        U = self.controls(z)
        cols, valsj = self.control_jacobian(z)
        T = self.T
        for c in range(self.sys.d_u):
            K = cols[c].shape[1]
            # u - u_hi <= 0
            gs.append(U[:, c] - self.sys.u_hi[c])
            tri.add_rows(T, np.repeat(np.arange(T), K), cols[c], valsj[c])
            # u_lo - u <= 0
            gs.append(self.sys.u_lo[c] - U[:, c])
            tri.add_rows(T, np.repeat(np.arange(T), K), cols[c], -valsj[c])
        self.extra_state_bounds(z, tri, gs)
        self.obstacle_rows(z, tri, gs)
        g = np.concatenate(gs) if gs else np.zeros(0)
        return g, tri.matrix(self.n)

    def body_centers(self, X, body):
        centers = X[:, :2].copy()
        grads = []  # list of (state_dim, dcenter (T+1, 2)) pairs beyond identity
        if body.hitch_dist != 0.0:
            a = X[:, body.hitch_angle_dim]
            centers -= body.hitch_dist * np.stack([np.cos(a), np.sin(a)], axis=1)
            dcda = body.hitch_dist * np.stack([np.sin(a), -np.cos(a)], axis=1)
            grads.append((body.hitch_angle_dim, dcda))
        return centers, grads

    def obstacle_rows(self, z, tri: _Triplets, gs: list):
        env, shape = self.p.env, self.p.shape
        if env is None or shape is None or not env.obstacles:
            return
        X = self.states(z)
        ks = np.arange(self.T + 1)
        for body in shape.bodies:
            radius = 0.5 * float(np.hypot(body.length, body.width))
            clearance = radius + self.p.obstacle_margin
            centers, extra = self.body_centers(X, body)
            for box in env.obstacles:
                sd, grad = _point_box_sd(centers, box.lo, box.hi)
                gs.append(clearance - sd)
                rows = [np.repeat(ks, 2)]
                ccols = [np.stack([self.xi(ks, 0), self.xi(ks, 1)], axis=1)]
                cvals = [-grad]
                for dim, dcda in extra:
                    rows.append(ks)
                    ccols.append(self.xi(ks, dim)[:, None])
                    cvals.append(-np.sum(grad * dcda, axis=1, keepdims=True))
                tri.add_rows(
                    self.T + 1,
                    np.concatenate([r.ravel() for r in rows]),
                    np.concatenate([c.ravel() for c in ccols]),
                    np.concatenate([v.ravel() for v in cvals]),
                )

    def obj(self, z, jac: bool = True):
        """Smoothness residuals sqrt(w) * (u_{k+1} - u_k)."""
        tri = _Triplets() if jac else _NullTriplets()
        if self.T < 2 or self.p.smooth_weight == 0.0:
            return np.zeros(0), tri.matrix(self.n)
        w = np.sqrt(self.p.smooth_weight)
        U = self.controls(z)
        cols, valsj = self.control_jacobian(z)
        vals = []
        for c in range(self.sys.d_u):
            K = cols[c].shape[1]
            vals.append(w * (U[1:, c] - U[:-1, c]))
            rows = np.repeat(np.arange(self.T - 1), 2 * K)
            cc = np.hstack([cols[c][:-1], cols[c][1:]])
            vv = np.hstack([-valsj[c][:-1], valsj[c][1:]]) * w
            tri.add_rows(self.T - 1, rows, cc, vv)
        return np.concatenate(vals), tri.matrix(self.n)


class _Unicycle1T(_Transcription):
    def _geom(self, z):
        X = self.states(z)
        th = X[:-1, 2]
        c, s = np.cos(th), np.sin(th)
        dp = X[1:, :2] - X[:-1, :2]
        fwd = (dp[:, 0] * c + dp[:, 1] * s) / self.dt  # v_k
        lat = (-dp[:, 0] * s + dp[:, 1] * c) / self.dt
        return X, c, s, dp, fwd, lat

    def controls(self, z):
        X, c, s, dp, fwd, lat = self._geom(z)
        w = (X[1:, 2] - X[:-1, 2]) / self.dt
        return np.stack([fwd, w], axis=1)

    def control_jacobian(self, z):
        X, c, s, dp, fwd, lat = self._geom(z)
        ks = np.arange(self.T)
        # v_k: px_k, py_k, px_{k+1}, py_{k+1}, th_k
        vcols = np.stack(
            [self.xi(ks, 0), self.xi(ks, 1), self.xi(ks + 1, 0), self.xi(ks + 1, 1), self.xi(ks, 2)],
            axis=1,
        )
        vvals = np.stack([-c, -s, c, s, lat * self.dt], axis=1) / self.dt
        # w_k: th_k, th_{k+1}
        wcols = np.stack([self.xi(ks, 2), self.xi(ks + 1, 2)], axis=1)
        wvals = np.tile(np.array([-1.0, 1.0]) / self.dt, (self.T, 1))
        return {0: vcols, 1: wcols}, {0: vvals, 1: wvals}

    def dynamics_residuals_with_jac(self, z, tri):
        X, c, s, dp, fwd, lat = self._geom(z)
        ks = np.arange(self.T)
        cols = np.stack(
            [self.xi(ks, 0), self.xi(ks, 1), self.xi(ks + 1, 0), self.xi(ks + 1, 1), self.xi(ks, 2)],
            axis=1,
        )
        vals = np.stack([s, -c, -s, c, -fwd * self.dt], axis=1) / self.dt
        tri.add_rows(self.T, np.repeat(ks, 5), cols, vals)
        return lat


class _Unicycle2T(_Transcription):
    def controls(self, z):
        X = self.states(z)
        return (X[1:, 3:5] - X[:-1, 3:5]) / self.dt

    def control_jacobian(self, z):
        ks = np.arange(self.T)
        out_c, out_v = {}, {}
        for c, dim in ((0, 3), (1, 4)):
            out_c[c] = np.stack([self.xi(ks, dim), self.xi(ks + 1, dim)], axis=1)
            out_v[c] = np.tile(np.array([-1.0, 1.0]) / self.dt, (self.T, 1))
        return out_c, out_v

    def dynamics_residuals_with_jac(self, z, tri):
        X = self.states(z)
        th, v = X[:-1, 2], X[:-1, 3]
        c, s = np.cos(th), np.sin(th)
        dp = X[1:, :2] - X[:-1, :2]
        ks = np.arange(self.T)
        # rows per step: dp/dt - v*(cos, sin), dth/dt - w
        r1 = dp[:, 0] / self.dt - v * c
        r2 = dp[:, 1] / self.dt - v * s
        r3 = (X[1:, 2] - X[:-1, 2]) / self.dt - X[:-1, 4]
        c1 = np.stack([self.xi(ks, 0), self.xi(ks + 1, 0), self.xi(ks, 2), self.xi(ks, 3)], axis=1)
        v1 = np.stack([-np.full(self.T, 1 / self.dt), np.full(self.T, 1 / self.dt), v * s, -c], axis=1)
        c2 = np.stack([self.xi(ks, 1), self.xi(ks + 1, 1), self.xi(ks, 2), self.xi(ks, 3)], axis=1)
        v2 = np.stack([-np.full(self.T, 1 / self.dt), np.full(self.T, 1 / self.dt), -v * c, -s], axis=1)
        c3 = np.stack([self.xi(ks, 2), self.xi(ks + 1, 2), self.xi(ks, 4)], axis=1)
        v3 = np.tile(np.array([-1 / self.dt, 1 / self.dt, -1.0]), (self.T, 1))
        tri.add_rows(
            3 * self.T,
            np.concatenate([np.repeat(3 * ks, 4), np.repeat(3 * ks + 1, 4), np.repeat(3 * ks + 2, 3)]),
            np.concatenate([c1.ravel(), c2.ravel(), c3.ravel()]),
            np.concatenate([v1.ravel(), v2.ravel(), v3.ravel()]),
        )
        out = np.empty(3 * self.T)
        out[3 * ks], out[3 * ks + 1], out[3 * ks + 2] = r1, r2, r3
        return out

    def extra_state_bounds(self, z, tri, gs):
        ks = np.arange(self.T + 1)
        for dim in (3, 4):
            for sign, bound in ((1.0, self.sys.x_hi[dim]), (-1.0, -self.sys.x_lo[dim])):
                gs.append(sign * z[self.xi(ks, dim)] - bound)
                tri.add_rows(self.T + 1, ks, self.xi(ks, dim), np.full(self.T + 1, sign))


class _TrailerT(_Transcription):
    n_phi = 1

    def phi_index(self, k):
        return np.asarray(k) * self.stride + self.d_x

    def pack(self, X, U):
        z = super().pack(X, U)
        U = np.atleast_2d(np.asarray(U, dtype=float))
        z[self.phi_index(np.arange(self.T))] = np.clip(
            U[:, 1], self.sys.u_lo[1], self.sys.u_hi[1]
        )
        return z

    def _geom(self, z):
        X = self.states(z)
        th0 = X[:-1, 2]
        c, s = np.cos(th0), np.sin(th0)
        dp = X[1:, :2] - X[:-1, :2]
        fwd = (dp[:, 0] * c + dp[:, 1] * s) / self.dt
        lat = (-dp[:, 0] * s + dp[:, 1] * c) / self.dt
        phi = z[self.phi_index(np.arange(self.T))]
        return X, c, s, dp, fwd, lat, phi

    def controls(self, z):
        X, c, s, dp, fwd, lat, phi = self._geom(z)
        return np.stack([fwd, phi], axis=1)

    def control_jacobian(self, z):
        X, c, s, dp, fwd, lat, phi = self._geom(z)
        ks = np.arange(self.T)
        vcols = np.stack(
            [self.xi(ks, 0), self.xi(ks, 1), self.xi(ks + 1, 0), self.xi(ks + 1, 1), self.xi(ks, 2)],
            axis=1,
        )
        vvals = np.stack([-c, -s, c, s, lat * self.dt], axis=1) / self.dt
        pcols = self.phi_index(ks)[:, None]
        pvals = np.ones((self.T, 1))
        return {0: vcols, 1: pcols}, {0: vvals, 1: pvals}

    def dynamics_residuals_with_jac(self, z, tri):
        L = self.sys.params["L"]
        d1 = self.sys.params["d1"]
        X, c, s, dp, fwd, lat, phi = self._geom(z)
        th0, th1 = X[:-1, 2], X[:-1, 3]
        tanp = np.tan(phi)
        sec2 = 1.0 / np.cos(phi) ** 2
        sd = np.sin(th0 - th1)
        cd = np.cos(th0 - th1)
        ks = np.arange(self.T)
        r1 = lat
        r2 = (X[1:, 2] - X[:-1, 2]) / self.dt - fwd / L * tanp
        r3 = (X[1:, 3] - X[:-1, 3]) / self.dt - fwd / d1 * sd
        # dv/d(px_k, py_k, px_k+1, py_k+1, th0_k)
        dv = np.stack([-c / self.dt, -s / self.dt, c / self.dt, s / self.dt, lat], axis=1)
        vcols = np.stack(
            [self.xi(ks, 0), self.xi(ks, 1), self.xi(ks + 1, 0), self.xi(ks + 1, 1), self.xi(ks, 2)],
            axis=1,
        )
        # r1
        c1 = np.hstack([vcols[:, :4], self.xi(ks, 2)[:, None]])
        v1 = np.stack([s / self.dt, -c / self.dt, -s / self.dt, c / self.dt, -fwd], axis=1)
        # r2 = dth0/dt - v tanp / L
        scale2 = (tanp / L)[:, None]
        c2 = np.hstack([vcols, self.xi(ks + 1, 2)[:, None], self.phi_index(ks)[:, None]])
        v2 = np.hstack(
            [
                -scale2 * dv,
                np.zeros((self.T, 2)),
            ]
        )
        v2[:, 4] += -1.0 / self.dt  # dth0_k from the difference term
        v2[:, 5] = 1.0 / self.dt
        v2[:, 6] = -fwd / L * sec2
        # r3 = dth1/dt - v sd / d1
        scale3 = (sd / d1)[:, None]
        c3 = np.hstack(
            [vcols, self.xi(ks, 3)[:, None], self.xi(ks + 1, 3)[:, None]]
        )
        v3 = np.hstack([-scale3 * dv, np.zeros((self.T, 2))])
        v3[:, 4] += -fwd / d1 * cd  # dth0_k via sin(th0-th1)
        v3[:, 5] = -1.0 / self.dt + fwd / d1 * cd
        v3[:, 6] = 1.0 / self.dt
        tri.add_rows(
            3 * self.T,
            np.concatenate([np.repeat(3 * ks, 5), np.repeat(3 * ks + 1, 7), np.repeat(3 * ks + 2, 7)]),
            np.concatenate([c1.ravel(), c2.ravel(), c3.ravel()]),
            np.concatenate([v1.ravel(), v2.ravel(), v3.ravel()]),
        )
        out = np.empty(3 * self.T)
        out[3 * ks], out[3 * ks + 1], out[3 * ks + 2] = r1, r2, r3
        return out

    def extra_state_bounds(self, z, tri, gs):
        ks = np.arange(self.T + 1)
        hitch = wrap_angle(z[self.xi(ks, 2)] - z[self.xi(ks, 3)])
        limit = self.sys.hitch_max - HITCH_OPT_MARGIN
        for sign in (1.0, -1.0):
            gs.append(sign * hitch - limit)
            tri.add_rows(
                self.T + 1,
                np.repeat(ks, 2),
                np.stack([self.xi(ks, 2), self.xi(ks, 3)], axis=1),
                np.tile(np.array([sign, -sign]), (self.T + 1, 1)),
            )


def _transcription(problem: OptProblem) -> _Transcription:
    if isinstance(problem.system, Unicycle1):
        return _Unicycle1T(problem)
    if isinstance(problem.system, Unicycle2):
        return _Unicycle2T(problem)
    if isinstance(problem.system, CarWithTrailer):
        return _TrailerT(problem)
    raise ValueError(f"no transcription for system {problem.system.name!r}")


def _banded_solve(H: sp.coo_matrix, nu: float, rhs: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    mask = H.row <= H.col
    rows, cols, vals = H.row[mask], H.col[mask], H.data[mask]
    bw = int(np.max(cols - rows)) if len(rows) else 0
    ab = np.zeros((bw + 1, n))
    np.add.at(ab, (bw - (cols - rows), cols), vals)
    ab[bw] += nu
    return solveh_banded(ab, rhs, lower=False)


def optimize_fixed_T(problem: OptProblem, deadline: float | None = None) -> OptResult:
    """Augmented-Lagrangian solve at a fixed horizon.

    Non-convergence is reported through the result, never raised.
    """
    t0 = time.perf_counter()
    tr = _transcription(problem)
    z = tr.pack(problem.X0, problem.U0)
    h0, _ = tr.eq(z)
    g0, _ = tr.ineq(z)
    lam = np.zeros(len(h0))
    sig = np.zeros(len(g0))
    mu = problem.mu0
    total_inner = 0
    history: list[float] = []

    def al_residuals(zv, jac: bool):
        r_o, J_o = tr.obj(zv, jac)
        h, J_h = tr.eq(zv, jac)
        g, J_g = tr.ineq(zv, jac)
        sm = np.sqrt(mu)
        shifted = g + sig / mu
        act = shifted > 0
        r = np.concatenate([r_o, sm * (h + lam / mu), sm * np.where(act, shifted, 0.0)])
        if not jac:
            return r, None, h, g
        J_g_act = sp.diags(act.astype(float)) @ J_g
        J = sp.vstack([J_o, sm * J_h, sm * J_g_act], format="csr")
        return r, J, h, g

    h = g = None
    for outer in range(problem.max_outer):
        nu = 1e-8
        for _ in range(problem.max_inner):
            total_inner += 1
            r, J, h, g = al_residuals(z, jac=True)
            F = 0.5 * float(r @ r)
            grad = J.T @ r
            if np.max(np.abs(grad)) < problem.inner_tol:
                break
            H = (J.T @ J).tocoo()
            accepted = False
            dz = None
            while nu < 1e14:
                try:
                    dz = _banded_solve(H, nu, -grad)
                except np.linalg.LinAlgError:
                    nu *= 10
                    continue
                r_try = al_residuals(z + dz, jac=False)[0]
                F_try = 0.5 * float(r_try @ r_try)
                if F_try < F:
                    z = z + dz
                    nu = max(nu / 3.0, 1e-10)
                    accepted = True
                    break
                nu *= 4.0
            if not accepted or np.max(np.abs(dz)) < 1e-12:
                break
            if deadline is not None and time.perf_counter() > deadline:
                break
        _, _, h, g = al_residuals(z, jac=False)
        viol = 0.0
        if len(h):
            viol = max(viol, float(np.max(np.abs(h))))
        if len(g):
            viol = max(viol, float(np.max(np.maximum(g, 0.0))))
        history.append(viol)
        if viol < 1e-9:
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
        if len(history) >= 3 and viol > 1e-3:
            # essentially flat for two outer rounds: infeasible or stuck
            if viol > 0.9 * history[-2] and history[-2] > 0.9 * history[-3]:
                break
        lam = lam + mu * h
        sig = np.maximum(0.0, sig + mu * g)
        mu *= problem.mu_growth

    X = tr.states(z)
    for i in problem.system.angular_dims:
        X[:, i] = wrap_angle(X[:, i])
    U = tr.controls(z)
    report = feasibility_report(
        problem.system, problem.env, problem.shape, X, U, problem.x_s, problem.x_f
    )
    res = OptResult(
        states=X,
        controls=U,
        T=problem.T,
        converged=report.ok,
        residuals=report.as_dict(),
        iterations=total_inner,
        wall_time=time.perf_counter() - t0,
        violation_history=history,
    )
    res._dt = problem.system.dt
    return res


def resample_guess(system: SystemModel, X, U, T_new: int):
    """Linearly re-time a guess trajectory to a different horizon."""
    X = np.array(X, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    for i in system.angular_dims:
        X[:, i] = np.unwrap(X[:, i])
    T_old = len(U)
    src = np.linspace(0.0, T_old, T_new + 1)
    Xn = np.stack([np.interp(src, np.arange(T_old + 1), X[:, d]) for d in range(system.d_x)], axis=1)
    idx = np.minimum((src[:-1]).astype(int), max(T_old - 1, 0))
    Un = U[idx] if T_old > 0 else np.zeros((T_new, system.d_u))
    return Xn, Un


def optimize_with_time_search(
    problem: OptProblem,
    T_d: int,
    factors=(0.8, 1.0, 1.2),
    deadline: float | None = None,
    return_last: bool = False,
):
    """Try horizons around the guess horizon; return the shortest converged one.

    With return_last, returns (converged-or-None, last-attempt) so callers can
    harvest partial progress from failed repairs.
    """
    if T_d < 2:
        raise ValueError("T_d must be >= 2")
    candidates = sorted({max(1, round(f * T_d)) for f in factors})
    last: OptResult | None = None
    for T in candidates:
        X0, U0 = resample_guess(problem.system, problem.X0, problem.U0, T)
        sub = OptProblem(
            system=problem.system,
            T=T,
            x_s=problem.x_s,
            x_f=problem.x_f,
            X0=X0,
            U0=U0,
            env=problem.env,
            shape=problem.shape,
            smooth_weight=problem.smooth_weight,
            obstacle_margin=problem.obstacle_margin,
            mu0=problem.mu0,
            mu_growth=problem.mu_growth,
            max_outer=problem.max_outer,
            inner_tol=problem.inner_tol,
            max_inner=problem.max_inner,
        )
        res = optimize_fixed_T(sub, deadline=deadline)
        last = res
        if res.converged:
            return (res, res) if return_last else res
        if deadline is not None and time.perf_counter() > deadline:
            break
    return (None, last) if return_last else None


def _interp_guess(system: SystemModel, x_s, x_f, T: int):
    frac = np.linspace(0.0, 1.0, T + 1)[:, None]
    x_s = np.asarray(x_s, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    delta = x_f - x_s
    X = x_s + frac * delta
    for i in system.angular_dims:
        X[:, i] = x_s[i] + frac[:, 0] * wrap_angle(x_f[i] - x_s[i])
    U = np.clip(np.zeros((T, system.d_u)), system.u_lo, system.u_hi)
    return X, U


def _steer_control(system: SystemModel, x, x_f) -> np.ndarray:
    """Bounded move-to-pose feedback control (guess generation only)."""
    dp = x_f[:2] - x[:2]
    rho = float(np.hypot(*dp))
    th = x[2]
    if rho > 0.15:
        alpha = wrap_angle(np.arctan2(dp[1], dp[0]) - th)
        v_des = 2.0 * rho * np.cos(alpha)
        w_des = 2.0 * alpha
    else:
        v_des = 2.0 * rho
        w_des = 2.0 * wrap_angle(x_f[2] - th)
    if isinstance(system, Unicycle2):
        u = np.array([4.0 * (v_des - x[3]), 4.0 * (w_des - x[4])])
    elif isinstance(system, CarWithTrailer):
        v = np.clip(v_des, system.u_lo[0], system.u_hi[0])
        L = system.params["L"]
        phi = np.arctan2(w_des * L, max(abs(v), 0.05) * np.sign(v) or 1.0)
        u = np.array([v, phi])
    else:
        u = np.array([v_des, w_des])
    return np.clip(u, system.u_lo, system.u_hi)


def _rollout_guess(system: SystemModel, x_s, x_f, T: int):
    """Dynamics-exact guess from a closed-loop rollout toward the goal."""
    X = np.empty((T + 1, system.d_x))
    U = np.empty((T, system.d_u))
    X[0] = x_s
    for k in range(T):
        U[k] = _steer_control(system, X[k], x_f)
        X[k + 1] = system.step(X[k], U[k])
    return X, U


def solve_bvp(
    system: SystemModel, x_s, x_f, t_max: int, deadline: float | None = None
) -> OptResult | None:
    """Minimal-horizon free-space BVP via exponential + binary search over T."""
    if t_max < MIN_BVP_HORIZON:
        raise ValueError(f"t_max must be >= {MIN_BVP_HORIZON}")

    def attempt(T: int) -> OptResult:
        guesses = [_rollout_guess(system, np.asarray(x_s, float), np.asarray(x_f, float), T)]
        guesses.append(_interp_guess(system, x_s, x_f, T))
        res = None
        for X0, U0 in guesses:
            res = optimize_fixed_T(
                OptProblem(system=system, T=T, x_s=np.asarray(x_s, float),
                           x_f=np.asarray(x_f, float), X0=X0, U0=U0),
                deadline=deadline,
            )
            if res.converged:
                return res
            if deadline is not None and time.perf_counter() > deadline:
                break
        return res

    last_fail = 0
    best: OptResult | None = None
    T = 4
    while T <= t_max:
        res = attempt(T)
        if res.converged:
            best = res
            break
        last_fail = T
        if T == t_max:
            return None
        T = min(2 * T, t_max)
        if deadline is not None and time.perf_counter() > deadline:
            return None
    if best is None:
        return None
    lo = max(last_fail, MIN_BVP_HORIZON - 1)
    hi = best.T
    while hi - lo > 1:
        mid = (lo + hi) // 2
        res = attempt(mid)
        if res.converged:
            best, hi = res, mid
        else:
            lo = mid
        if deadline is not None and time.perf_counter() > deadline:
            break
    if best.T < MIN_BVP_HORIZON:
        res = attempt(MIN_BVP_HORIZON)
        if res.converged:
            return res
        return None
    return best
