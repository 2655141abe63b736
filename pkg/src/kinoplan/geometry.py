"""Workspace bounds, box obstacles, robot footprints, and collision checking.

Obstacles are axis-aligned boxes.  Robot bodies are oriented rectangles posed
from the state; overlap uses a separating-axis test.  Whole-motion checks go
through a swept-AABB broadphase before falling back to per-state tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemModel


@dataclass(frozen=True)
class Box:
    center: np.ndarray  # (2,) [m]
    half: np.ndarray  # half-extents (2,) [m]

    def __post_init__(self):
        if not np.all(self.half > 0):
            raise ValueError("obstacle half-extents must be positive")
        self.center.setflags(write=False)
        self.half.setflags(write=False)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half


@dataclass(frozen=True)
class Environment:
    lo: np.ndarray  # workspace min corner (2,)
    hi: np.ndarray  # workspace max corner (2,)
    obstacles: tuple[Box, ...] = ()

    def __post_init__(self):
        if not np.all(self.lo < self.hi):
            raise ValueError("workspace bounds must satisfy min < max componentwise")
        self.lo.setflags(write=False)
        self.hi.setflags(write=False)


@dataclass(frozen=True)
class BodyRect:
    """One rectangular robot body posed from the state.

    The rectangle is centered hitch_dist behind the translation along the
    heading x[hitch_angle_dim] (0 for bodies centered on the translation) and
    oriented by x[angle_dim].
    """

    length: float  # along heading [m]
    width: float  # across heading [m]
    angle_dim: int
    hitch_dist: float = 0.0
    hitch_angle_dim: int = 0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("body dimensions must be positive")

    def pose(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """(center, angle) of this body for state x."""
        c = np.array(x[:2], dtype=float)
        if self.hitch_dist != 0.0:
            a = x[self.hitch_angle_dim]
            c -= self.hitch_dist * np.array([np.cos(a), np.sin(a)])
        return c, float(x[self.angle_dim])

    @property
    def reach(self) -> float:
        """Max distance of any body point from the translation."""
        return self.hitch_dist + 0.5 * float(np.hypot(self.length, self.width))


@dataclass(frozen=True)
class RobotShape:
    bodies: tuple[BodyRect, ...]

    @property
    def reach(self) -> float:
        return max(b.reach for b in self.bodies)


def default_shape(system: SystemModel) -> RobotShape:
    """Footprint used when a scenario does not override it."""
    if system.name in ("unicycle1", "unicycle2"):
        return RobotShape((BodyRect(0.5, 0.25, angle_dim=2),))
    if system.name == "car_with_trailer":
        d1 = system.params["d1"]
        return RobotShape(
            (
                BodyRect(0.25, 0.25, angle_dim=2),
                BodyRect(0.3, 0.25, angle_dim=3, hitch_dist=d1, hitch_angle_dim=3),
            )
        )
    raise ValueError(f"no default footprint for system {system.name!r}")


def _rect_corners(center: np.ndarray, angle: float, length: float, width: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    ax = np.array([c, s]) * (length / 2)
    ay = np.array([-s, c]) * (width / 2)
    return np.array([center + ax + ay, center + ax - ay, center - ax - ay, center - ax + ay])


def rect_box_overlap(center: np.ndarray, angle: float, length: float, width: float, box: Box) -> bool:
    """Separating-axis test between an oriented rectangle and an AABB."""
    corners = _rect_corners(center, angle, length, width)
    # world axes: project the rectangle, compare against the box interval
    for i in range(2):
        if corners[:, i].max() < box.lo[i] or corners[:, i].min() > box.hi[i]:
            return False
    # rectangle axes: project the box corners
    c, s = np.cos(angle), np.sin(angle)
    box_corners = np.array(
        [
            [box.lo[0], box.lo[1]],
            [box.lo[0], box.hi[1]],
            [box.hi[0], box.lo[1]],
            [box.hi[0], box.hi[1]],
        ]
    )
    for axis, half in (((c, s), length / 2), ((-s, c), width / 2)):
        axis = np.asarray(axis)
        mid = float(center @ axis)
        proj = box_corners @ axis
        if proj.max() < mid - half or proj.min() > mid + half:
            return False
    return True


def state_valid(env: Environment, shape: RobotShape, system: SystemModel, x: np.ndarray) -> bool:
    """Translation inside bounds, no body/obstacle overlap, state bounds hold.

    Only the translational part is bound-limited; bodies may poke outside the
    workspace box.
    """
    t = x[: system.d_w]
    if np.any(t < env.lo) or np.any(t > env.hi):
        return False
    if not system.state_in_bounds(x):
        return False
    for body in shape.bodies:
        center, angle = body.pose(x)
        for box in env.obstacles:
            if rect_box_overlap(center, angle, body.length, body.width, box):
                return False
    return True


def _aabb_overlap(lo1, hi1, lo2, hi2) -> bool:
    return bool(np.all(lo1 <= hi2) and np.all(lo2 <= hi1))


def motion_valid(
    env: Environment,
    shape: RobotShape,
    system: SystemModel,
    primitive,
    offset: np.ndarray,
    use_broadphase: bool = True,
) -> bool:
    """True iff every state of the primitive translated by offset is valid.

    Broadphase: the primitive caches the AABB of its translations; padding it
    by the footprint reach bounds every body point, so obstacles that miss the
    padded box cannot collide and a translation AABB inside the workspace box
    means every translation is inside.
    """
    offset = np.asarray(offset, dtype=float)
    t_lo = primitive.t_lo + offset
    t_hi = primitive.t_hi + offset
    pad = shape.reach
    if use_broadphase:
        candidates = [
            b for b in env.obstacles if _aabb_overlap(t_lo - pad, t_hi + pad, b.lo, b.hi)
        ]
        in_bounds = bool(np.all(t_lo >= env.lo) and np.all(t_hi <= env.hi))
        if in_bounds and not candidates and primitive.rotor_ok:
            return True
    else:
        candidates = list(env.obstacles)
        in_bounds = False

    shift = np.zeros(system.d_x)
    shift[: system.d_w] = offset
    for xs in primitive.states:
        x = xs + shift
        t = x[: system.d_w]
        if not in_bounds and (np.any(t < env.lo) or np.any(t > env.hi)):
            return False
        if not system.state_in_bounds(x):
            return False
        for body in shape.bodies:
            center, angle = body.pose(x)
            for box in candidates:
                if rect_box_overlap(center, angle, body.length, body.width, box):
                    return False
    return True
