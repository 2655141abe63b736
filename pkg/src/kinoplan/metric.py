"""Weighted state-space metric and radius-query nearest-neighbor indices.

The distance is a weighted sum of the translation 2-norm, wrapped absolute
angle differences, and the velocity 2-norm; it satisfies the metric axioms,
so k-d-tree pruning is sound.  Angles are embedded as scaled (cos, sin)
pairs for the tree: the embedded Euclidean distance never exceeds the true
metric (chord <= arc, 2-norm <= sum of group norms), so a radius query on the
embedding yields a candidate superset that is then filtered exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import SystemModel, wrap_angle

_MIN_TAIL_FOR_REBUILD = 64


@dataclass(frozen=True)
class StateMetric:
    translation_weight: float = 1.0
    angle_weight: float = 0.5
    velocity_weight: float = 0.25

    def __post_init__(self):
        w = (self.translation_weight, self.angle_weight, self.velocity_weight)
        if any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValueError("metric weights must be nonnegative with at least one positive")


def _component_dims(system: SystemModel):
    trans = list(range(system.d_w))
    ang = list(system.angular_dims)
    vel = [i for i in range(system.d_x) if i not in trans and i not in ang]
    return trans, ang, vel


def distance(metric: StateMetric, system: SystemModel, x1, x2) -> float:
    """Weighted translation/angle/velocity distance between two states."""
    return float(distance_many(metric, system, x1, np.asarray(x2, dtype=float)[None, :])[0])


def distance_many(metric: StateMetric, system: SystemModel, x, points: np.ndarray) -> np.ndarray:
    """Vectorized distance from one state to each row of points."""
    x = np.asarray(x, dtype=float)
    points = np.asarray(points, dtype=float)
    trans, ang, vel = _component_dims(system)
    d = metric.translation_weight * np.linalg.norm(points[:, trans] - x[trans], axis=1)
    if ang:
        d = d + metric.angle_weight * np.sum(
            np.abs(wrap_angle(points[:, ang] - x[ang])), axis=1
        )
    if vel:
        d = d + metric.velocity_weight * np.linalg.norm(points[:, vel] - x[vel], axis=1)
    return d


def embed(metric: StateMetric, system: SystemModel, points: np.ndarray) -> np.ndarray:
    """Euclidean embedding that lower-bounds the metric (for tree pruning)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    trans, ang, vel = _component_dims(system)
    cols = [metric.translation_weight * points[:, trans]]
    for i in ang:
        cols.append(metric.angle_weight * np.cos(points[:, i:i + 1]))
        cols.append(metric.angle_weight * np.sin(points[:, i:i + 1]))
    if vel:
        cols.append(metric.velocity_weight * points[:, vel])
    return np.hstack(cols)


class NNIndex:
    """Incremental radius-query index over states under the weighted metric.

    Inserts go to a linear-scanned tail; the k-d tree over the embedded points
    is rebuilt once the tail outgrows the tree (amortized rebuild).  In
    "rotational" mode the translation of every stored/query point is zeroed,
    matching an index over motion-primitive start states.
    """

    def __init__(self, system: SystemModel, metric: StateMetric, mode: str = "full"):
        if mode not in ("full", "rotational"):
            raise ValueError(f"unknown index mode {mode!r}")
        self.system = system
        self.metric = metric
        self.mode = mode
        self._points = np.empty((0, system.d_x))
        self._n = 0
        self.payloads: list = []
        self._tree: cKDTree | None = None
        self._tree_n = 0

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._points[: self._n]

    def _canon(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        if self.mode == "rotational":
            x[: self.system.d_w] = 0.0
        return x

    def add(self, x, payload=None) -> int:
        """Insert a state; returns its index. Duplicates are kept."""
        x = self._canon(x)
        if self._n == len(self._points):
            cap = max(64, 2 * len(self._points))
            grown = np.empty((cap, self.system.d_x))
            grown[: self._n] = self._points[: self._n]
            self._points = grown
        self._points[self._n] = x
        self.payloads.append(payload)
        self._n += 1
        if self._n - self._tree_n > max(_MIN_TAIL_FOR_REBUILD, self._tree_n):
            self._rebuild()
        return self._n - 1

    def add_many(self, points, payloads=None) -> None:
        payloads = payloads if payloads is not None else [None] * len(points)
        for x, p in zip(points, payloads):
            self.add(x, p)

    def _rebuild(self) -> None:
        self._tree = cKDTree(embed(self.metric, self.system, self._points[: self._n]))
        self._tree_n = self._n

    def query_radius(self, x, r: float) -> list[tuple[int, float]]:
        """All stored entries within metric distance r, as (index, distance)."""
        if r < 0:
            raise ValueError("radius must be nonnegative")
        if self._n == 0:
            return []
        x = self._canon(x)
        if self._tree is not None:
            cand = self._tree.query_ball_point(embed(self.metric, self.system, x)[0], r)
            cand = np.fromiter(cand, dtype=int, count=len(cand))
        else:
            cand = np.arange(0)
        tail = np.arange(self._tree_n, self._n)
        idx = np.concatenate([cand, tail])
        if len(idx) == 0:
            return []
        d = distance_many(self.metric, self.system, x, self._points[idx])
        keep = d <= r
        out = sorted(zip(idx[keep].tolist(), d[keep].tolist()))
        return out

    def kth_nearest_distance(self, x, k: int) -> float:
        """Distance to the k-th nearest stored entry (1-based), exact."""
        if not 1 <= k <= self._n:
            raise ValueError(f"k={k} out of range for index of size {self._n}")
        d = distance_many(self.metric, self.system, self._canon(x), self.points)
        return float(np.partition(d, k - 1)[k - 1])
