"""Motion primitives: representation, offline generation, ordering, and I/O.

A primitive is a short dynamics-consistent trajectory canonicalized to start
at the workspace origin.  Libraries are stored dispersion-sorted: a greedy
pass picks, at each step, the motion maximizing the minimum summed start/end
distance to the already-picked motions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import ConfigurationError, SystemModel, make_system, state_diff
from .metric import NNIndex, StateMetric, distance, distance_many

DYNAMICS_TOL = 1e-9
GENERATION_BOX = 2.0  # [m] half-extent of the goal-sampling box
MIN_PIECE_STEPS = 2


class GenerationError(RuntimeError):
    """Raised when BVP generation persistently fails (mis-tuned bounds)."""


class LibraryFormatError(ValueError):
    """Corrupt, truncated, or incompatible primitive-library file."""


class LibrarySystemMismatchError(LibraryFormatError):
    """Library was generated for a different system."""


@dataclass(frozen=True, eq=False)
class MotionPrimitive:
    states: np.ndarray  # (T+1, d_x), states[0,:2] == 0
    controls: np.ndarray  # (T, d_u)
    cost: float  # T * dt [s]
    t_lo: np.ndarray  # swept translation AABB
    t_hi: np.ndarray
    rotor_ok: bool  # all states satisfy the non-translational bounds

    def __post_init__(self):
        for arr in (self.states, self.controls, self.t_lo, self.t_hi):
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return len(self.controls)

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


def make_primitive(system: SystemModel, states, controls) -> MotionPrimitive:
    states = np.ascontiguousarray(states, dtype=float)
    controls = np.ascontiguousarray(controls, dtype=float)
    t = states[:, : system.d_w]
    rotor_ok = all(system.state_in_bounds(x) for x in states)
    return MotionPrimitive(
        states=states,
        controls=controls,
        cost=len(controls) * system.dt,
        t_lo=t.min(axis=0).copy(),
        t_hi=t.max(axis=0).copy(),
        rotor_ok=rotor_ok,
    )


def canonicalize(system: SystemModel, states: np.ndarray) -> np.ndarray:
    """Shift a state sequence so the first translation is exactly zero."""
    out = np.array(states, dtype=float)
    out[:, : system.d_w] -= out[0, : system.d_w]
    return out


def dynamics_gaps(system: SystemModel, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Per-step max-abs defect |x_{k+1} - step(x_k, u_k)| (angles wrapped)."""
    gaps = np.empty(len(controls))
    for k in range(len(controls)):
        d = state_diff(system, states[k + 1], system.step(states[k], controls[k]))
        gaps[k] = np.max(np.abs(d))
    return gaps


def validate_primitive(system: SystemModel, m: MotionPrimitive) -> bool:
    """Check all four primitive conditions (canonical start, dynamics, bounds)."""
    if m.states.shape != (m.T + 1, system.d_x) or m.controls.shape != (m.T, system.d_u):
        return False
    if np.any(m.states[0, : system.d_w] != 0.0):
        return False
    if m.T > 0 and np.max(dynamics_gaps(system, m.states, m.controls)) > DYNAMICS_TOL:
        return False
    if not system.controls_in_bounds(m.controls):
        return False
    return all(system.state_in_bounds(x) for x in m.states)


def split_motion(system: SystemModel, states, controls, piece_length: int) -> list[MotionPrimitive]:
    """Chop a consistent trajectory into canonicalized pieces of <= piece_length steps.

    Adjacent pieces share the boundary state; a trailing piece shorter than
    two steps is dropped.
    """
    if piece_length < MIN_PIECE_STEPS:
        raise ValueError(f"piece_length must be >= {MIN_PIECE_STEPS}")
    states = np.asarray(states, dtype=float)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    T = len(controls)
    out = []
    for i in range(0, T, piece_length):
        j = min(i + piece_length, T)
        if j - i < MIN_PIECE_STEPS:
            break
        out.append(
            make_primitive(system, canonicalize(system, states[i:j + 1]), controls[i:j])
        )
    return out


def sort_by_dispersion(metric: StateMetric, system: SystemModel, motions) -> list[MotionPrimitive]:
    """Greedy dispersion order; ties broken by input order.

    The first pick maximizes the distance between a motion's own start and
    end; every later pick maximizes min-distance-to-picked summed over start
    and end states.
    """
    motions = list(motions)
    if not motions:
        raise ValueError("cannot sort an empty motion set")
    starts = np.array([m.start for m in motions])
    ends = np.array([m.end for m in motions])
    spread = np.array([distance(metric, system, m.start, m.end) for m in motions])
    first = int(np.argmax(spread))
    order = [first]
    min_start = distance_many(metric, system, starts[first], starts)
    min_end = distance_many(metric, system, ends[first], ends)
    picked = np.zeros(len(motions), dtype=bool)
    picked[first] = True
    for _ in range(len(motions) - 1):
        score = min_start + min_end
        score[picked] = -np.inf
        nxt = int(np.argmax(score))
        order.append(nxt)
        picked[nxt] = True
        min_start = np.minimum(min_start, distance_many(metric, system, starts[nxt], starts))
        min_end = np.minimum(min_end, distance_many(metric, system, ends[nxt], ends))
    return [motions[i] for i in order]


def compute_delta(
    metric: StateMetric,
    system: SystemModel,
    motions,
    b_d: int,
    n_samples: int = 100,
    seed: int = 0,
) -> float:
    """Estimate the discontinuity bound for a desired branching factor.

    Averages, over random sample states, the distance to the b_d-th nearest
    primitive start state (position excluded).
    """
    motions = list(motions)
    if not 1 <= b_d <= len(motions):
        raise ValueError(f"need 1 <= b_d <= |M|, got b_d={b_d}, |M|={len(motions)}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    index = NNIndex(system, metric, mode="rotational")
    index.add_many([m.start for m in motions])
    rng = np.random.default_rng(seed)
    deltas = [
        index.kth_nearest_distance(system.sample_state(rng), b_d) for _ in range(n_samples)
    ]
    return float(np.mean(deltas))


def extract_primitives(system: SystemModel, states, controls, piece_length: int) -> list[MotionPrimitive]:
    """Harvest valid primitives from a possibly-infeasible trajectory.

    Finds maximal step intervals where the dynamics defect, control bounds,
    and state bounds all hold, then splits each interval like the offline
    pipeline.  Input constraint violations simply shrink the intervals.
    """
    states = np.asarray(states, dtype=float)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    T = len(controls)
    if T == 0:
        return []
    gaps = dynamics_gaps(system, states, controls)
    state_ok = np.array([system.state_in_bounds(x) for x in states])
    step_ok = (
        (gaps <= DYNAMICS_TOL)
        & np.array([system.controls_in_bounds(u) for u in controls])
        & state_ok[:-1]
        & state_ok[1:]
    )
    out = []
    k = 0
    while k < T:
        if not step_ok[k]:
            k += 1
            continue
        j = k
        while j + 1 < T and step_ok[j + 1]:
            j += 1
        out.extend(split_motion(system, states[k:j + 2], controls[k:j + 1], piece_length))
        k = j + 1
    return out


def generate_primitives(
    system: SystemModel,
    count: int,
    piece_length: int = 5,
    seed: int = 0,
    t_max: int = 64,
    deadline: float | None = None,
) -> list[MotionPrimitive]:
    """Generate >= count primitives from random free-space BVPs, deterministically.

    Each attempt samples a start/goal pair, solves the two-point boundary
    value problem with the trajectory optimizer, and splits the result.  A
    deadline (perf_counter seconds) may cut the batch short of count.
    """
    import time

    from .trajopt import solve_bvp

    if count <= 0:
        raise ValueError("count must be positive")
    out: list[MotionPrimitive] = []
    attempts = 0
    successes = 0
    while len(out) < count:
        if deadline is not None and time.perf_counter() > deadline:
            break
        rng = np.random.default_rng([seed, attempts])
        attempts += 1
        x_s = system.sample_state(rng)
        x_s[: system.d_w] = 0.0
        x_f = system.sample_state(rng)
        sol = solve_bvp(system, x_s, x_f, t_max)
        if sol is not None:
            successes += 1
            # re-rollout the clamped controls: the optimizer's ~1e-6 defect
            # is fine for solutions but above the primitive tolerance
            controls = np.clip(sol.controls, system.u_lo, system.u_hi)
            states = system.rollout(sol.states[0], controls)
            pieces = split_motion(system, states, controls, piece_length)
            out.extend(p for p in pieces if validate_primitive(system, p))
        if attempts >= 40 and successes / attempts < 0.05:
            raise GenerationError(
                f"{system.key}: BVP success rate {successes}/{attempts}; check bounds"
            )
    return out


@dataclass(frozen=True)
class PrimitiveLibrary:
    system_name: str
    variant: str
    metric: StateMetric
    motions: tuple[MotionPrimitive, ...]
    version: int = 1

    def __len__(self) -> int:
        return len(self.motions)


_MAGIC = "kinoplan-primitive-library"


def save_library(lib: PrimitiveLibrary, path) -> None:
    payload = b"".join(
        m.states.astype("<f8").tobytes() + m.controls.astype("<f8").tobytes()
        for m in lib.motions
    )
    header = {
        "format": _MAGIC,
        "version": lib.version,
        "system": lib.system_name,
        "variant": lib.variant,
        "metric": {
            "translation_weight": lib.metric.translation_weight,
            "angle_weight": lib.metric.angle_weight,
            "velocity_weight": lib.metric.velocity_weight,
        },
        "count": len(lib.motions),
        "horizons": [m.T for m in lib.motions],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def load_library(path, system: SystemModel | None = None) -> PrimitiveLibrary:
    with open(path, "rb") as fh:
        head = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(head)
    except json.JSONDecodeError as e:
        raise LibraryFormatError(f"{path}: unreadable header ({e})") from e
    if header.get("format") != _MAGIC:
        raise LibraryFormatError(f"{path}: not a primitive library")
    if header.get("version") != 1:
        raise LibraryFormatError(f"{path}: unsupported version {header.get('version')!r}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise LibraryFormatError(f"{path}: payload checksum mismatch (truncated?)")
    if system is None:
        try:
            system = make_system(header["system"], header["variant"])
        except ConfigurationError as e:
            raise LibraryFormatError(f"{path}: {e}") from e
    elif (header["system"], header["variant"]) != (system.name, system.variant):
        raise LibrarySystemMismatchError(
            f"{path}: library is for {header['system']}/{header['variant']}, "
            f"not {system.key}"
        )
    metric = StateMetric(**header["metric"])
    motions = []
    offset = 0
    raw = np.frombuffer(payload, dtype="<f8")
    for T in header["horizons"]:
        ns, nu = (T + 1) * system.d_x, T * system.d_u
        if offset + ns + nu > len(raw):
            raise LibraryFormatError(f"{path}: payload shorter than horizons imply")
        states = raw[offset:offset + ns].reshape(T + 1, system.d_x)
        controls = raw[offset + ns:offset + ns + nu].reshape(T, system.d_u)
        offset += ns + nu
        m = make_primitive(system, states, controls)
        if not validate_primitive(system, m):
            raise LibraryFormatError(f"{path}: primitive {len(motions)} fails validation")
        motions.append(m)
    if offset != len(raw):
        raise LibraryFormatError(f"{path}: {len(raw) - offset} trailing floats in payload")
    return PrimitiveLibrary(
        system_name=header["system"],
        variant=header["variant"],
        metric=metric,
        motions=tuple(motions),
    )
