"""Closed-loop trajectory integration and batch experiment drivers.

Trajectories in a batch advance in lockstep as one (N, dim) state array so the
geometry, sensing, and filter pipelines run vectorized. Per-run results are
identical to running each trajectory alone: every operation is row-wise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, sensing
from .controller import QuadraticPotential, spf_filter_batch
from .errors import FieldEvaluationFailed, OutsidePracticalFreeSpace
from .penalty import PenaltyParams

REFINE_LEVELS = (2, 4, 8, 16, 32, 64)


@dataclass
class SimConfig:
    """Everything needed to integrate the closed loop from one or more starts."""

    world: geometry.World
    potential: QuadraticPotential
    robot: geometry.RobotParams
    penalty: PenaltyParams
    sensor_mode: str = "oracle"
    lidar: sensing.LidarConfig | None = None
    initials: list = field(default_factory=list)
    dt: float = 1e-3
    t_max: float = 60.0
    goal_tol: float = 1e-2
    integrator: str = "rk4"
    safety_tol: float = 1e-6
    stall_speed: float = 1e-6
    stall_window: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_max < self.dt:
            raise ValueError("t_max must be at least dt")
        if self.goal_tol <= 0.0:
            raise ValueError("goal tolerance must be positive")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError("integrator must be 'rk4' or 'euler'")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    """One simulated run: per-step records plus full-rate summary statistics."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    s: np.ndarray
    w: np.ndarray
    V: np.ndarray
    termination: str
    min_margin: float
    max_v_increase: float
    final_error: float
    path_length: float

    def summary(self) -> dict:
        return {
            "termination": self.termination,
            "min_margin": self.min_margin,
            "final_error": self.final_error,
            "path_length": self.path_length,
            "max_v_increase": self.max_v_increase,
            "steps": int(self.t.shape[0]),
            "duration": float(self.t[-1]) if self.t.size else 0.0,
        }


class FieldEvaluator:
    """Vectorized sensing -> nominal -> filter pipeline over state batches."""

    def __init__(self, world: geometry.World, potential: QuadraticPotential,
                 robot: geometry.RobotParams, penalty: PenaltyParams,
                 sensor_mode: str = "oracle",
                 lidar: sensing.LidarConfig | None = None):
        self.world = world
        self.potential = potential
        self.robot = robot
        self.penalty = penalty
        self.sensor_mode = sensor_mode
        self.lidar = lidar
        if sensor_mode not in ("oracle", "lidar2d", "lidar3d"):
            raise ValueError(f"unknown sensing mode '{sensor_mode}'")
        if sensor_mode != "oracle":
            if lidar is None:
                raise ValueError("lidar sensing needs a LidarConfig")
            self._directions = (sensing.scan_directions_2d(lidar)
                                if sensor_mode == "lidar2d"
                                else sensing.scan_directions_3d(lidar))
            self._table = sensing.ScanTable(world, self._directions,
                                            lidar.max_range)

    def _readings(self, points):
        """Sensed margins/normals plus true margins for safety monitoring."""
        n = points.shape[0]
        if not self.world.obstacles:
            inf = np.full(n, np.inf)
            zeros = np.zeros_like(points)
            return inf, zeros, np.zeros(n, dtype=bool), inf
        if self.sensor_mode == "oracle":
            values, normals = self.world.query_fast(points)
            margins = values - self.robot.clearance
            return margins, normals, np.ones(n, dtype=bool), margins
        ranges = self._table.ranges(points)
        best = np.argmin(ranges, axis=1)
        best_range = ranges[np.arange(n), best]
        valid = np.isfinite(best_range)
        sensed = np.where(valid, best_range - self.robot.clearance, np.inf)
        etas = np.where(valid[:, None], -self._directions[best], 0.0)
        true_margins = self.world.distance_values(points) - self.robot.clearance
        return sensed, etas, valid, true_margins

    def evaluate(self, points):
        """Control, true margin, alignment, blend weight, and potential value."""
        nominal = -(points - self.potential.goal) @ self.potential.gain
        sensed, etas, valid, true_margins = self._readings(points)
        u, s, w = spf_filter_batch(nominal, sensed, etas, valid, self.penalty)
        V = self.potential.value_batch(points)
        return u, true_margins, s, w, V

    def control(self, points):
        return self.evaluate(points)[0]


def step(x: np.ndarray, field, dt: float, integrator: str = "rk4") -> np.ndarray:
    """One explicit integration step of dx/dt = field(x).

    Each stage evaluates the full closed-loop pipeline; a stage that leaves the
    practical free space surfaces as FieldEvaluationFailed.
    """
    x = np.asarray(x, dtype=float)
    try:
        k1 = field(x)
        if integrator == "euler":
            return x + dt * k1
        k2 = field(x + 0.5 * dt * k1)
        k3 = field(x + 0.5 * dt * k2)
        k4 = field(x + dt * k3)
    except OutsidePracticalFreeSpace as exc:
        raise FieldEvaluationFailed(str(exc)) from exc
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(evaluator: FieldEvaluator, X: np.ndarray, k1: np.ndarray,
             dt: float, integrator: str):
    """Advance a state batch one step; returns new states and min stage margin."""
    if integrator == "euler":
        return X + dt * k1, np.full(X.shape[0], np.inf)
    k2, m2, _, _, _ = evaluator.evaluate(X + (0.5 * dt) * k1)
    k3, m3, _, _, _ = evaluator.evaluate(X + (0.5 * dt) * k2)
    k4, m4, _, _, _ = evaluator.evaluate(X + dt * k3)
    X_new = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X_new, np.minimum(np.minimum(m2, m3), m4)


def _refine_step(evaluator: FieldEvaluator, x: np.ndarray, dt: float,
                 tol: float, integrator: str):
    """Retry one step as 2..64 substeps; raise when even dt/64 leaks."""
    for levels in REFINE_LEVELS:
        h = dt / levels
        y = x.copy()
        min_margin = np.inf
        ok = True
        for _ in range(levels):
            k1, m_start, _, _, _ = evaluator.evaluate(y[None, :])
            if m_start[0] < -tol:
                ok = False
                break
            y_new, stage_min = _advance(evaluator, y[None, :], k1, h, integrator)
            m_end = _true_margin(evaluator, y_new)[0]
            if stage_min[0] < -tol or m_end < -tol:
                ok = False
                break
            min_margin = min(min_margin, float(m_end))
            y = y_new[0]
        if ok:
            return y, min_margin
    raise FieldEvaluationFailed("step leaks out of the practical free space")


def _true_margin(evaluator: FieldEvaluator, points: np.ndarray) -> np.ndarray:
    if not evaluator.world.obstacles:
        return np.full(points.shape[0], np.inf)
    return evaluator.world.distance_values(points) - evaluator.robot.clearance


def batch_simulate(config: SimConfig, initials=None) -> list[Trajectory]:
    """Integrate every initial condition in lockstep until termination.

    Runs are mutually independent; ordering follows the input ordering.
    """
    starts = config.initials if initials is None else initials
    if len(starts) == 0:
        return []
    X = np.array([np.asarray(p, dtype=float) for p in starts])
    n_runs, dim = X.shape
    if dim != config.world.dimension and config.world.obstacles:
        raise ValueError("initial condition dimension does not match the world")

    evaluator = FieldEvaluator(config.world, config.potential, config.robot,
                               config.penalty, config.sensor_mode, config.lidar)
    start_margins = _true_margin(evaluator, X)
    if np.any(start_margins < -1e-9):  # numerical zero still counts as on-boundary
        bad = int(np.argmin(start_margins))
        raise ValueError(f"initial condition {bad} has negative margin "
                         f"{start_margins[bad]}")

    dt = config.dt
    total_steps = int(round(config.t_max / dt))
    stall_steps = max(1, int(round(config.stall_window / dt)))
    n_cols = 1 + 2 * dim + 4

    active = np.ones(n_runs, dtype=bool)
    termination = [""] * n_runs
    rows_written = np.zeros(n_runs, dtype=int)
    final_rows: dict[int, np.ndarray] = {}
    chunks: list[np.ndarray] = []
    min_margin = np.full(n_runs, np.inf)
    max_dv = np.full(n_runs, -np.inf)
    prev_v = np.full(n_runs, np.nan)
    path_len = np.zeros(n_runs)
    stall_count = np.zeros(n_runs, dtype=int)

    goal = config.potential.goal

    for k in range(total_steps + 1):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        t_now = k * dt
        u, m, s, w, V = evaluator.evaluate(X[idx])

        min_margin[idx] = np.minimum(min_margin[idx], m)
        if k > 0:
            max_dv[idx] = np.maximum(max_dv[idx], V - prev_v[idx])
        prev_v[idx] = V

        # termination checks at the current state
        delta_goal = X[idx] - goal
        err = np.sqrt(np.einsum("ij,ij->i", delta_goal, delta_goal))
        speed = np.sqrt(np.einsum("ij,ij->i", u, u))
        stall_count[idx] = np.where(speed < config.stall_speed,
                                    stall_count[idx] + 1, 0)
        faulted = m < -config.safety_tol
        reached = err < config.goal_tol
        stalled = stall_count[idx] >= stall_steps
        done = faulted | reached | stalled
        if k == total_steps:
            done = np.ones(len(idx), dtype=bool)

        recorded = k % config.record_every == 0
        rows = None
        if recorded or done.any():
            rows = np.empty((len(idx), n_cols))
            rows[:, 0] = t_now
            rows[:, 1:1 + dim] = X[idx]
            rows[:, 1 + dim:1 + 2 * dim] = u
            rows[:, 1 + 2 * dim] = m
            rows[:, 2 + 2 * dim] = s
            rows[:, 3 + 2 * dim] = w
            rows[:, 4 + 2 * dim] = V
        if recorded:
            chunk = np.full((n_runs, n_cols), np.nan)
            chunk[idx] = rows
            chunks.append(chunk)
            rows_written[idx] += 1

        for j in np.flatnonzero(done):
            run = idx[j]
            if faulted[j]:
                termination[run] = "safety_fault"
            elif reached[j]:
                termination[run] = "reached_goal"
            elif stalled[j]:
                termination[run] = "stalled"
            else:
                termination[run] = "timeout"
            if not recorded:
                final_rows[run] = rows[j]
                rows_written[run] += 1
            active[run] = False

        cont = idx[~done]
        if cont.size == 0:
            continue

        local = np.flatnonzero(~done)
        X_new, stage_min = _advance(evaluator, X[cont], u[local], dt,
                                    config.integrator)
        end_margin = _true_margin(evaluator, X_new)
        bad = (stage_min < -config.safety_tol) | (end_margin < -config.safety_tol)
        for j in np.flatnonzero(bad):
            run = cont[j]
            try:
                X_new[j], refined_min = _refine_step(evaluator, X[run], dt,
                                                     config.safety_tol,
                                                     config.integrator)
                min_margin[run] = min(min_margin[run], refined_min)
            except FieldEvaluationFailed:
                termination[run] = "safety_fault"
                min_margin[run] = min(min_margin[run], float(stage_min[j]),
                                      float(end_margin[j]))
                if not recorded:
                    row = np.empty(n_cols)
                    row[0] = t_now
                    row[1:1 + dim] = X[run]
                    lj = local[j]
                    row[1 + dim:1 + 2 * dim] = u[lj]
                    row[1 + 2 * dim] = m[lj]
                    row[2 + 2 * dim] = s[lj]
                    row[3 + 2 * dim] = w[lj]
                    row[4 + 2 * dim] = V[lj]
                    final_rows[run] = row
                    rows_written[run] += 1
                active[run] = False
        ok = active[cont]
        moved = X_new[ok]
        delta_move = moved - X[cont[ok]]
        path_len[cont[ok]] += np.sqrt(np.einsum("ij,ij->i", delta_move, delta_move))
        X[cont[ok]] = moved

    stacked = np.stack(chunks) if chunks else np.empty((0, n_runs, n_cols))
    trajectories = []
    for run in range(n_runs):
        count = rows_written[run]
        extra = final_rows.get(run)
        base = count - (1 if extra is not None else 0)
        data = stacked[:base, run, :]
        if extra is not None:
            data = np.vstack([data, extra[None, :]])
        traj = Trajectory(
            t=data[:, 0].copy(),
            x=data[:, 1:1 + dim].copy(),
            u=data[:, 1 + dim:1 + 2 * dim].copy(),
            d=data[:, 1 + 2 * dim].copy(),
            s=data[:, 2 + 2 * dim].copy(),
            w=data[:, 3 + 2 * dim].copy(),
            V=data[:, 4 + 2 * dim].copy(),
            termination=termination[run] or "timeout",
            min_margin=float(min_margin[run]),
            max_v_increase=float(max_dv[run]) if np.isfinite(max_dv[run]) else 0.0,
            final_error=float(np.linalg.norm(data[-1, 1:1 + dim] - goal)),
            path_length=float(path_len[run]),
        )
        trajectories.append(traj)
    return trajectories


def simulate(config: SimConfig, initial) -> Trajectory:
    """Integrate a single run; equivalent to a one-element batch."""
    return batch_simulate(config, [initial])[0]


def emit_vector_field(config: SimConfig, grid_shape, extent=None):
    """Closed-loop field sampled on a regular lattice, obstacle cells dropped.

    grid_shape is a per-axis sample count; extent defaults to world bounds.
    Returns (points, vectors, weights) for the margin >= 0 cells.
    """
    dim = config.world.dimension
    if extent is None:
        if config.world.bounds is None:
            raise ValueError("no extent given and the world has no bounds")
        lo, hi = config.world.bounds.lo, config.world.bounds.hi
    else:
        lo, hi = (np.asarray(e, dtype=float) for e in extent)
    axes = [np.linspace(lo[i], hi[i], int(grid_shape[i])) for i in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    evaluator = FieldEvaluator(config.world, config.potential, config.robot,
                               config.penalty, config.sensor_mode, config.lidar)
    margins = _true_margin(evaluator, points)
    keep = margins >= 0.0
    points = points[keep]
    u, _, _, w, _ = evaluator.evaluate(points)
    return points, u, w


def sample_initial_conditions(world: geometry.World, robot: geometry.RobotParams,
                              count: int, seed: int,
                              min_margin: float = 0.05) -> np.ndarray:
    """Deterministic rejection sampling of start states inside the bounds."""
    if world.bounds is None:
        raise ValueError("world needs bounds to sample initial conditions")
    rng = np.random.default_rng(seed)
    lo, hi = world.bounds.lo, world.bounds.hi
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 10000 * count:
            raise RuntimeError("could not sample enough feasible starts")
        p = rng.uniform(lo, hi)
        if not world.obstacles:
            out.append(p)
            continue
        if world.distance_values(p[None, :])[0] - robot.clearance >= min_margin:
            out.append(p)
    return np.array(out)
