"""Idealized LiDAR simulation and reduction of scans to controller inputs.

Scans are noiseless: angular discretization is the only imperfection. The
reading normal is the reversed direction of the minimizing ray, which matches
the exact outward normal in the fine-resolution limit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .controller import SensorReading
from .errors import EmptyWorld


@dataclass(frozen=True)
class LidarConfig:
    """Maximum range, angular step, and 3D sampling pattern of the sensor."""

    max_range: float
    resolution_deg: float
    pattern3d: str = "lattice"

    def __post_init__(self):
        if self.max_range <= 0.0:
            raise ValueError("sensor range must be positive")
        n = 360.0 / self.resolution_deg
        if abs(n - round(n)) > 1e-9:
            raise ValueError("resolution must divide 360 degrees evenly")
        if self.pattern3d not in ("lattice", "fibonacci"):
            raise ValueError("pattern3d must be 'lattice' or 'fibonacci'")


@dataclass
class Scan:
    """Ray fan from one origin; ranges are +inf where nothing was hit."""

    origin: np.ndarray
    directions: np.ndarray
    ranges: np.ndarray


def raycast(world: geometry.World, origin: np.ndarray, direction: np.ndarray,
            max_range: float) -> float:
    """Range to the first obstacle boundary along a ray, +inf on miss."""
    origin = np.asarray(origin, dtype=float)[None, :]
    direction = np.asarray(direction, dtype=float)
    direction = (direction / np.linalg.norm(direction))[None, :]
    return float(raycast_batch(world, origin, direction, max_range)[0])


def raycast_batch(world: geometry.World, origins: np.ndarray,
                  directions: np.ndarray, max_range: float) -> np.ndarray:
    """Minimum hit range over all obstacles for each (origin, direction) row."""
    ranges = np.full(origins.shape[0], np.inf)
    for obstacle in world.obstacles:
        ranges = np.minimum(ranges, obstacle.raycast(origins, directions, max_range))
    return ranges


def scan_directions_2d(config: LidarConfig) -> np.ndarray:
    """Unit direction table at azimuths 0, step, ..., 360 - step degrees."""
    n = int(round(360.0 / config.resolution_deg))
    az = np.deg2rad(config.resolution_deg) * np.arange(n)
    return np.stack([np.cos(az), np.sin(az)], axis=1)


def scan_directions_3d(config: LidarConfig) -> np.ndarray:
    """Directions of a spherical scan: lattice by default, Fibonacci optional.

    The lattice places rays on the azimuth-elevation grid at the configured
    step with the poles emitted once; the Fibonacci pattern spreads the same
    number of rays evenly over the sphere.
    """
    n_az = int(round(360.0 / config.resolution_deg))
    n_el = int(round(180.0 / config.resolution_deg)) + 1
    if config.pattern3d == "fibonacci":
        count = n_az * (n_el - 2) + 2
        return geometry._fibonacci_sphere(count)
    az = np.deg2rad(config.resolution_deg) * np.arange(n_az)
    el = -0.5 * np.pi + np.deg2rad(config.resolution_deg) * np.arange(n_el)
    dirs = []
    for e in el:
        ce, se = np.cos(e), np.sin(e)
        if abs(ce) < 1e-12:
            dirs.append(np.array([[0.0, 0.0, np.sign(se)]]))
            continue
        dirs.append(np.stack([ce * np.cos(az), ce * np.sin(az),
                              np.full(n_az, se)], axis=1))
    return np.vstack(dirs)


def _scan(world, origin, directions, config) -> Scan:
    origin = np.asarray(origin, dtype=float)
    if world.obstacles:
        ranges = scan_batch(world, origin[None, :], directions, config)[0]
    else:
        ranges = np.full(directions.shape[0], np.inf)
    return Scan(origin=origin, directions=directions, ranges=ranges)


def scan_2d(world: geometry.World, origin: np.ndarray, config: LidarConfig) -> Scan:
    """Planar scan over the full circle at the configured resolution."""
    return _scan(world, origin, scan_directions_2d(config), config)


def scan_3d(world: geometry.World, origin: np.ndarray, config: LidarConfig) -> Scan:
    """Spherical scan on the azimuth-elevation lattice."""
    return _scan(world, origin, scan_directions_3d(config), config)


def extract_reading(scan: Scan, robot: geometry.RobotParams) -> SensorReading:
    """Reduce a scan to (margin, normal); invalid when nothing was hit."""
    if scan.ranges.size == 0:
        raise ValueError("scan has no rays")
    best = int(np.argmin(scan.ranges))
    if not np.isfinite(scan.ranges[best]):
        return SensorReading(d=np.inf, eta=np.zeros(scan.directions.shape[1]),
                             valid=False)
    return SensorReading(d=float(scan.ranges[best]) - robot.clearance,
                         eta=-scan.directions[best], valid=True)


def oracle_reading(world: geometry.World, x: np.ndarray,
                   robot: geometry.RobotParams) -> SensorReading:
    """Exact-geometry reading used as ground truth and as the default sensor."""
    try:
        query = geometry.distance_to_obstacles(world, x)
    except EmptyWorld:
        dim = world.dimension
        return SensorReading(d=np.inf, eta=np.zeros(dim), valid=False)
    return SensorReading(d=query.value - robot.clearance, eta=query.normal,
                         valid=True)


def make_sensor(mode: str, world: geometry.World, robot: geometry.RobotParams,
                config: LidarConfig | None = None):
    """Build a state -> SensorReading closure for the requested mode."""
    if mode == "oracle":
        return lambda x: oracle_reading(world, x, robot)
    if mode == "lidar2d":
        if config is None:
            raise ValueError("lidar2d mode needs a LidarConfig")
        return lambda x: extract_reading(scan_2d(world, x, config), robot)
    if mode == "lidar3d":
        if config is None:
            raise ValueError("lidar3d mode needs a LidarConfig")
        return lambda x: extract_reading(scan_3d(world, x, config), robot)
    raise ValueError(f"unknown sensing mode '{mode}'")


class ScanTable:
    """Precomputed shared-direction scans from many origins at once.

    Rays through a fixed direction table let per-obstacle constants be cached:
    ball intersections reduce to one matmul plus elementwise work, and polygon
    edge denominators are direction-only. Obstacles without a closed-form
    intersection fall back to per-ray sphere tracing.
    """

    def __init__(self, world: geometry.World, directions: np.ndarray,
                 max_range: float):
        self.world = world
        self.directions = directions
        self.max_range = max_range
        self._balls = []
        self._polygons = []
        self._traced = []
        for obs in world.obstacles:
            if isinstance(obs, (geometry.Disk2D, geometry.Sphere3D)):
                self._balls.append((obs.center, obs.radius * obs.radius))
            elif isinstance(obs, geometry.ConvexPolygon2D):
                e = obs._edges
                denom = (directions[:, 0][:, None] * e[None, :, 1]
                         - directions[:, 1][:, None] * e[None, :, 0])
                safe = np.abs(denom) > 1e-15
                self._polygons.append(
                    (obs.vertices, e, np.where(safe, denom, 1.0), safe))
            else:
                self._traced.append(obs)

    def ranges(self, origins: np.ndarray) -> np.ndarray:
        n = origins.shape[0]
        r = self.directions.shape[0]
        out = np.full((n, r), np.inf)
        for center, r2 in self._balls:
            oc = center - origins
            # explicit per-axis sum: bitwise identical for any batch size,
            # unlike BLAS matmul whose kernels vary with the shape
            b = oc[:, 0][:, None] * self.directions[:, 0][None, :]
            for j in range(1, origins.shape[1]):
                b += oc[:, j][:, None] * self.directions[:, j][None, :]
            c = np.einsum("ij,ij->i", oc, oc) - r2
            disc = b * b
            disc -= c[:, None]
            ok = disc >= 0.0
            np.maximum(disc, 0.0, out=disc)
            np.sqrt(disc, out=disc)
            b -= disc  # entering root; origins sit outside the obstacle
            ok &= b > 1e-12
            ok &= b <= self.max_range
            np.minimum(out, np.where(ok, b, np.inf), out=out)
        for verts, e, denom, safe in self._polygons:
            ao = verts[None, :, :] - origins[:, None, :]
            t_num = ao[:, :, 0] * e[None, :, 1] - ao[:, :, 1] * e[None, :, 0]
            s_num = (ao[:, None, :, 0] * self.directions[None, :, 1, None]
                     - ao[:, None, :, 1] * self.directions[None, :, 0, None])
            t = t_num[:, None, :] / denom[None, :, :]
            s = s_num / denom[None, :, :]
            ok = (safe[None, :, :] & (s >= 0.0) & (s <= 1.0)
                  & (t > 1e-12) & (t <= self.max_range))
            np.minimum(out, np.min(np.where(ok, t, np.inf), axis=2), out=out)
        for obs in self._traced:
            flat_origins = np.repeat(origins, r, axis=0)
            flat_dirs = np.tile(self.directions, (n, 1))
            traced = obs.raycast(flat_origins, flat_dirs, self.max_range)
            np.minimum(out, traced.reshape(n, r), out=out)
        return out


def scan_batch(world: geometry.World, origins: np.ndarray,
               directions: np.ndarray, config: LidarConfig):
    """Ranges for a shared direction table from many origins at once.

    Returns an (N, R) array for N origins and R table directions; used by the
    batched simulator to amortize per-ray work across trajectories.
    """
    return ScanTable(world, directions, config.max_range).ranges(origins)
