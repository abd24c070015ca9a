"""Undesired equilibria: location, curvature spectra, and stability verdicts.

Equilibria live on the dilated obstacle boundary where the potential gradient
is a positive multiple of the outward normal. Their character follows from the
tangent-restricted quadratic form lam * H_d - H_V: a positive eigenvalue means
the boundary out-curves the potential level set and the point repels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import geometry
from .controller import QuadraticPotential
from .errors import DegenerateGradient, IndefiniteResult, NoBoundary

# Eigenvalues within this of zero are undecidable at double precision.
ZETA = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass
class EquilibriumReport:
    """A located undesired equilibrium with its curvature verdicts."""

    location: np.ndarray
    lam: float
    spectrum: np.ndarray
    isolated: bool
    unstable: bool
    indefinite: bool
    residual: float
    obstacle_index: int

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "lambda": self.lam,
            "spectrum": self.spectrum.tolist(),
            "isolated": self.isolated,
            "unstable": self.unstable,
            "indefinite": self.indefinite,
            "residual": self.residual,
            "obstacle_index": self.obstacle_index,
        }


def tangent_basis(eta: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to eta, as columns."""
    eta = np.asarray(eta, dtype=float)
    n = eta.shape[0]
    # Householder reflection mapping e1 to eta; remaining columns span eta-perp.
    sign = 1.0 if eta[0] >= 0.0 else -1.0
    v = eta.copy()
    v[0] += sign
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def _normal_at(world: geometry.World, x: np.ndarray) -> np.ndarray:
    values, _, normals, _ = world.query(np.asarray(x, dtype=float)[None, :])
    return normals[0]


def curvature_obstacle(world: geometry.World, x_bar: np.ndarray,
                       v: np.ndarray) -> float:
    """Normal curvature of the dilated obstacle boundary along tangent v."""
    v = np.asarray(v, dtype=float)
    eta = _normal_at(world, x_bar)
    if abs(float(v @ eta)) > 1e-9:
        raise ValueError("direction is not tangent to the boundary")
    H = geometry.distance_hessian(world, x_bar)
    return float(v @ H @ v)


def curvature_levelset(potential: QuadraticPotential, x_bar: np.ndarray,
                       v: np.ndarray) -> float:
    """Normal curvature of the potential level set along tangent v."""
    v = np.asarray(v, dtype=float)
    g = potential.gradient(x_bar)
    norm = np.linalg.norm(g)
    if norm < 1e-12:
        raise DegenerateGradient("potential gradient vanishes at the query point")
    if abs(float(v @ g)) / norm > 1e-9:
        raise ValueError("direction is not tangent to the level set")
    H = potential.hessian(x_bar)
    return float(v @ H @ v) / norm


def jacobian_at(world: geometry.World, potential: QuadraticPotential,
                x: np.ndarray) -> np.ndarray:
    """Jacobian of the boundary-projected descent field at a boundary point."""
    x = np.asarray(x, dtype=float)
    eta = _normal_at(world, x)
    H_d = geometry.distance_hessian(world, x)
    H_v = potential.hessian(x)
    g = potential.gradient(x)
    return -H_v + float(eta @ g) * H_d + np.outer(eta, H_d @ g + H_v @ eta)


def classify_equilibrium(world: geometry.World, potential: QuadraticPotential,
                         x_bar: np.ndarray, lam: float):
    """Verdicts from the tangent-restricted form lam * H_d - H_V.

    Returns (isolated, unstable, spectrum). Raises IndefiniteResult when an
    eigenvalue sits within tolerance of zero.
    """
    eta = _normal_at(world, x_bar)
    H_d = geometry.distance_hessian(world, x_bar)
    H_v = potential.hessian(x_bar)
    T = tangent_basis(eta)
    restricted = T.T @ (lam * H_d - H_v) @ T
    spectrum = np.linalg.eigvalsh(restricted)
    if np.any(np.abs(spectrum) <= ZETA):
        raise IndefiniteResult(
            f"tangent eigenvalue within {ZETA} of zero: {spectrum}")
    unstable = bool(np.max(spectrum) > ZETA)
    isolated = bool(np.min(np.abs(spectrum)) > ZETA)
    return isolated, unstable, spectrum


# -- equilibrium search -------------------------------------------------------


def _dilated_points(obstacle: geometry.Obstacle, dirs: np.ndarray,
                    offset: float) -> np.ndarray:
    """Batch star-shaped projection onto the offset surface along dirs."""
    ref = obstacle.reference_point
    if isinstance(obstacle, (geometry.Disk2D, geometry.Sphere3D)):
        return ref + (obstacle.radius + offset) * dirs
    m = dirs.shape[0]
    t_lo = np.zeros(m)
    t_hi = np.ones(m)
    for _ in range(60):
        pts = ref + t_hi[:, None] * dirs
        outside = obstacle.signed_distance(pts) >= offset
        if np.all(outside):
            break
        t_hi = np.where(outside, t_hi, 2.0 * t_hi)
    for _ in range(100):
        t_mid = 0.5 * (t_lo + t_hi)
        pts = ref + t_mid[:, None] * dirs
        below = obstacle.signed_distance(pts) < offset
        t_lo = np.where(below, t_mid, t_lo)
        t_hi = np.where(below, t_hi, t_mid)
    t = 0.5 * (t_lo + t_hi)
    return ref + t[:, None] * dirs


def _normals_on(obstacle: geometry.Obstacle, pts: np.ndarray) -> np.ndarray:
    nearest = obstacle.nearest_point(pts)
    delta = pts - nearest
    return delta / np.linalg.norm(delta, axis=1)[:, None]


def _find_2d(obstacle: geometry.Obstacle, potential: QuadraticPotential,
             offset: float, samples: int) -> list[np.ndarray]:
    angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = _dilated_points(obstacle, dirs, offset)
    etas = _normals_on(obstacle, pts)
    grads = (pts - potential.goal) @ potential.gain
    cross = grads[:, 0] * etas[:, 1] - grads[:, 1] * etas[:, 0]

    def cross_at(theta: float) -> float:
        u = np.array([np.cos(theta), np.sin(theta)])
        p = _dilated_points(obstacle, u[None, :], offset)[0]
        eta = _normals_on(obstacle, p[None, :])[0]
        g = potential.gradient(p)
        return float(g[0] * eta[1] - g[1] * eta[0])

    roots = []
    step = 2.0 * np.pi / samples
    for j in range(samples):
        a, b = cross[j], cross[(j + 1) % samples]
        if a == 0.0:
            roots.append(angles[j])
        elif a * b < 0.0:
            lo = angles[j]
            hi = angles[j] + step
            roots.append(brentq(cross_at, lo, hi, xtol=1e-13, rtol=1e-15))
    out = []
    for theta in roots:
        u = np.array([np.cos(theta), np.sin(theta)])
        out.append(_dilated_points(obstacle, u[None, :], offset)[0])
    return out


def _find_3d(obstacle: geometry.Obstacle, potential: QuadraticPotential,
             offset: float, seeds: int) -> list[np.ndarray]:
    dirs = geometry._fibonacci_sphere(seeds)

    def point_at(angles):
        theta, phi = angles
        u = np.array([np.sin(phi) * np.cos(theta),
                      np.sin(phi) * np.sin(theta),
                      np.cos(phi)])
        return _dilated_points(obstacle, u[None, :], offset)[0]

    def residual(angles):
        p = point_at(angles)
        eta = _normals_on(obstacle, p[None, :])[0]
        g = potential.gradient(p)
        r = g - float(g @ eta) * eta
        return r

    out = []
    for u in dirs:
        theta = float(np.arctan2(u[1], u[0]))
        phi = float(np.arccos(np.clip(u[2], -1.0, 1.0)))
        angles = np.array([theta, phi])
        # Gauss-Newton on the two tangent components of the gradient
        for _ in range(60):
            r = residual(angles)
            p = point_at(angles)
            eta = _normals_on(obstacle, p[None, :])[0]
            T = tangent_basis(eta)
            f = T.T @ r
            if np.linalg.norm(f) < 1e-12:
                break
            h = 1e-6
            J = np.empty((2, 2))
            for c in range(2):
                d = np.zeros(2)
                d[c] = h
                J[:, c] = (T.T @ residual(angles + d) - T.T @ residual(angles - d)) / (2.0 * h)
            try:
                delta = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                break
            delta = np.clip(delta, -0.5, 0.5)
            angles = angles + delta
            if np.linalg.norm(delta) < 1e-13:
                break
        p = point_at(angles)
        eta = _normals_on(obstacle, p[None, :])[0]
        g = potential.gradient(p)
        if np.linalg.norm(g - float(g @ eta) * eta) <= RESIDUAL_TOL:
            out.append(p)
    return out


def find_equilibria(world: geometry.World, potential: QuadraticPotential,
                    robot: geometry.RobotParams, samples: int = 2048,
                    seeds_3d: int = 64) -> list[EquilibriumReport]:
    """Locate and classify every undesired equilibrium on the dilated boundary."""
    if not world.obstacles:
        raise NoBoundary("world has no obstacles")
    offset = robot.clearance
    reports: list[EquilibriumReport] = []
    for i, obstacle in enumerate(world.obstacles):
        if world.dimension == 2:
            candidates = _find_2d(obstacle, potential, offset, samples)
        else:
            candidates = _find_3d(obstacle, potential, offset, seeds_3d)
        for x_bar in candidates:
            # skip points whose closest obstacle is a different one
            values = [float(o.signed_distance(x_bar[None, :])[0])
                      for o in world.obstacles]
            if int(np.argmin(values)) != i:
                continue
            eta = _normals_on(obstacle, x_bar[None, :])[0]
            g = potential.gradient(x_bar)
            lam = float(g @ eta)
            residual = float(np.linalg.norm(g - lam * eta))
            if lam <= 0.0 or residual > RESIDUAL_TOL:
                continue
            if any(np.linalg.norm(x_bar - r.location) < 1e-6 for r in reports):
                continue
            try:
                isolated, unstable, spectrum = classify_equilibrium(
                    world, potential, x_bar, lam)
                indefinite = False
            except IndefiniteResult:
                T = tangent_basis(eta)
                H_d = geometry.distance_hessian(world, x_bar)
                spectrum = np.linalg.eigvalsh(
                    T.T @ (lam * H_d - potential.hessian(x_bar)) @ T)
                isolated = False
                unstable = False
                indefinite = True
            reports.append(EquilibriumReport(
                location=x_bar, lam=lam, spectrum=spectrum, isolated=isolated,
                unstable=unstable, indefinite=indefinite, residual=residual,
                obstacle_index=i))
    return reports

