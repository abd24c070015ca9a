"""Obstacle worlds and distance-field queries.

Every primitive exposes vectorized signed distance, nearest boundary point,
and ray intersection over (N, dim) point batches; the simulator leans on this
for batched closed-loop evaluation. Scalar entry points wrap the batched ones.
Signed distance is negative inside an obstacle, zero on its boundary.
"""
from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    EmptyWorld,
    InsideObstacle,
    NonSmoothPoint,
    SchemaError,
    UnknownReach,
)

# Step scale for central-difference Hessians of spline/implicit distance fields.
FD_STEP_SCALE = 1e-5
# Two obstacles closer than this in distance value count as a tie locus.
TIE_TOLERANCE = 1e-8
# Distance of a polygon nearest point from a Voronoi seam that still counts as smooth.
SEAM_TOLERANCE = 1e-8


def _atleast_2d(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Promote a single point to a (1, dim) batch; report whether it was scalar."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"point has dimension {arr.shape[0]}, world expects {dim}")
        return arr[None, :], True
    if arr.shape[1] != dim:
        raise ValueError(f"points have dimension {arr.shape[1]}, world expects {dim}")
    return arr, False


class Obstacle(ABC):
    """A closed obstacle region with distance, projection, and ray queries."""

    dim: int

    @abstractmethod
    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of each point in an (N, dim) batch (negative inside)."""

    @abstractmethod
    def nearest_point(self, points: np.ndarray) -> np.ndarray:
        """Nearest boundary point for each point in an (N, dim) batch."""

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian of the distance field at a single exterior point."""

    @abstractmethod
    def raycast(self, origins: np.ndarray, directions: np.ndarray,
                max_range: float) -> np.ndarray:
        """Hit range per ray, +inf where the ray misses within max_range."""

    @property
    @abstractmethod
    def reference_point(self) -> np.ndarray:
        """An interior point used as the star-shaped parametrization center."""

    @property
    def analytic(self) -> bool:
        """Whether distance/raycast are exact closed forms."""
        return False

    def normals_at(self, points: np.ndarray) -> np.ndarray:
        """Outward unit normals of the distance field at exterior points."""
        delta = points - self.nearest_point(points)
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        return delta / norms[:, None]

    def value_and_normal(self, points: np.ndarray):
        """Signed distance and outward normal together (one geometry pass)."""
        return self.signed_distance(points), self.normals_at(points)

    def dilated_boundary_point(self, direction: np.ndarray, offset: float) -> np.ndarray:
        """Point where the ray from the reference point crosses the offset surface.

        Assumes the obstacle is star-shaped about its reference point, so the
        signed distance is monotone along the ray past the boundary.
        """
        ref = self.reference_point
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)

        def sd(t: float) -> float:
            return float(self.signed_distance((ref + t * u)[None, :])[0]) - offset

        t_hi = 1.0
        while sd(t_hi) < 0.0:
            t_hi *= 2.0
            if t_hi > 1e9:
                raise ValueError("offset surface not found along ray")
        t_lo = 0.0
        for _ in range(200):
            t_mid = 0.5 * (t_lo + t_hi)
            if sd(t_mid) < 0.0:
                t_lo = t_mid
            else:
                t_hi = t_mid
            if t_hi - t_lo < 1e-14 * max(1.0, t_hi):
                break
        return ref + 0.5 * (t_lo + t_hi) * u


@dataclass(frozen=True, eq=False)
class Disk2D(Obstacle):
    """Closed disk in the plane."""

    center: np.ndarray
    radius: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (2,):
            raise ValueError("disk center must be a 2-vector")
        if self.radius <= 0.0:
            raise ValueError("disk radius must be positive")

    def signed_distance(self, points):
        delta = points - self.center
        return np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.radius

    def nearest_point(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        norms = np.where(norms < 1e-300, 1.0, norms)
        return self.center + self.radius * delta / norms[:, None]

    def normals_at(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        return delta / norms[:, None]

    def value_and_normal(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        safe = np.where(norms < 1e-300, 1.0, norms)
        return norms - self.radius, delta / safe[:, None]

    def hessian(self, x):
        delta = np.asarray(x, dtype=float) - self.center
        r = np.linalg.norm(delta)
        eta = delta / r
        return (np.eye(2) - np.outer(eta, eta)) / r

    def raycast(self, origins, directions, max_range):
        return _ray_ball(origins, directions, self.center, self.radius, max_range)

    @property
    def reference_point(self):
        return self.center

    @property
    def analytic(self):
        return True

    def dilated_boundary_point(self, direction, offset):
        u = np.asarray(direction, dtype=float)
        return self.center + (self.radius + offset) * u / np.linalg.norm(u)


@dataclass(frozen=True, eq=False)
class Sphere3D(Obstacle):
    """Closed ball in 3-space."""

    center: np.ndarray
    radius: float
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (3,):
            raise ValueError("sphere center must be a 3-vector")
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be positive")

    def signed_distance(self, points):
        delta = points - self.center
        return np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.radius

    def nearest_point(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        norms = np.where(norms < 1e-300, 1.0, norms)
        return self.center + self.radius * delta / norms[:, None]

    def normals_at(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        return delta / norms[:, None]

    def value_and_normal(self, points):
        delta = points - self.center
        norms = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        safe = np.where(norms < 1e-300, 1.0, norms)
        return norms - self.radius, delta / safe[:, None]

    def hessian(self, x):
        delta = np.asarray(x, dtype=float) - self.center
        r = np.linalg.norm(delta)
        eta = delta / r
        return (np.eye(3) - np.outer(eta, eta)) / r

    def raycast(self, origins, directions, max_range):
        return _ray_ball(origins, directions, self.center, self.radius, max_range)

    @property
    def reference_point(self):
        return self.center

    @property
    def analytic(self):
        return True

    def dilated_boundary_point(self, direction, offset):
        u = np.asarray(direction, dtype=float)
        return self.center + (self.radius + offset) * u / np.linalg.norm(u)


def _ray_ball(origins, directions, center, radius, max_range):
    """Smallest positive intersection of rays with a ball, +inf on miss."""
    oc = center - origins                        # (N, dim)
    b = np.einsum("ij,ij->i", oc, directions)    # projection of center on ray
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = b - sq
    t_far = b + sq
    # Entering hit if t_near > 0; origin inside gives t_far.
    t = np.where(t_near > 1e-12, t_near, t_far)
    ok = hit & (t > 1e-12) & (t <= max_range)
    return np.where(ok, t, np.inf)


@dataclass(frozen=True, eq=False)
class ConvexPolygon2D(Obstacle):
    """Convex polygon with counter-clockwise vertices."""

    vertices: np.ndarray
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs at least 3 vertices of dimension 2")
        # shoelace area; positive means counter-clockwise
        x, y = verts[:, 0], verts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area <= 0.0:
            raise ValueError("polygon vertices must be counter-clockwise")
        edges = np.roll(verts, -1, axis=0) - verts
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - \
            edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross <= 0.0):
            raise ValueError("polygon must be strictly convex")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_edge_len2", np.einsum("ij,ij->i", edges, edges))

    def _project(self, points):
        """Per-edge clamped projections: parameters (N, E) and distances (N, E)."""
        a = self.vertices[None, :, :]                       # (1, E, 2)
        w = points[:, None, :] - a                          # (N, E, 2)
        t_raw = np.einsum("nej,ej->ne", w, self._edges) / self._edge_len2
        t = np.clip(t_raw, 0.0, 1.0)
        proj = a + t[:, :, None] * self._edges[None, :, :]
        diff = points[:, None, :] - proj
        d2 = np.einsum("nej,nej->ne", diff, diff)
        return t_raw, t, proj, d2

    def _inside(self, points):
        a = self.vertices[None, :, :]
        w = points[:, None, :] - a
        cross = self._edges[None, :, 0] * w[:, :, 1] - self._edges[None, :, 1] * w[:, :, 0]
        return np.all(cross >= 0.0, axis=1)

    def signed_distance(self, points):
        # value-only path: squared distance via the clamped projection scalar,
        # without materializing the projected points
        w = points[:, None, :] - self.vertices[None, :, :]
        we = np.einsum("nej,ej->ne", w, self._edges)
        t = np.clip(we / self._edge_len2, 0.0, 1.0)
        w2 = np.einsum("nej,nej->ne", w, w)
        d2 = w2 - (2.0 * we - t * self._edge_len2) * t
        dist = np.sqrt(np.maximum(np.min(d2, axis=1), 0.0))
        cross = self._edges[None, :, 0] * w[:, :, 1] - self._edges[None, :, 1] * w[:, :, 0]
        inside = np.all(cross >= 0.0, axis=1)
        return np.where(inside, -dist, dist)

    def nearest_point(self, points):
        _, _, proj, d2 = self._project(points)
        best = np.argmin(d2, axis=1)
        return proj[np.arange(points.shape[0]), best]

    def value_and_normal(self, points):
        _, _, proj, d2 = self._project(points)
        best = np.argmin(d2, axis=1)
        nearest = proj[np.arange(points.shape[0]), best]
        delta = points - nearest
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        sign = np.where(self._inside(points), -1.0, 1.0)
        safe = np.where(dist < 1e-300, 1.0, dist)
        # sign flip keeps the normal pointing out of the obstacle from inside
        return sign * dist, (sign / safe)[:, None] * delta

    def hessian(self, x):
        pts = np.asarray(x, dtype=float)[None, :]
        t_raw, _, proj, d2 = self._project(pts)
        best = int(np.argmin(d2[0]))
        t_edge = t_raw[0, best]
        elen = float(np.sqrt(self._edge_len2[best]))
        # Interior of the winning edge: flat face, zero curvature.
        if SEAM_TOLERANCE < t_edge * elen and (1.0 - t_edge) * elen > SEAM_TOLERANCE:
            return np.zeros((2, 2))
        # Clamped to a vertex: curvature of the point distance, unless the query
        # sits within tolerance of the seam between face and vertex regions.
        vertex = self.vertices[best] if t_edge * elen <= SEAM_TOLERANCE \
            else self.vertices[(best + 1) % len(self.vertices)]
        prev_edge = (best - 1) % len(self.vertices) if t_edge * elen <= SEAM_TOLERANCE \
            else best
        next_edge = best if t_edge * elen <= SEAM_TOLERANCE \
            else (best + 1) % len(self.vertices)
        delta = np.asarray(x, dtype=float) - vertex
        r = np.linalg.norm(delta)
        if r <= SEAM_TOLERANCE:
            raise NonSmoothPoint("query point on the polygon boundary")
        # Strictly inside the vertex normal cone: the projection onto the
        # outgoing edge must fall before its start and the projection onto the
        # incoming edge past its end, both by more than the seam tolerance.
        e_next = self._edges[next_edge]
        e_prev = self._edges[prev_edge]
        s_next = float(np.dot(delta, e_next)) / np.linalg.norm(e_next)
        s_prev = float(np.dot(delta, e_prev)) / np.linalg.norm(e_prev)
        if s_next > -SEAM_TOLERANCE or s_prev < SEAM_TOLERANCE:
            raise NonSmoothPoint("query point within tolerance of a Voronoi seam")
        eta = delta / r
        return (np.eye(2) - np.outer(eta, eta)) / r

    def raycast(self, origins, directions, max_range):
        a = self.vertices[None, :, :]                       # (1, E, 2)
        e = self._edges[None, :, :]
        ao = a - origins[:, None, :]                        # (N, E, 2)
        denom = directions[:, None, 0] * e[:, :, 1] - directions[:, None, 1] * e[:, :, 0]
        safe = np.abs(denom) > 1e-15
        denom_s = np.where(safe, denom, 1.0)
        t = (ao[:, :, 0] * e[:, :, 1] - ao[:, :, 1] * e[:, :, 0]) / denom_s
        s = (ao[:, :, 0] * directions[:, None, 1] - ao[:, :, 1] * directions[:, None, 0]) / denom_s
        ok = safe & (s >= 0.0) & (s <= 1.0) & (t > 1e-12) & (t <= max_range)
        t = np.where(ok, t, np.inf)
        return np.min(t, axis=1)

    @property
    def reference_point(self):
        return np.mean(self.vertices, axis=0)

    @property
    def analytic(self):
        return True


class Spline2D(Obstacle):
    """Closed region bounded by a periodic cubic spline through control points.

    Distance queries sample a precomputed table along the curve and polish the
    winner with Newton iterations on the squared distance, targeting 1e-8.
    """

    dim = 2

    def __init__(self, points: np.ndarray, samples: int = 1024):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ValueError("spline needs at least 4 control points of dimension 2")
        # enforce counter-clockwise control polygon so outward normals are consistent
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area < 0.0:
            pts = pts[::-1].copy()
        self.points = pts
        closed = np.vstack([pts, pts[:1]])
        chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        self._period = float(knots[-1])
        self._knots = knots
        spline = CubicSpline(knots, closed, bc_type="periodic", axis=0)
        # (4, nseg, 2) polynomial coefficients, highest power first
        self._coef = spline.c
        self._nseg = self._coef.shape[1]
        self.samples = int(samples)
        ts = np.linspace(0.0, self._period, self.samples, endpoint=False)
        self._table_t = ts
        self._table = self.eval(ts)

    # -- curve evaluation ---------------------------------------------------

    def _locate(self, t):
        t = np.mod(t, self._period)
        seg = np.clip(np.searchsorted(self._knots, t, side="right") - 1, 0, self._nseg - 1)
        tau = t - self._knots[seg]
        return seg, tau

    def _eval_all(self, t):
        """Curve point, first, and second derivative from one segment lookup."""
        seg, tau = self._locate(np.asarray(t, dtype=float))
        c0, c1, c2, c3 = (self._coef[k, seg, :] for k in range(4))
        tau = tau[..., None]
        value = ((c0 * tau + c1) * tau + c2) * tau + c3
        first = (3.0 * c0 * tau + 2.0 * c1) * tau + c2
        second = 6.0 * c0 * tau + 2.0 * c1
        return value, first, second

    def eval(self, t):
        return self._eval_all(t)[0]

    def deriv(self, t):
        return self._eval_all(t)[1]

    def deriv2(self, t):
        return self._eval_all(t)[2]

    # -- queries --------------------------------------------------------------

    def _nearest_param(self, points):
        diff = points[:, None, :] - self._table[None, :, :]
        d2 = np.einsum("nmj,nmj->nm", diff, diff)
        t = self._table_t[np.argmin(d2, axis=1)].copy()
        step_cap = self._period / self.samples
        for _ in range(8):
            c, dc, d2c = self._eval_all(t)
            r = c - points
            g = np.einsum("ij,ij->i", r, dc)
            h = np.einsum("ij,ij->i", dc, dc) + np.einsum("ij,ij->i", r, d2c)
            h = np.where(h > 1e-12, h, 1e-12)
            step = np.clip(-g / h, -step_cap, step_cap)
            t = t + step
            if np.max(np.abs(step)) < 1e-14 * max(1.0, self._period):
                break
        return np.mod(t, self._period)

    def value_and_normal(self, points):
        """Signed distance and outward distance-field normal in one pass.

        The sign comes from the side test against the curve's outward normal
        at the foot point, so no ray-crossing scan is needed.
        """
        t = self._nearest_param(points)
        c, dc, _ = self._eval_all(t)
        delta = points - c
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        # counter-clockwise curve: interior on the left, outward = (dy, -dx);
        # an exterior offset has positive cross product with the tangent
        side = delta[:, 0] * dc[:, 1] - delta[:, 1] * dc[:, 0]
        sign = np.where(side >= 0.0, 1.0, -1.0)
        safe = np.where(dist < 1e-300, 1.0, dist)
        normal = (sign / safe)[:, None] * delta
        return sign * dist, normal

    def signed_distance(self, points):
        return self.value_and_normal(points)[0]

    def normals_at(self, points):
        return self.value_and_normal(points)[1]

    def nearest_point(self, points):
        return self.eval(self._nearest_param(points))

    def hessian(self, x):
        return _numeric_hessian(self, np.asarray(x, dtype=float))

    def raycast(self, origins, directions, max_range):
        return _sphere_trace(self, origins, directions, max_range)

    @property
    def reference_point(self):
        return np.mean(self._table, axis=0)


class Implicit(Obstacle):
    """Obstacle described by a level-set function, negative inside.

    The function is treated as an approximate signed distance field: nearest
    points come from repeated gradient-projection steps, and ray queries use
    sphere tracing. Exact for true distance fields.
    """

    def __init__(self, fn, dim: int, grad=None, reference=None):
        self.fn = fn
        self.dim = int(dim)
        self.grad = grad
        self._reference = None if reference is None else np.asarray(reference, dtype=float)

    @property
    def analytic_gradient(self) -> bool:
        return self.grad is not None

    def signed_distance(self, points):
        return np.asarray(self.fn(points), dtype=float)

    def _gradient(self, points):
        if self.grad is not None:
            return np.asarray(self.grad(points), dtype=float)
        h = FD_STEP_SCALE * np.maximum(1.0, np.linalg.norm(points, axis=1))
        out = np.empty_like(points)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            out[:, j] = (self.fn(points + h[:, None] * e) - self.fn(points - h[:, None] * e)) / (2.0 * h)
        return out

    def _project_to_surface(self, y, iters=5):
        for _ in range(iters):
            f = self.signed_distance(y)
            if np.max(np.abs(f)) < 1e-13:
                break
            g = self._gradient(y)
            gn = np.einsum("ij,ij->i", g, g)
            gn = np.where(gn < 1e-300, 1.0, gn)
            y = y - (f / gn)[:, None] * g
        return y

    def nearest_point(self, points):
        # foot-point iteration: slide along the surface until the offset from
        # the query is normal to it; exact-SDF inputs converge in one pass
        y = self._project_to_surface(np.array(points, dtype=float), iters=30)
        for _ in range(60):
            g = self._gradient(y)
            norms = np.sqrt(np.einsum("ij,ij->i", g, g))
            norms = np.where(norms < 1e-300, 1.0, norms)
            n = g / norms[:, None]
            delta = points - y
            tangential = delta - np.einsum("ij,ij->i", delta, n)[:, None] * n
            if np.max(np.abs(tangential)) < 1e-13:
                break
            y = self._project_to_surface(y + tangential, iters=3)
        return y

    def hessian(self, x):
        return _numeric_hessian(self, np.asarray(x, dtype=float))

    def raycast(self, origins, directions, max_range):
        return _sphere_trace(self, origins, directions, max_range)

    @property
    def reference_point(self):
        if self._reference is None:
            raise ValueError("implicit obstacle needs a reference point for boundary walks")
        return self._reference


def _numeric_hessian(obstacle: Obstacle, x: np.ndarray) -> np.ndarray:
    """Central differences of the outward normal field, symmetrized."""
    dim = obstacle.dim
    h = FD_STEP_SCALE * max(1.0, float(np.linalg.norm(x)))

    def normal(p):
        batch = p[None, :]
        nearest = obstacle.nearest_point(batch)[0]
        delta = p - nearest
        return delta / np.linalg.norm(delta)

    jac = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        jac[:, j] = (normal(x + e) - normal(x - e)) / (2.0 * h)
    return 0.5 * (jac + jac.T)


def _sphere_trace(obstacle: Obstacle, origins, directions, max_range,
                  tol: float = 1e-9, max_steps: int = 500) -> np.ndarray:
    """March each ray by the local distance until hit or escape."""
    n = origins.shape[0]
    t = np.zeros(n)
    result = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        if not np.any(active):
            break
        pts = origins[active] + t[active, None] * directions[active]
        d = obstacle.signed_distance(pts)
        hit = d < tol
        idx = np.flatnonzero(active)
        result[idx[hit]] = t[idx[hit]]
        active[idx[hit]] = False
        advance = idx[~hit]
        t[advance] += np.maximum(d[~hit], tol)
        escaped = t > max_range
        result[active & escaped] = np.inf
        active &= ~escaped
    return result


@dataclass(frozen=True, eq=False)
class Bounds:
    """Axis-aligned workspace box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise ValueError("bounds must satisfy lo < hi componentwise")


@dataclass(frozen=True)
class RobotParams:
    """Ball robot body radius and safety margin."""

    radius: float
    safety_margin: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("robot radius must be positive")
        if self.safety_margin <= 0.0:
            raise ValueError("safety margin must be positive")

    @property
    def clearance(self) -> float:
        """Total erosion distance applied to the free space."""
        return self.radius + self.safety_margin


@dataclass
class DistanceQuery:
    """Nearest-obstacle query result."""

    value: float
    nearest: np.ndarray
    normal: np.ndarray
    index: int


@dataclass
class World:
    """Collection of obstacles sharing one ambient dimension."""

    dimension: int
    obstacles: list[Obstacle]
    bounds: Bounds | None = None
    reach: float | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("world dimension must be 2 or 3")
        for obs in self.obstacles:
            if obs.dim != self.dimension:
                raise ValueError("obstacle dimension does not match world")

    def query(self, points: np.ndarray):
        """Vectorized nearest-obstacle reduction over an (N, dim) batch.

        Returns (values, nearest, normals, indices); values are signed raw
        distances to the obstacle set. Empty worlds raise EmptyWorld.
        """
        if not self.obstacles:
            raise EmptyWorld("world has no obstacles")
        values = np.stack([o.signed_distance(points) for o in self.obstacles])
        idx = np.argmin(values, axis=0)
        n = points.shape[0]
        best = values[idx, np.arange(n)]
        nearest = np.empty_like(points)
        for k, obs in enumerate(self.obstacles):
            mask = idx == k
            if np.any(mask):
                nearest[mask] = obs.nearest_point(points[mask])
        delta = points - nearest
        norms = np.linalg.norm(delta, axis=1)
        safe = np.where(np.abs(norms) < 1e-300, 1.0, norms)
        normals = delta / safe[:, None]
        return best, nearest, normals, idx

    def distance_values(self, points: np.ndarray) -> np.ndarray:
        """Signed raw distances only (cheaper than a full query)."""
        if not self.obstacles:
            raise EmptyWorld("world has no obstacles")
        values = self.obstacles[0].signed_distance(points)
        for obs in self.obstacles[1:]:
            values = np.minimum(values, obs.signed_distance(points))
        return values

    def query_fast(self, points: np.ndarray):
        """Values plus winner normals only; the simulator's hot path.

        Equivalent to query() but computes value and normal in one pass per
        obstacle and keeps the per-point winner.
        """
        if not self.obstacles:
            raise EmptyWorld("world has no obstacles")
        values, normals = self.obstacles[0].value_and_normal(points)
        for obs in self.obstacles[1:]:
            v, n = obs.value_and_normal(points)
            closer = v < values
            values = np.where(closer, v, values)
            normals = np.where(closer[:, None], n, normals)
        return values, normals


def distance_to_obstacles(world: World, x: np.ndarray) -> DistanceQuery:
    """Distance, nearest boundary point, and outward normal at a single point.

    Raises InsideObstacle when the point is inside or on an obstacle and
    EmptyWorld when there is nothing to measure against.
    """
    pts, _ = _atleast_2d(x, world.dimension)
    values, nearest, normals, idx = world.query(pts)
    value = float(values[0])
    if value <= 0.0:
        raise InsideObstacle(f"point is inside or on obstacle {int(idx[0])}")
    return DistanceQuery(value=value, nearest=nearest[0], normal=normals[0],
                         index=int(idx[0]))


def margin(world: World, x: np.ndarray, robot: RobotParams) -> float:
    """Distance to the obstacle set minus the robot clearance R+epsilon."""
    return distance_to_obstacles(world, x).value - robot.clearance


def margin_batch(world: World, points: np.ndarray, robot: RobotParams) -> np.ndarray:
    """Raw batched margins; negative values are returned, not raised."""
    return world.distance_values(points) - robot.clearance


def distance_hessian(world: World, x: np.ndarray) -> np.ndarray:
    """Hessian of the obstacle distance at a point with a unique nearest obstacle."""
    pts, _ = _atleast_2d(x, world.dimension)
    if not world.obstacles:
        raise EmptyWorld("world has no obstacles")
    values = np.array([float(o.signed_distance(pts)[0]) for o in world.obstacles])
    order = np.argsort(values)
    if len(values) > 1 and values[order[1]] - values[order[0]] < TIE_TOLERANCE:
        raise NonSmoothPoint("point lies on a tie locus between obstacles")
    return world.obstacles[int(order[0])].hessian(np.asarray(x, dtype=float))


@dataclass
class FeasibilityReport:
    """Outcome of the geometric feasibility checks on (epsilon, mu)."""

    passed: bool
    h: float
    rho: float
    failures: list[str]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "h": self.h, "rho": self.rho,
                "failures": list(self.failures)}


def _pairwise_clearance(a: Obstacle, b: Obstacle, samples: int = 256) -> float:
    """Boundary-to-boundary separation between two obstacles."""
    if isinstance(a, (Disk2D, Sphere3D)) and isinstance(b, (Disk2D, Sphere3D)):
        return float(np.linalg.norm(a.center - b.center) - a.radius - b.radius)
    best = np.inf
    for first, second in ((a, b), (b, a)):
        if first.dim == 2:
            angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
            dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        else:
            dirs = _fibonacci_sphere(samples)
        pts = np.stack([first.dilated_boundary_point(u, 0.0) for u in dirs])
        best = min(best, float(np.min(second.signed_distance(pts))))
    return best


def _fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on the unit sphere."""
    i = np.arange(n, dtype=float) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


def validate_feasibility(world: World, robot: RobotParams, penalty) -> FeasibilityReport:
    """Check the margin conditions 0 < eps < min(h,rho) - R and
    0 < mu < min(h,rho) - (R+eps).

    For analytic primitives h and rho are taken as half the minimum pairwise
    boundary clearance (the first distance at which projections can become
    ambiguous); a single obstacle gives no bound. Spline/implicit worlds raise
    UnknownReach unless the world carries an explicit reach override.
    """
    if all(o.analytic for o in world.obstacles) or not world.obstacles:
        if len(world.obstacles) >= 2:
            clearance = min(
                _pairwise_clearance(world.obstacles[i], world.obstacles[j])
                for i in range(len(world.obstacles))
                for j in range(i + 1, len(world.obstacles))
            )
            h = rho = clearance / 2.0
        else:
            h = rho = np.inf
    elif world.reach is not None:
        h = rho = float(world.reach)
    else:
        raise UnknownReach(
            "reach is not computable for spline/implicit obstacles; "
            "set World.reach to assert it"
        )

    bound = min(h, rho)
    failures = []
    if robot.safety_margin <= 0.0:
        failures.append("epsilon must be positive")
    if not robot.safety_margin < bound - robot.radius:
        failures.append(
            f"epsilon={robot.safety_margin} must be < min(h,rho)-R={bound - robot.radius}"
        )
    mu = penalty.mu
    if mu <= 0.0:
        failures.append("mu must be positive")
    if not mu < bound - robot.clearance:
        failures.append(
            f"mu={mu} must be < min(h,rho)-(R+epsilon)={bound - robot.clearance}"
        )
    return FeasibilityReport(passed=not failures, h=float(h), rho=float(rho),
                             failures=failures)


# -- world document schema ----------------------------------------------------

_OBSTACLE_FIELDS = {
    "disk": {"type", "center", "radius"},
    "sphere": {"type", "center", "radius"},
    "polygon": {"type", "vertices"},
    "spline": {"type", "points"},
}


def obstacle_from_dict(entry: dict, dimension: int) -> Obstacle:
    if not isinstance(entry, dict) or "type" not in entry:
        raise SchemaError("obstacle entries need a 'type' field")
    kind = entry["type"]
    allowed = _OBSTACLE_FIELDS.get(kind)
    if allowed is None:
        raise SchemaError(f"unknown obstacle type '{kind}'")
    unknown = set(entry) - allowed
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)} in '{kind}' obstacle")
    try:
        if kind == "disk":
            return Disk2D(center=entry["center"], radius=float(entry["radius"]))
        if kind == "sphere":
            return Sphere3D(center=entry["center"], radius=float(entry["radius"]))
        if kind == "polygon":
            return ConvexPolygon2D(vertices=entry["vertices"])
        return Spline2D(points=entry["points"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"invalid '{kind}' obstacle: {exc}") from exc


def obstacle_to_dict(obstacle: Obstacle) -> dict:
    if isinstance(obstacle, Disk2D):
        return {"type": "disk", "center": obstacle.center.tolist(),
                "radius": obstacle.radius}
    if isinstance(obstacle, Sphere3D):
        return {"type": "sphere", "center": obstacle.center.tolist(),
                "radius": obstacle.radius}
    if isinstance(obstacle, ConvexPolygon2D):
        return {"type": "polygon", "vertices": obstacle.vertices.tolist()}
    if isinstance(obstacle, Spline2D):
        return {"type": "spline", "points": obstacle.points.tolist()}
    raise SchemaError("implicit obstacles cannot be serialized")


def world_from_dict(doc: dict) -> World:
    """Build a world from its JSON document form; unknown fields are rejected."""
    if not isinstance(doc, dict):
        raise SchemaError("world document must be an object")
    unknown = set(doc) - {"dimension", "obstacles", "bounds", "reach"}
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)} in world document")
    if "dimension" not in doc or doc["dimension"] not in (2, 3):
        raise SchemaError("world document needs dimension 2 or 3")
    dim = int(doc["dimension"])
    obstacles = [obstacle_from_dict(o, dim) for o in doc.get("obstacles", [])]
    bounds = None
    if "bounds" in doc and doc["bounds"] is not None:
        b = doc["bounds"]
        unknown = set(b) - {"min", "max"}
        if unknown:
            raise SchemaError(f"unknown fields {sorted(unknown)} in bounds")
        bounds = Bounds(lo=b["min"], hi=b["max"])
    reach = float(doc["reach"]) if doc.get("reach") is not None else None
    try:
        return World(dimension=dim, obstacles=obstacles, bounds=bounds, reach=reach)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def world_to_dict(world: World) -> dict:
    doc = {
        "dimension": world.dimension,
        "obstacles": [obstacle_to_dict(o) for o in world.obstacles],
    }
    if world.bounds is not None:
        doc["bounds"] = {"min": world.bounds.lo.tolist(),
                         "max": world.bounds.hi.tolist()}
    if world.reach is not None:
        doc["reach"] = world.reach
    return doc


def load_world(path) -> World:
    with open(path, encoding="utf-8") as fh:
        return world_from_dict(json.load(fh))
