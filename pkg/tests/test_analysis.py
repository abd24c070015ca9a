import numpy as np
import pytest

from spfnav import analysis as an
from spfnav import geometry as geo
from spfnav.controller import QuadraticPotential
from spfnav.errors import IndefiniteResult, NoBoundary

ROBOT = geo.RobotParams(radius=0.34, safety_margin=0.06)


def disk_world(radius=1.0, center=(0.0, 0.0)):
    return geo.World(dimension=2,
                     obstacles=[geo.Disk2D(center=center, radius=radius)])


@pytest.fixture
def disk_case():
    world = disk_world()
    pot = QuadraticPotential(goal=[4, 0], gain=np.eye(2))
    return world, pot


class TestFindEquilibria:
    def test_single_disk_analytic(self, disk_case):
        world, pot = disk_case
        reports = an.find_equilibria(world, pot, ROBOT)
        assert len(reports) == 1
        r = reports[0]
        assert np.allclose(r.location, [-1.4, 0.0], atol=1e-9)
        assert r.lam == pytest.approx(5.4, abs=1e-9)
        assert r.residual <= 1e-8
        assert r.unstable and r.isolated

    def test_empty_world(self):
        with pytest.raises(NoBoundary):
            an.find_equilibria(geo.World(dimension=2, obstacles=[]),
                               QuadraticPotential(goal=[4, 0], gain=np.eye(2)),
                               ROBOT)

    def test_no_equilibria_when_goal_unblocked(self):
        # gradient never aligns outward with positive multiplier on the near
        # side only if lambda > 0 filter removes it; a disk always has exactly
        # one far-side equilibrium, so use two disks and check per-obstacle
        world = geo.World(dimension=2, obstacles=[
            geo.Disk2D(center=[0, 0], radius=1.0),
            geo.Disk2D(center=[0, 4], radius=0.8),
        ])
        pot = QuadraticPotential(goal=[4, 0], gain=np.eye(2))
        reports = an.find_equilibria(world, pot, ROBOT)
        assert len(reports) == 2
        assert sorted(r.obstacle_index for r in reports) == [0, 1]
        for r in reports:
            center = world.obstacles[r.obstacle_index].center
            away = center - pot.goal
            away /= np.linalg.norm(away)
            loc_dir = r.location - center
            loc_dir /= np.linalg.norm(loc_dir)
            assert loc_dir @ away > 0.999  # anti-goal side

    def test_sphere_3d(self):
        world = geo.World(dimension=3,
                          obstacles=[geo.Sphere3D(center=[0, 0, 0], radius=1.0)])
        pot = QuadraticPotential(goal=[4, 0, 0], gain=np.eye(3))
        reports = an.find_equilibria(world, pot, ROBOT)
        assert len(reports) == 1
        r = reports[0]
        assert np.allclose(r.location, [-1.4, 0, 0], atol=1e-8)
        assert np.allclose(r.spectrum, 5.4 / 1.4 - 1.0, atol=1e-8)
        assert r.unstable and r.isolated

    def test_flat_face_stable_equilibrium(self):
        world = geo.World(dimension=2, obstacles=[
            geo.ConvexPolygon2D(vertices=[[-1, -1], [1, -1], [1, 1], [-1, 1]])])
        pot = QuadraticPotential(goal=[4, -1],
                                 gain=[[0.4, 0.2], [0.2, 0.8]])
        reports = an.find_equilibria(world, pot, ROBOT)
        stable = [r for r in reports if not r.unstable and not r.indefinite]
        assert len(stable) == 1
        r = stable[0]
        # face point where the rotated gradient aligns with the face normal
        assert np.allclose(r.location, [-1.4, 0.35], atol=1e-8)
        assert r.spectrum[0] == pytest.approx(-0.8, abs=1e-8)
        assert r.isolated  # curvatures differ, just with the stable sign


class TestCurvatures:
    def test_disk_obstacle_curvature(self, disk_case):
        world, _ = disk_case
        v = np.array([0.0, 1.0])
        c = an.curvature_obstacle(world, np.array([-1.4, 0.0]), v)
        assert c == pytest.approx(1.0 / 1.4, abs=1e-9)

    def test_polygon_face_zero(self):
        world = geo.World(dimension=2, obstacles=[
            geo.ConvexPolygon2D(vertices=[[-1, -1], [1, -1], [1, 1], [-1, 1]])])
        c = an.curvature_obstacle(world, np.array([-1.4, 0.0]),
                                  np.array([0.0, 1.0]))
        assert c == 0.0

    def test_sphere_curvature(self):
        world = geo.World(dimension=3,
                          obstacles=[geo.Sphere3D(center=[0, 0, 0], radius=1.0)])
        c = an.curvature_obstacle(world, np.array([-1.4, 0.0, 0.0]),
                                  np.array([0.0, 1.0, 0.0]))
        assert c == pytest.approx(1.0 / 1.4, abs=1e-9)

    def test_levelset_isotropic(self, disk_case):
        _, pot = disk_case
        c = an.curvature_levelset(pot, np.array([-1.4, 0.0]), np.array([0.0, 1.0]))
        assert c == pytest.approx(1.0 / 5.4, abs=1e-12)

    def test_levelset_unit_circle(self):
        pot = QuadraticPotential(goal=[0, 0], gain=np.eye(2))
        c = an.curvature_levelset(pot, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert c == pytest.approx(1.0, abs=1e-12)

    def test_levelset_anisotropic(self):
        pot = QuadraticPotential(goal=[0, 0], gain=np.diag([1.0, 4.0]))
        # at offset (0, 1): gradient (0, 4); tangent e1: v P v / |grad| = 1/4
        c = an.curvature_levelset(pot, np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        assert c == pytest.approx(0.25, abs=1e-12)

    def test_non_tangent_rejected(self, disk_case):
        world, pot = disk_case
        with pytest.raises(ValueError):
            an.curvature_obstacle(world, np.array([-1.4, 0.0]), np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            an.curvature_levelset(pot, np.array([-1.4, 0.0]), np.array([1.0, 0.0]))

    def test_matches_analytic_circle_formulas(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            radius = rng.uniform(0.5, 2.0)
            offset = rng.uniform(0.1, 1.0)
            world = disk_world(radius=radius)
            angle = rng.uniform(0, 2 * np.pi)
            direction = np.array([np.cos(angle), np.sin(angle)])
            x = (radius + offset) * direction
            v = np.array([-direction[1], direction[0]])
            c = an.curvature_obstacle(world, x, v)
            assert c == pytest.approx(1.0 / (radius + offset), abs=1e-6)


class TestJacobian:
    def test_reduces_to_substituted_form(self, disk_case):
        world, pot = disk_case
        x_bar = np.array([-1.4, 0.0])
        eta = np.array([-1.0, 0.0])
        lam = 5.4
        J = an.jacobian_at(world, pot, x_bar)
        H_d = geo.distance_hessian(world, x_bar)
        H_v = pot.hessian()
        substituted = lam * H_d - H_v + np.outer(eta, eta) @ (lam * H_d + H_v)
        assert np.max(np.abs(J - substituted)) < 1e-10

    def test_matches_fd_jacobian_of_projected_field(self, disk_case):
        world, pot = disk_case

        def projected_field(x):
            q = geo.distance_to_obstacles(world, x)
            eta = q.normal
            g = pot.gradient(x)
            return -(g - (eta @ g) * eta)

        rng = np.random.default_rng(10)
        h = 1e-6
        for _ in range(10):
            angle = rng.uniform(0, 2 * np.pi)
            x = 1.4 * np.array([np.cos(angle), np.sin(angle)])
            J = an.jacobian_at(world, pot, x)
            J_fd = np.empty((2, 2))
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                J_fd[:, j] = (projected_field(x + e) - projected_field(x - e)) / (2 * h)
            assert np.max(np.abs(J - J_fd)) < 1e-5

    def test_tangent_quadratic_form_value(self, disk_case):
        world, pot = disk_case
        J = an.jacobian_at(world, pot, np.array([-1.4, 0.0]))
        v = np.array([0.0, 1.0])
        assert v @ J @ v == pytest.approx(5.4 / 1.4 - 1.0, abs=1e-9)


class TestClassify:
    def test_disk_unstable(self, disk_case):
        world, pot = disk_case
        isolated, unstable, spectrum = an.classify_equilibrium(
            world, pot, np.array([-1.4, 0.0]), 5.4)
        assert unstable and isolated
        assert spectrum[0] == pytest.approx(5.4 / 1.4 - 1.0, abs=1e-6)

    def test_flat_face_stable(self):
        world = geo.World(dimension=2, obstacles=[
            geo.ConvexPolygon2D(vertices=[[-1, -1], [1, -1], [1, 1], [-1, 1]])])
        pot = QuadraticPotential(goal=[4, -1], gain=[[0.4, 0.2], [0.2, 0.8]])
        x_bar = np.array([-1.4, 0.35])
        lam = float(pot.gradient(x_bar) @ np.array([-1.0, 0.0]))
        isolated, unstable, spectrum = an.classify_equilibrium(
            world, pot, x_bar, lam)
        assert not unstable
        assert isolated
        assert spectrum[0] < 0

    def test_indefinite_raises(self):
        # tangent eigenvalue lam * (1/|x-c|) - P_tangent tuned to exactly zero
        world = disk_world(radius=0.6)
        pot = QuadraticPotential(goal=[4, 0], gain=np.diag([0.4, 2.0]))
        x_bar = np.array([-1.0, 0.0])
        lam = 2.0
        with pytest.raises(IndefiniteResult):
            an.classify_equilibrium(world, pot, x_bar, lam)

    def test_saddle_implicit_3d(self):
        # obstacle boundary z = (x^2 - y^2) / 2 with the free side below:
        # tangent curvatures at the dilated point have opposite signs
        def fn(points):
            return 0.5 * (points[:, 0] ** 2 - points[:, 1] ** 2) - points[:, 2]

        def grad(points):
            g = np.empty_like(points)
            g[:, 0] = points[:, 0]
            g[:, 1] = -points[:, 1]
            g[:, 2] = -1.0
            return g

        saddle = geo.Implicit(fn=fn, dim=3, grad=grad, reference=[0, 0, 5.0])
        world = geo.World(dimension=3, obstacles=[saddle])
        pot = QuadraticPotential(goal=[0, 0, 1.6], gain=np.eye(3))
        x_bar = np.array([0.0, 0.0, -0.4])
        eta = np.array([0.0, 0.0, -1.0])
        lam = float(pot.gradient(x_bar) @ eta)
        assert lam == pytest.approx(2.0, abs=1e-12)
        isolated, unstable, spectrum = an.classify_equilibrium(
            world, pot, x_bar, lam)
        assert unstable and isolated
        # principal curvatures +-1 at offset 0.4: kappa / (1 +- h kappa)
        expected = sorted([lam * (1.0 / 1.4) - 1.0, lam * (-1.0 / 0.6) - 1.0])
        assert np.allclose(np.sort(spectrum), expected, atol=5e-3)
        assert spectrum.min() < 0 < spectrum.max()

    def test_lambda_scale_invariance(self, disk_case):
        world, pot = disk_case
        x_bar = np.array([-1.4, 0.0])
        for scale in (0.1, 1.0, 7.5):
            scaled = QuadraticPotential(goal=pot.goal, gain=scale * pot.gain)
            lam = float(scaled.gradient(x_bar) @ np.array([-1.0, 0.0]))
            isolated, unstable, spectrum = an.classify_equilibrium(
                world, scaled, x_bar, lam)
            assert unstable and isolated

    def test_2d_unstable_implies_isolated(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            radius = rng.uniform(0.5, 1.5)
            world = disk_world(radius=radius)
            goal_dist = rng.uniform(2.5, 6.0)
            pot = QuadraticPotential(goal=[goal_dist, 0], gain=np.eye(2))
            reports = an.find_equilibria(world, pot, ROBOT)
            for r in reports:
                if r.unstable:
                    assert r.isolated


class TestTangentBasis:
    def test_orthonormal_completion(self):
        rng = np.random.default_rng(1)
        for dim in (2, 3):
            for _ in range(20):
                eta = rng.standard_normal(dim)
                eta /= np.linalg.norm(eta)
                T = an.tangent_basis(eta)
                assert T.shape == (dim, dim - 1)
                assert np.allclose(T.T @ T, np.eye(dim - 1), atol=1e-12)
                assert np.allclose(T.T @ eta, 0.0, atol=1e-12)
