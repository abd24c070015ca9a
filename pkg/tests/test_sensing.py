import numpy as np
import pytest

from spfnav import geometry as geo
from spfnav import sensing

ROBOT = geo.RobotParams(radius=0.34, safety_margin=0.06)


def disk_world(center=(0.0, 0.0), radius=1.0):
    return geo.World(dimension=2, obstacles=[geo.Disk2D(center=center, radius=radius)])


class TestLidarConfig:
    def test_resolution_must_divide_circle(self):
        with pytest.raises(ValueError):
            sensing.LidarConfig(max_range=3.0, resolution_deg=0.7)
        sensing.LidarConfig(max_range=3.0, resolution_deg=1.0)

    def test_range_positive(self):
        with pytest.raises(ValueError):
            sensing.LidarConfig(max_range=0.0, resolution_deg=1.0)


class TestRaycast:
    def test_disk_head_on(self):
        world = disk_world()
        t = sensing.raycast(world, [3.0, 0.0], [-1.0, 0.0], 10.0)
        assert t == pytest.approx(2.0, abs=1e-9)

    def test_miss_is_inf(self):
        world = disk_world()
        assert sensing.raycast(world, [3.0, 0.0], [0.0, 1.0], 3.0) == np.inf
        assert sensing.raycast(world, [3.0, 0.0], [1.0, 0.0], 3.0) == np.inf

    def test_analytic_against_parametric_search(self):
        # oracle: dense parameter sweep of || o + t u - c || - r sign changes
        world = disk_world(center=(1.0, -0.5), radius=0.8)
        rng = np.random.default_rng(4)
        for _ in range(50):
            origin = rng.uniform(-4, 4, 2)
            if world.distance_values(origin[None, :])[0] <= 0.05:
                continue
            direction = rng.standard_normal(2)
            direction /= np.linalg.norm(direction)
            t = sensing.raycast(world, origin, direction, 10.0)
            ts = np.linspace(1e-9, 10.0, 400000)
            pts = origin[None, :] + ts[:, None] * direction[None, :]
            vals = world.distance_values(pts)
            hits = np.flatnonzero(vals <= 0.0)
            if len(hits) == 0:
                assert t == np.inf
            else:
                assert t == pytest.approx(ts[hits[0]], abs=1e-4)

    def test_polygon_edge(self):
        poly = geo.ConvexPolygon2D(vertices=[[-1, -1], [1, -1], [1, 1], [-1, 1]])
        world = geo.World(dimension=2, obstacles=[poly])
        t = sensing.raycast(world, [3.0, 0.5], [-1.0, 0.0], 10.0)
        assert t == pytest.approx(2.0, abs=1e-12)

    def test_sphere_traced_spline_against_analytic_shape(self):
        # spline through many circle points approximates the circle closely
        theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        circle_pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        spline = geo.Spline2D(circle_pts)
        world = geo.World(dimension=2, obstacles=[spline])
        t = sensing.raycast(world, [3.0, 0.0], [-1.0, 0.0], 10.0)
        assert t == pytest.approx(2.0, abs=1e-5)


class TestScans:
    def test_2d_ray_count(self):
        config = sensing.LidarConfig(max_range=3.0, resolution_deg=1.0)
        scan = sensing.scan_2d(disk_world(), [2.5, 0.0], config)
        assert scan.directions.shape == (360, 2)
        assert scan.ranges.shape == (360,)

    def test_3d_lattice_count(self):
        config = sensing.LidarConfig(max_range=3.0, resolution_deg=2.0)
        dirs = sensing.scan_directions_3d(config)
        # 180 azimuths x 91 elevations, poles collapsed to one ray each
        assert dirs.shape == (180 * 89 + 2, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)

    def test_3d_fibonacci_pattern(self):
        config = sensing.LidarConfig(max_range=3.0, resolution_deg=2.0,
                                     pattern3d="fibonacci")
        dirs = sensing.scan_directions_3d(config)
        assert dirs.shape == (180 * 89 + 2, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
        # evenly spread: no large polar clustering like the lattice has
        assert abs(np.mean(dirs[:, 2])) < 1e-2

    def test_empty_world_all_miss(self):
        config = sensing.LidarConfig(max_range=3.0, resolution_deg=10.0)
        world = geo.World(dimension=2, obstacles=[])
        scan = sensing.scan_2d(world, [0.0, 0.0], config)
        assert np.all(np.isinf(scan.ranges))

    def test_disk_scan_symmetry(self):
        # scanning a disk straight down +x: ranges symmetric about that axis
        config = sensing.LidarConfig(max_range=5.0, resolution_deg=1.0)
        scan = sensing.scan_2d(disk_world(center=(3.0, 0.0)), [0.0, 0.0], config)
        finite = np.isfinite(scan.ranges)
        r = scan.ranges.copy()
        mirrored = np.roll(r[::-1], 1)  # azimuth -> 360 - azimuth
        assert np.array_equal(np.isfinite(mirrored), finite)
        assert np.allclose(r[finite], mirrored[finite], atol=1e-9)


class TestExtractReading:
    def test_margin_and_normal(self):
        config = sensing.LidarConfig(max_range=5.0, resolution_deg=1.0)
        scan = sensing.scan_2d(disk_world(), [3.0, 0.0], config)
        reading = sensing.extract_reading(scan, ROBOT)
        assert reading.valid
        assert reading.d == pytest.approx(1.6, abs=1e-9)
        assert np.allclose(reading.eta, [1.0, 0.0], atol=1e-12)

    def test_no_hits_invalid(self):
        config = sensing.LidarConfig(max_range=1.0, resolution_deg=10.0)
        scan = sensing.scan_2d(disk_world(), [5.0, 0.0], config)
        reading = sensing.extract_reading(scan, ROBOT)
        assert not reading.valid

    def test_chord_bound_against_oracle(self):
        config = sensing.LidarConfig(max_range=5.0, resolution_deg=1.0)
        theta_res = np.deg2rad(1.0)
        rng = np.random.default_rng(8)
        for _ in range(50):
            radius = rng.uniform(1.0, 2.0)
            center = rng.uniform(-1, 1, 2)
            world = disk_world(center=center, radius=radius)
            direction = rng.standard_normal(2)
            direction /= np.linalg.norm(direction)
            true_dist = rng.uniform(0.5, 2.5)
            x = center + (radius + true_dist) * direction
            oracle = sensing.oracle_reading(world, x, ROBOT)
            scan = sensing.extract_reading(
                sensing.scan_2d(world, x, config), ROBOT)
            bound = true_dist * (1.0 - np.cos(theta_res)) + 1e-9
            assert scan.d - oracle.d <= bound
            assert scan.d >= oracle.d - 1e-12  # lidar can only overestimate
            angle = np.arccos(np.clip(scan.eta @ oracle.eta, -1, 1))
            assert angle <= theta_res + 1e-12


class TestOracleReading:
    def test_matches_geometry(self):
        world = disk_world()
        reading = sensing.oracle_reading(world, np.array([3.0, 0.0]), ROBOT)
        assert reading.valid
        assert reading.d == pytest.approx(1.6)
        assert np.allclose(reading.eta, [1.0, 0.0])

    def test_empty_world_invalid(self):
        world = geo.World(dimension=2, obstacles=[])
        reading = sensing.oracle_reading(world, np.array([0.0, 0.0]), ROBOT)
        assert not reading.valid


class TestScanBatch:
    def test_matches_single_scans(self):
        config = sensing.LidarConfig(max_range=5.0, resolution_deg=6.0)
        world = geo.World(dimension=2, obstacles=[
            geo.Disk2D(center=[0, 0], radius=1.0),
            geo.ConvexPolygon2D(vertices=[[2, -2], [4, -2], [4, 0], [2, 0]]),
        ])
        dirs = sensing.scan_directions_2d(config)
        origins = np.array([[3.0, 2.0], [-2.5, -1.0], [0.0, 3.0]])
        batch = sensing.scan_batch(world, origins, dirs, config)
        for i, origin in enumerate(origins):
            scan = sensing.scan_2d(world, origin, config)
            assert np.array_equal(batch[i], scan.ranges)
