import numpy as np
import pytest
from scipy.linalg import expm

from spfnav import geometry as geo
from spfnav import simulation as sim
from spfnav.controller import QuadraticPotential, closed_loop_field
from spfnav.errors import FieldEvaluationFailed
from spfnav.penalty import PenaltyParams

GAIN = np.array([[0.4, 0.2], [0.2, 0.8]])
PEN = PenaltyParams(mu=0.6, nu=1.0)
ROBOT = geo.RobotParams(radius=0.34, safety_margin=0.06)


def make_config(**overrides):
    world = geo.World(dimension=2, obstacles=[
        geo.Disk2D(center=[0, 0], radius=1.0),
    ], bounds=geo.Bounds(lo=[-8, -6], hi=[6, 6]))
    defaults = dict(world=world,
                    potential=QuadraticPotential(goal=[4, -1], gain=GAIN),
                    robot=ROBOT, penalty=PEN)
    defaults.update(overrides)
    return sim.SimConfig(**defaults)


class TestStep:
    def test_fixed_point_at_goal(self):
        config = make_config()
        field = lambda x: closed_loop_field(config.potential, config.world,
                                            ROBOT, PEN, x)
        x = np.array([4.0, -1.0])
        assert np.allclose(sim.step(x, field, 1e-3), x, atol=1e-15)

    def test_zero_field_identity(self):
        x = np.array([1.5, -2.0])
        out = sim.step(x, lambda _: np.zeros(2), 0.5)
        assert np.array_equal(out, x)

    def test_euler_linear_flow(self):
        pot = QuadraticPotential(goal=[0, 0], gain=np.eye(2))
        field = lambda x: -pot.gradient(x)
        out = sim.step(np.array([1.0, 0.0]), field, 0.1, integrator="euler")
        assert np.allclose(out, [0.9, 0.0], atol=1e-15)

    def test_rk4_order_against_matrix_exponential(self):
        # free-space trajectory follows xdot = -P x exactly; the one-step flow
        # map is expm(-P dt), so halving dt must shrink the error 16-fold
        pot = QuadraticPotential(goal=[0, 0], gain=GAIN)
        field = lambda x: -pot.gradient(x)
        x0 = np.array([2.0, 1.0])
        errors = []
        for dt in (0.2, 0.1, 0.05):
            exact = expm(-GAIN * dt) @ x0
            approx = sim.step(x0, field, dt)
            errors.append(np.linalg.norm(approx - exact))
        assert errors[0] / errors[1] > 12.0
        assert errors[1] / errors[2] > 12.0

    def test_outside_becomes_field_failure(self):
        config = make_config()
        field = lambda x: closed_loop_field(config.potential, config.world,
                                            ROBOT, PEN, x)
        with pytest.raises(FieldEvaluationFailed):
            sim.step(np.array([1.1, 0.0]), field, 1e-3)


class TestSimulate:
    def test_start_at_goal(self):
        config = make_config()
        traj = sim.simulate(config, np.array([4.0, -1.0]))
        assert traj.termination == "reached_goal"
        assert traj.t.shape == (1,)
        assert traj.final_error < config.goal_tol

    def test_straight_run_reaches_goal(self):
        config = make_config(dt=1e-3, t_max=60.0)
        traj = sim.simulate(config, np.array([3.0, 2.0]))
        assert traj.termination == "reached_goal"
        assert traj.min_margin >= -1e-6
        assert traj.max_v_increase <= 1e-9

    def test_records_advance_by_dt(self):
        config = make_config(t_max=0.25)
        traj = sim.simulate(config, np.array([-4.0, 3.0]))
        assert np.allclose(np.diff(traj.t), config.dt, atol=1e-12)
        assert traj.x.shape[1] == 2
        assert traj.termination == "timeout"

    def test_stall_on_undesired_equilibrium(self):
        # starting exactly on the far-side equilibrium of the disk: the
        # filtered command is identically zero and the run reports a stall
        config = make_config(potential=QuadraticPotential(goal=[4, 0],
                                                          gain=np.eye(2)),
                             t_max=10.0, record_every=100)
        traj = sim.simulate(config, np.array([-1.4, 0.0]))
        assert traj.termination == "stalled"
        assert np.allclose(traj.x[-1], [-1.4, 0.0], atol=1e-12)
        assert traj.t[-1] == pytest.approx(config.stall_window, abs=2e-3)

    def test_head_on_capture_pins_to_boundary(self):
        # approach from afar decays onto the equilibrium only asymptotically:
        # the run times out pinned at the boundary without ever leaking
        config = make_config(potential=QuadraticPotential(goal=[4, 0],
                                                          gain=np.eye(2)),
                             t_max=20.0, record_every=100)
        traj = sim.simulate(config, np.array([-3.0, 0.0]))
        assert traj.termination == "timeout"
        assert np.allclose(traj.x[-1], [-1.4, 0.0], atol=1e-2)
        assert traj.min_margin >= -1e-6

    def test_spline_world_segment(self):
        # short closed-loop segment against a spline boundary stays safe and
        # keeps the potential monotone
        theta = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        pts = np.stack([1.2 * np.cos(theta), 0.9 * np.sin(theta)], axis=1)
        world = geo.World(dimension=2, obstacles=[geo.Spline2D(pts)],
                          bounds=geo.Bounds(lo=[-6, -5], hi=[6, 5]))
        config = make_config(world=world, t_max=3.0, record_every=20)
        traj = sim.simulate(config, np.array([-3.0, 0.2]))
        assert traj.min_margin >= -1e-6
        assert traj.max_v_increase <= 1e-9
        assert traj.termination in ("timeout", "reached_goal")

    def test_empty_world_is_pure_nominal(self):
        world = geo.World(dimension=2, obstacles=[],
                          bounds=geo.Bounds(lo=[-8, -6], hi=[6, 6]))
        config = make_config(world=world, t_max=0.5)
        traj = sim.simulate(config, np.array([2.0, 0.0]))
        # matches the exact linear flow to integrator accuracy
        exact = np.array([4.0, -1.0]) + expm(-GAIN * traj.t[-1]) @ (
            np.array([2.0, 0.0]) - np.array([4.0, -1.0]))
        assert np.allclose(traj.x[-1], exact, atol=1e-9)


class TestBatchSimulate:
    def test_empty_batch(self):
        assert sim.batch_simulate(make_config(), []) == []

    def test_duplicate_initials_bitwise_identical(self):
        config = make_config(t_max=2.0)
        start = np.array([-3.0, 1.0])
        trajs = sim.batch_simulate(config, [start, start])
        assert np.array_equal(trajs[0].x, trajs[1].x)
        assert np.array_equal(trajs[0].u, trajs[1].u)
        assert np.array_equal(trajs[0].V, trajs[1].V)

    def test_batch_matches_single(self):
        config = make_config(t_max=2.0)
        starts = [np.array([-3.0, 1.0]), np.array([2.0, 3.0])]
        batch = sim.batch_simulate(config, starts)
        singles = [sim.simulate(config, s) for s in starts]
        for b, s in zip(batch, singles):
            assert np.array_equal(b.x, s.x)
            assert b.termination == s.termination

    def test_rerun_bitwise_deterministic(self):
        config = make_config(t_max=1.0)
        starts = [np.array([-3.0, 1.0]), np.array([0.0, 4.0])]
        a = sim.batch_simulate(config, starts)
        b = sim.batch_simulate(config, starts)
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.x, tb.x)

    def test_negative_start_margin_rejected(self):
        config = make_config()
        with pytest.raises(ValueError):
            sim.batch_simulate(config, [np.array([1.2, 0.0])])

    def test_monte_carlo_convergence(self):
        config = make_config(record_every=50)
        starts = sim.sample_initial_conditions(config.world, ROBOT, 30, seed=5)
        trajs = sim.batch_simulate(config, starts)
        reached = sum(t.termination == "reached_goal" for t in trajs)
        assert reached >= 29
        assert all(t.min_margin >= -1e-6 for t in trajs)
        assert all(t.max_v_increase <= 1e-9 for t in trajs)

    def test_dt_refinement_consistency(self):
        coarse = make_config(dt=2e-3, record_every=100)
        fine = make_config(dt=1e-3, record_every=100)
        start = np.array([-3.5, 0.5])
        t_coarse = sim.simulate(coarse, start)
        t_fine = sim.simulate(fine, start)
        assert t_coarse.termination == t_fine.termination == "reached_goal"
        assert abs(t_coarse.min_margin - t_fine.min_margin) < 1e-4


class TestVectorField:
    def test_far_field_is_nominal(self):
        config = make_config()
        points, vectors, weights = sim.emit_vector_field(config, (25, 25))
        far = np.linalg.norm(points, axis=1) > 2.5
        nominal = -(points - config.potential.goal) @ GAIN
        assert np.allclose(vectors[far], nominal[far], atol=1e-12)
        assert np.all(weights[far] == 0.0)

    def test_grid_filters_obstacle_cells(self):
        config = make_config()
        points, _, _ = sim.emit_vector_field(config, (40, 40))
        margins = config.world.distance_values(points) - ROBOT.clearance
        assert np.all(margins >= 0.0)
        assert len(points) < 40 * 40


class TestInitialSampler:
    def test_deterministic(self):
        config = make_config()
        a = sim.sample_initial_conditions(config.world, ROBOT, 10, seed=3)
        b = sim.sample_initial_conditions(config.world, ROBOT, 10, seed=3)
        assert np.array_equal(a, b)

    def test_margins_positive(self):
        config = make_config()
        pts = sim.sample_initial_conditions(config.world, ROBOT, 50, seed=9)
        margins = config.world.distance_values(pts) - ROBOT.clearance
        assert np.all(margins >= 0.05)
