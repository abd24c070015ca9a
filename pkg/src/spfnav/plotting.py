"""Figure rendering for run reports: worlds, trajectories, and vector fields.

All functions draw to files through the Agg backend; nothing here is needed by
the numerical pipeline. The CSV outputs stay the contract, figures ride along.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .contours import extract_contours

_TRAJ_COLORS = ("tab:blue", "tab:green", "tab:red", "black", "magenta",
                "tab:orange", "tab:purple", "tab:brown", "tab:cyan", "tab:olive")


def _world_grid(world, extent, n=241):
    lo, hi = extent
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = world.distance_values(pts).reshape(n, n)
    return xs, ys, vals


def _extent(world, margin=1.0):
    if world.bounds is not None:
        return world.bounds.lo, world.bounds.hi
    pts = np.concatenate([
        np.atleast_2d(o.reference_point) for o in world.obstacles])
    lo = pts.min(axis=0) - 4.0 * margin
    hi = pts.max(axis=0) + 4.0 * margin
    return lo, hi


def draw_world_2d(ax, world, robot, penalty=None):
    """Obstacles (dark), their dilation by R+eps (light), and the mu band."""
    if not world.obstacles:
        return
    xs, ys, vals = _world_grid(world, _extent(world))
    for loop in extract_contours(xs, ys, vals, 0.0):
        ax.fill(loop[:, 0], loop[:, 1], color="0.35", zorder=3)
    for loop in extract_contours(xs, ys, vals, robot.clearance):
        ax.fill(loop[:, 0], loop[:, 1], color="0.8", zorder=2)
    if penalty is not None:
        for loop in extract_contours(xs, ys, vals, robot.clearance + penalty.mu):
            ax.plot(loop[:, 0], loop[:, 1], "k--", linewidth=0.8, zorder=4)


def save_run_figure(path, world, robot, penalty, potential, trajectories):
    """Overview map: world, goal, and every trajectory path."""
    if world.dimension == 3:
        return _save_run_figure_3d(path, potential, trajectories)
    fig, ax = plt.subplots(figsize=(7, 6))
    draw_world_2d(ax, world, robot, penalty)
    for i, traj in enumerate(trajectories):
        color = _TRAJ_COLORS[i % len(_TRAJ_COLORS)]
        ax.plot(traj.x[:, 0], traj.x[:, 1], color=color, linewidth=1.2, zorder=5)
        ax.plot(traj.x[0, 0], traj.x[0, 1], "o", color=color, markersize=4, zorder=6)
    ax.plot(*potential.goal, "r*", markersize=14, zorder=7)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _save_run_figure_3d(path, potential, trajectories):
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    for i, traj in enumerate(trajectories):
        color = _TRAJ_COLORS[i % len(_TRAJ_COLORS)]
        ax.plot(traj.x[:, 0], traj.x[:, 1], traj.x[:, 2], color=color,
                linewidth=1.0)
        ax.scatter(*traj.x[0], color=color, s=12)
    ax.scatter(*potential.goal, color="red", marker="*", s=80)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_timeseries_figure(path, trajectories):
    """Control magnitude, obstacle margin, and blend weight over time."""
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for i, traj in enumerate(trajectories):
        color = _TRAJ_COLORS[i % len(_TRAJ_COLORS)]
        speed = np.linalg.norm(traj.u, axis=1)
        axes[0].plot(traj.t, speed, color=color, linewidth=0.9)
        axes[1].plot(traj.t, traj.d, color=color, linewidth=0.9)
        axes[2].plot(traj.t, traj.w, color=color, linewidth=0.9)
    axes[0].set_ylabel("|u|")
    axes[1].set_ylabel("margin d")
    axes[1].axhline(0.0, color="k", linewidth=0.6, linestyle=":")
    axes[2].set_ylabel("blend w")
    axes[2].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_field_figure(path, world, robot, penalty, potential, points, vectors,
                      weights):
    """Quiver of the closed-loop field with the dilation contours."""
    fig, ax = plt.subplots(figsize=(7, 6))
    draw_world_2d(ax, world, robot, penalty)
    speed = np.linalg.norm(vectors, axis=1)
    scale = np.where(speed > 1e-12, speed, 1.0)
    ax.quiver(points[:, 0], points[:, 1],
              vectors[:, 0] / scale, vectors[:, 1] / scale,
              weights, cmap="viridis", scale=45.0, width=2.2e-3, zorder=5)
    ax.plot(*potential.goal, "r*", markersize=14, zorder=7)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_equilibria_figure(path, world, robot, potential, reports):
    """World map with located equilibria marked by their verdict."""
    fig, ax = plt.subplots(figsize=(7, 6))
    draw_world_2d(ax, world, robot)
    for report in reports:
        marker = "x" if report.unstable else ("s" if not report.indefinite else "D")
        color = "tab:red" if report.unstable else "tab:purple"
        ax.plot(report.location[0], report.location[1], marker, color=color,
                markersize=9, zorder=6)
    ax.plot(*potential.goal, "r*", markersize=14, zorder=7)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
