"""Nominal gradient controller and the smooth projection safety filter.

The filter subtracts a blended normal component from the nominal command:
u = kappa0 - w * (eta . kappa0) * eta, with w the penalty blend weight. When
the weight is exactly zero the nominal command passes through bit-for-bit.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import geometry, penalty
from .errors import InvalidNormal, OutsidePracticalFreeSpace, SaturatedPenalty

# Blend weights at or above this are clamped in the multi-obstacle solve.
SATURATION_CLAMP = 1.0 - 1e-9


@dataclass
class QuadraticPotential:
    """Positive-definite quadratic potential 0.5 (x - goal)' P (x - goal)."""

    goal: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)
        self.gain = np.asarray(self.gain, dtype=float)
        n = self.goal.shape[0]
        if self.gain.shape != (n, n):
            raise ValueError("gain matrix shape must match the goal dimension")
        if np.max(np.abs(self.gain - self.gain.T)) > 1e-12:
            raise ValueError("gain matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(self.gain)) <= 0.0:
            raise ValueError("gain matrix must be positive definite")

    def value(self, x: np.ndarray) -> float:
        delta = np.asarray(x, dtype=float) - self.goal
        return 0.5 * float(delta @ self.gain @ delta)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.gain @ (np.asarray(x, dtype=float) - self.goal)

    def hessian(self, x: np.ndarray | None = None) -> np.ndarray:
        return self.gain

    def value_batch(self, points: np.ndarray) -> np.ndarray:
        delta = points - self.goal
        return 0.5 * np.einsum("ij,jk,ik->i", delta, self.gain, delta)


@dataclass
class SensorReading:
    """Margin and outward normal of the closest sensed obstacle."""

    d: float
    eta: np.ndarray
    valid: bool = True


@dataclass
class FilterDiagnostics:
    """Intermediate filter quantities for logging and tests."""

    s: float
    w: float
    nominal: np.ndarray
    filtered: np.ndarray


def nominal_control(potential: QuadraticPotential, x: np.ndarray) -> np.ndarray:
    """Gradient-descent command -P (x - goal)."""
    return -potential.gradient(x)


def spf_filter(nominal: np.ndarray, reading: SensorReading,
               params: penalty.PenaltyParams) -> tuple[np.ndarray, FilterDiagnostics]:
    """Project the nominal command away from the sensed obstacle normal.

    Returns the filtered command and diagnostics. An invalid reading passes the
    nominal through unchanged with zero weight. Delegates to the batched
    implementation so scalar and batch evaluation agree bit for bit.
    """
    nominal = np.asarray(nominal, dtype=float)
    if reading.valid:
        eta = np.asarray(reading.eta, dtype=float)
        norm = np.linalg.norm(eta)
        if abs(norm - 1.0) > 1e-6:
            raise InvalidNormal(f"reading normal has norm {norm}")
    else:
        eta = np.zeros_like(nominal)
    out, s, w = spf_filter_batch(
        nominal[None, :], np.array([reading.d]), eta[None, :],
        np.array([reading.valid]), params)
    return out[0], FilterDiagnostics(s=float(s[0]), w=float(w[0]),
                                     nominal=nominal, filtered=out[0])


def spf_filter_batch(nominal: np.ndarray, margins: np.ndarray, etas: np.ndarray,
                     valid: np.ndarray, params: penalty.PenaltyParams):
    """Vectorized filter over (N, n) commands and readings.

    Invalid rows pass through with zero weight. Rows whose weight computes to
    exactly zero are copied from the nominal so pass-through is bitwise.
    Returns (filtered, s, w).
    """
    s = np.einsum("ij,ij->i", nominal, etas)
    w = penalty.blend_weight(margins, s, params)
    if not valid.all():
        w = np.where(valid, w, 0.0)
        coef = w * np.where(valid, s, 0.0)
        etas = np.where(valid[:, None], etas, 0.0)
        s = np.where(valid, s, np.inf)
    else:
        coef = w * s
    out = nominal - coef[:, None] * etas
    passthrough = w == 0.0
    if passthrough.any():
        out[passthrough] = nominal[passthrough]
    return out, s, w


def spf_filter_multi(nominal: np.ndarray, readings: list[SensorReading],
                     params: penalty.PenaltyParams) -> np.ndarray:
    """Minimize ||u - nominal||^2 + sum_i psi_i (u . eta_i)^2 in closed form.

    The first-order condition gives the linear system
    (I + sum_i psi_i eta_i eta_i') u = nominal. Weights at saturation are
    clamped just below 1 and reported through a SaturatedPenalty warning.
    """
    nominal = np.asarray(nominal, dtype=float)
    n = nominal.shape[0]
    system = np.eye(n)
    saturated = False
    for reading in readings:
        if not reading.valid:
            continue
        eta = np.asarray(reading.eta, dtype=float)
        norm = np.linalg.norm(eta)
        if abs(norm - 1.0) > 1e-6:
            raise InvalidNormal(f"reading normal has norm {norm}")
        s = float(nominal @ eta)
        w = penalty.blend_weight(reading.d, s, params)
        if w >= SATURATION_CLAMP:
            saturated = True
            w = SATURATION_CLAMP
        if w > 0.0:
            system += (w / (1.0 - w)) * np.outer(eta, eta)
    if saturated:
        warnings.warn("blend weight saturated; clamped below 1", SaturatedPenalty)
    return np.linalg.solve(system, nominal)


def closed_loop_field(potential: QuadraticPotential, world: geometry.World,
                      robot: geometry.RobotParams, params: penalty.PenaltyParams,
                      x: np.ndarray, sensor=None,
                      margin_tol: float = 1e-9) -> np.ndarray:
    """Velocity commanded at state x: sensing, nominal control, then the filter.

    ``sensor`` maps a state to a SensorReading; by default the exact-geometry
    oracle is used. Raises OutsidePracticalFreeSpace when the margin is below
    -margin_tol.
    """
    x = np.asarray(x, dtype=float)
    if world.obstacles:
        m = geometry.margin_batch(world, x[None, :], robot)[0]
        if m < -margin_tol:
            raise OutsidePracticalFreeSpace(f"margin {m} below tolerance")
    if sensor is None:
        from .sensing import oracle_reading
        reading = oracle_reading(world, x, robot)
    else:
        reading = sensor(x)
    u, _ = spf_filter(nominal_control(potential, x), reading, params)
    return u
