"""Penalty scaling and the bounded blend weight of the projection filter.

The filter never evaluates the unbounded penalty directly: the projection
coefficient is the product of two clamped transition profiles, which equals
psi/(1+psi) identically and stays in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidThreshold, PenaltyUnbounded


@dataclass(frozen=True)
class PenaltyParams:
    """Activation thresholds for distance (mu) and alignment (nu)."""

    mu: float
    nu: float
    blend: str = "cubic"

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if self.blend not in ("cubic", "quintic"):
            raise ValueError("blend must be 'cubic' or 'quintic'")


def transition(z, tau: float, blend: str = "cubic"):
    """Clamped descent from 1 to 0 over (0, tau).

    Returns exactly 1 for z <= 0 and exactly 0 for z >= tau. The cubic profile
    1 - 3(z/tau)^2 + 2(z/tau)^3 is C1 at both seams; the quintic variant is C2
    for callers that differentiate the filter twice.
    """
    if tau <= 0.0:
        raise InvalidThreshold("transition threshold must be positive")
    z_arr = np.asarray(z, dtype=float)
    u = np.clip(z_arr / tau, 0.0, 1.0)
    if blend == "cubic":
        mid = 1.0 - u * u * (3.0 - 2.0 * u)
    else:
        mid = 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    out = np.where(z_arr <= 0.0, 1.0, np.where(z_arr >= tau, 0.0, mid))
    if np.ndim(z) == 0:
        return float(out)
    return out


def blend_weight(d, s, params: PenaltyParams):
    """Projection coefficient w = phi_mu(d) * phi_nu(s) in [0, 1].

    Exactly 0 whenever d >= mu or s >= nu, exactly 1 iff d <= 0 and s <= 0.
    Accepts scalars or matching arrays.
    """
    return transition(d, params.mu, params.blend) * transition(s, params.nu, params.blend)


def penalty_value(d: float, s: float, params: PenaltyParams) -> float:
    """Diagnostic penalty psi = w / (1 - w); unbounded as w -> 1."""
    w = blend_weight(d, s, params)
    if w >= 1.0:
        raise PenaltyUnbounded("penalty diverges: d <= 0 and s <= 0")
    return w / (1.0 - w)
