"""Ellipsoidal Coulomb friction written as Fritz-John optimality conditions.

The friction impulses ``(p_t, p_o, p_r)`` maximize dissipated power subject to
``(p_t/e_t)^2 + (p_o/e_o)^2 + (p_r/e_r)^2 <= (mu p_n)^2``.  With multiplier
``sigma`` the optimality conditions are three equalities plus the
complementarity pair ``0 <= sigma _|_ zeta >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FrictionParams:
    mu: float = 0.22
    e_t: float = 1.0
    e_o: float = 1.0
    e_r: float = 0.1  # metres: scales the drilling moment against forces

    def __post_init__(self):
        for name in ("mu", "e_t", "e_o", "e_r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ConfigurationError("friction coefficient mu must be >= 0")
        if not (self.e_t > 0 and self.e_o > 0 and self.e_r > 0):
            raise ConfigurationError("ellipsoid constants e_t, e_o, e_r must be > 0")

    @property
    def e2(self):
        return np.array([self.e_t**2, self.e_o**2, self.e_r**2])


def slip_velocities(W, nu):
    """``(W_t^T nu, W_o^T nu, W_r^T nu)`` for a wrench basis."""
    return np.array([W.W_t @ nu, W.W_o @ nu, W.W_r @ nu])


def friction_equalities(p, sigma, nu_next, W, fp):
    """Residuals ``e_x^2 mu p_n (W_x^T nu) + p_x sigma`` for x in t, o, r.

    ``p`` is ``(p_n, p_t, p_o, p_r)``.
    """
    p_n, p_t, p_o, p_r = p
    slip = slip_velocities(W, np.asarray(nu_next, dtype=float))
    return fp.e2 * fp.mu * p_n * slip + np.array([p_t, p_o, p_r]) * sigma


def ellipsoid_slack(p, fp):
    """``zeta = (mu p_n)^2 - (p_t/e_t)^2 - (p_o/e_o)^2 - (p_r/e_r)^2``."""
    p_n, p_t, p_o, p_r = p
    return (fp.mu * p_n) ** 2 - (p_t / fp.e_t) ** 2 - (p_o / fp.e_o) ** 2 - (p_r / fp.e_r) ** 2


def dissipation(p, W, nu):
    """Friction power proxy ``p_t v_t + p_o v_o + p_r v_r`` (never positive)."""
    return float(np.asarray(p)[1:] @ slip_velocities(W, nu))
