"""Edge controllers: dynamics, flow potentials, and proximal maps.

Controllers live on edges and map relative outputs (differences across an
edge) to coupling efforts.  Each model is maximal equilibrium-independent
passive; its steady-state relation is the subdifferential of a convex
potential.  The proximal map solves, in closed form,

    argmin_z  potential(z) + beta/2 * z**2 + 1/(2*step) * (z - v)**2

which is the edge-separable inner step of the operator-splitting solver.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonConvexProxError

__all__ = ["TanhIntegratorController", "StaticGainController", "ControllerBank"]

# Slack allowed beyond the unit interval when evaluating the saturated
# controller's conjugate potential (an indicator of [-1, 1]).
_INDICATOR_TOL = 1e-9


def _soft_threshold(v, amount):
    return math.copysign(max(abs(v) - amount, 0.0), v)


@dataclass(frozen=True)
class TanhIntegratorController:
    """Saturated integrating controller: d(eta)/dt = zeta, mu = tanh(eta).

    Its steady-state relation is the sign relation (any effort in [-1, 1]
    at zero relative output, else the saturation value), so the associated
    potential is the absolute value and its conjugate is the indicator of
    the unit interval.
    """

    def drift(self, eta, zeta):
        return zeta

    def output(self, eta, zeta):
        return math.tanh(eta)

    def potential(self, zeta):
        return abs(zeta)

    def prox_regularized(self, beta, v, step):
        """Closed-form prox of ``|.| + beta/2 (.)**2`` with parameter ``step``."""
        if step <= 0.0:
            raise ValueError(f"prox step must be positive, got {step}")
        if beta < 0.0:
            raise NonConvexProxError("negative quadratic weight makes the prox nonconvex")
        return _soft_threshold(v, step) / (1.0 + step * beta)

    def conjugate_potential(self, mu):
        return 0.0 if abs(mu) <= 1.0 + _INDICATOR_TOL else math.inf

    def effort_interval(self, zeta, zero_tol):
        """Steady-state effort selections compatible with relative output zeta."""
        if abs(zeta) <= zero_tol:
            return (-1.0, 1.0)
        s = math.copysign(1.0, zeta)
        return (s, s)


@dataclass(frozen=True)
class StaticGainController:
    """Memoryless proportional coupling mu = w * zeta with w > 0."""

    w: float

    def __post_init__(self):
        if self.w <= 0.0:
            raise ValueError(f"static gain needs w > 0, got {self.w}")

    def drift(self, eta, zeta):
        return 0.0

    def output(self, eta, zeta):
        return self.w * zeta

    def potential(self, zeta):
        return 0.5 * self.w * zeta**2

    def prox_regularized(self, beta, v, step):
        if step <= 0.0:
            raise ValueError(f"prox step must be positive, got {step}")
        if self.w + beta < 0.0:
            raise NonConvexProxError("quadratic weight below -w makes the prox nonconvex")
        return v / (1.0 + step * (self.w + beta))

    def conjugate_potential(self, mu):
        return mu**2 / (2.0 * self.w)

    def effort_interval(self, zeta, zero_tol):
        mu = self.w * zeta
        return (mu, mu)


class ControllerBank:
    """Ordered collection of edge controllers with vectorized operations."""

    def __init__(self, controllers):
        self.controllers = tuple(controllers)
        self._saturated = np.array(
            [isinstance(c, TanhIntegratorController) for c in self.controllers],
            dtype=bool,
        )
        self._w = np.array(
            [c.w if isinstance(c, StaticGainController) else 0.0 for c in self.controllers],
            dtype=float,
        )

    def __len__(self):
        return len(self.controllers)

    def _check(self, vec, name):
        if np.shape(vec) != (len(self.controllers),):
            raise DimensionMismatchError(
                f"{name} has shape {np.shape(vec)}, expected ({len(self.controllers)},)"
            )

    def drift(self, eta, zeta):
        return np.where(self._saturated, zeta, 0.0)

    def output(self, eta, zeta):
        return np.where(self._saturated, np.tanh(eta), self._w * zeta)

    def output_rate(self, eta, zeta, zeta_dot):
        """Time derivative of the controller outputs along a trajectory."""
        sat = 1.0 - np.tanh(eta) ** 2
        return np.where(self._saturated, sat * zeta, self._w * zeta_dot)

    def potential_total(self, zeta):
        self._check(zeta, "zeta")
        vals = np.where(self._saturated, np.abs(zeta), 0.5 * self._w * zeta**2)
        return float(vals.sum())

    def potential_batch(self, Z):
        """Summed edge potentials for a batch of edge vectors, (P, m) -> (P,)."""
        vals = np.where(self._saturated, np.abs(Z), 0.5 * self._w * Z**2)
        return vals.sum(axis=1)

    def prox(self, beta, v, step):
        """Vectorized regularized prox across all edges."""
        self._check(beta, "beta")
        self._check(v, "v")
        if step <= 0.0:
            raise ValueError(f"prox step must be positive, got {step}")
        if np.any(self._saturated & (np.asarray(beta) < 0.0)):
            raise NonConvexProxError("negative quadratic weight makes the prox nonconvex")
        if np.any(~self._saturated & (self._w + np.asarray(beta) < 0.0)):
            raise NonConvexProxError("quadratic weight below -w makes the prox nonconvex")
        shrunk = np.sign(v) * np.maximum(np.abs(v) - step, 0.0)
        saturated_value = shrunk / (1.0 + step * np.asarray(beta))
        static_value = v / (1.0 + step * (self._w + np.asarray(beta)))
        return np.where(self._saturated, saturated_value, static_value)

    def conjugate_total(self, mu):
        self._check(mu, "mu")
        return float(sum(c.conjugate_potential(m) for c, m in zip(self.controllers, mu)))

    def effort_bounds(self, zeta, zero_tol=1e-6):
        """Per-edge bounds on steady-state effort selections at ``zeta``."""
        self._check(zeta, "zeta")
        lower = np.empty(len(self.controllers))
        upper = np.empty(len(self.controllers))
        for k, c in enumerate(self.controllers):
            lower[k], upper[k] = c.effort_interval(zeta[k], zero_tol)
        return lower, upper
