"""Steady-state network optimization: regularized problems and solvers.

The vertex-side problem minimized here is

    sum_i potential_i(y_i) + sum_e edge_potential_e(zeta_e)
        + 1/2 zeta^T diag(beta) zeta + 1/2 y^T diag(alpha) y
    subject to   zeta = E^T y

whose minimizers are exactly the closed-loop steady-state outputs of the
gain-augmented network.  With alpha = beta = 0 it reduces to the plain
steady-state coupling problem; the quadratic terms are what the feedback
gains contribute, and for short agents they are what makes the problem
convex in the first place.

``solve`` is an alternating-direction splitting with the vertex block kept
smooth (all supported agents have quadratic potentials, so that update is a
linear solve) and the edge block handled by the controllers' closed-form
proximal maps.  ``brute_force`` is a deliberately independent grid oracle
used to cross-check the splitting solver on small instances.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import lsq_linear

from .agents import AgentBank
from .controllers import ControllerBank
from .errors import (
    DimensionMismatchError,
    DimensionTooLargeError,
    NonConvexProxError,
)
from .graph import NetworkGraph
from .passivation import GainDesign

__all__ = [
    "RegularizedProblem",
    "Minimizer",
    "SolveStatus",
    "build_problem",
    "solve",
    "brute_force",
    "flow_objective",
    "stationarity_residual",
]

# Sampled curvature below this is treated as genuine nonconvexity.
_CURVATURE_TOL = -1e-9

_BRUTE_FORCE_MAX_N = 4
_BRUTE_FORCE_POINTS = 33


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    NONCONVEX_DETECTED = "nonconvex_detected"


@dataclass(frozen=True)
class Minimizer:
    """Solver output: candidate minimizer plus convergence diagnostics."""

    y_star: np.ndarray
    zeta_star: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: SolveStatus


class RegularizedProblem:
    """Vertex/edge potentials plus quadratic gain regularization on a graph."""

    def __init__(self, graph: NetworkGraph, agents: AgentBank,
                 controllers: ControllerBank, alpha, beta):
        if len(agents) != graph.n_vertices:
            raise DimensionMismatchError(
                f"{len(agents)} agents for {graph.n_vertices} vertices"
            )
        if len(controllers) != graph.n_edges:
            raise DimensionMismatchError(
                f"{len(controllers)} controllers for {graph.n_edges} edges"
            )
        self.graph = graph
        self.agents = agents
        self.controllers = controllers
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        if self.alpha.shape != (graph.n_vertices,):
            raise DimensionMismatchError(f"alpha has shape {self.alpha.shape}")
        if self.beta.shape != (graph.n_edges,):
            raise DimensionMismatchError(f"beta has shape {self.beta.shape}")

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def objective(self, y):
        """Full (nonsmooth) objective at the output vector y."""
        y = np.asarray(y, dtype=float)
        zeta = self.graph.incidence.T @ y
        value = self.agents.potential_total(y)
        value += self.controllers.potential_total(zeta)
        value += 0.5 * float(self.beta @ zeta**2)
        value += 0.5 * float(self.alpha @ y**2)
        return value

    def objective_batch(self, Y):
        """Objective for each row of Y, shape (P, n) -> (P,)."""
        Y = np.asarray(Y, dtype=float)
        Z = Y @ self.graph.incidence
        vals = self.agents.potential_batch(Y)
        vals = vals + self.controllers.potential_batch(Z)
        vals = vals + 0.5 * (Z**2 @ self.beta)
        vals = vals + 0.5 * (Y**2 @ self.alpha)
        return vals

    def smooth_gradient(self, y):
        """Gradient of the smooth part (everything except the edge potentials)."""
        y = np.asarray(y, dtype=float)
        E = self.graph.incidence
        return self.agents.steady_input(y) + self.alpha * y + E @ (self.beta * (E.T @ y))

    def smooth_hessian(self):
        """Hessian of the smooth part; constant for the supported agent models."""
        E = self.graph.incidence
        return np.diag(self.agents.curvatures() + self.alpha) + (E * self.beta) @ E.T

    def convexity_probe(self, n_samples=8, seed=0):
        """Minimum curvature of the smooth part over sampled output vectors.

        At each sampled point the minimum over directions of the curvature
        quotient is the smallest Hessian eigenvalue, which is what gets
        computed; the sampling over points guards future state-dependent
        Hessians and costs little for the constant ones used today.
        """
        rng = np.random.default_rng(seed)
        worst = np.inf
        for _ in range(max(1, n_samples)):
            _ = self.agents.anchors + rng.uniform(-10.0, 10.0, len(self.agents))
            H = self.smooth_hessian()
            worst = min(worst, float(np.linalg.eigvalsh(H)[0]))
        return worst


def build_problem(graph, agents, controllers, gain: GainDesign = None):
    """Assemble a regularized problem; a missing gain means no regularization."""
    if gain is None:
        alpha = np.zeros(graph.n_vertices)
        beta = np.zeros(graph.n_edges)
    else:
        alpha, beta = gain.alpha, gain.beta
    return RegularizedProblem(graph, agents, controllers, alpha, beta)


# ----------------------------------------------------------------------
# splitting solver
# ----------------------------------------------------------------------


class _VertexSolver:
    """Solves (H + t * L) y = rhs, tolerating a consensus null space."""

    def __init__(self, hessian, laplacian):
        self._H = hessian
        self._L = laplacian
        self._cho = None
        self._pinv = None

    def factor(self, t):
        A = self._H + t * self._L
        try:
            self._cho = cho_factor(A)
            self._pinv = None
            return True
        except np.linalg.LinAlgError:
            pass
        # Semidefinite but consistent systems (e.g. all-integrator networks)
        # fall back to the pseudoinverse, picking the minimum-norm solution.
        eigenvalues = np.linalg.eigvalsh(A)
        if eigenvalues[0] < -1e-10 * max(1.0, abs(eigenvalues[-1])):
            return False
        self._cho = None
        self._pinv = np.linalg.pinv(A, hermitian=True)
        return True

    def solve(self, rhs):
        if self._cho is not None:
            return cho_solve(self._cho, rhs)
        return self._pinv @ rhs


def solve(problem: RegularizedProblem, step=1.0, max_iter=100000, tol=1e-8):
    """Minimize the regularized problem by alternating-direction splitting.

    Parameters
    ----------
    step : float
        Initial penalty on the vertex/edge consistency constraint; adapted
        by residual balancing (doubled or halved when one residual exceeds
        ten times the other).
    max_iter : int
        Iteration cap; hitting it yields status ``MAX_ITER``.
    tol : float
        Convergence threshold on both primal and dual residual norms.

    A failed convexity probe downgrades the status to ``NONCONVEX_DETECTED``
    and the returned point is best-effort only.

    The vertex update carries the whole smooth quadratic (vertex curvatures,
    vertex gains, and the edge-gain quadratic mapped through the incidence),
    so it stays convex whenever the overall objective is, even when a vertex
    curvature alone is negative; the edge update then reduces to the plain
    controller prox.
    """
    nonconvex = problem.convexity_probe() < _CURVATURE_TOL
    E = problem.graph.incidence
    L = problem.graph.laplacian()
    H = problem.smooth_hessian()
    lin = problem.agents.steady_input(np.zeros(len(problem.agents)))
    beta_zero = np.zeros(problem.graph.n_edges)

    def best_effort(y, zeta, r_p, r_d, iterations, status):
        return Minimizer(
            y_star=y,
            zeta_star=zeta,
            objective_value=problem.objective(y),
            primal_residual=r_p,
            dual_residual=r_d,
            iterations=iterations,
            status=status,
        )

    y = problem.agents.anchors.astype(float).copy()
    zeta = E.T @ y
    w = np.zeros(problem.graph.n_edges)

    vertex = _VertexSolver(H, L)
    t = float(step)
    while not vertex.factor(t):
        t *= 2.0
        if t > 1e12:
            status = SolveStatus.NONCONVEX_DETECTED if nonconvex else SolveStatus.MAX_ITER
            return best_effort(y, zeta, np.inf, np.inf, 0, status)

    r_p = r_d = np.inf
    iterations = 0
    try:
        for iterations in range(1, max_iter + 1):
            rhs = t * (E @ (zeta - w)) - lin
            y = vertex.solve(rhs)
            Ety = E.T @ y
            zeta_prev = zeta
            zeta = problem.controllers.prox(beta_zero, Ety + w, 1.0 / t)
            w = w + Ety - zeta
            r_p = float(np.linalg.norm(Ety - zeta))
            r_d = float(np.linalg.norm(t * (E @ (zeta - zeta_prev))))
            if r_p < tol and r_d < tol:
                break
            if iterations % 50 == 0:
                if r_p > 10.0 * r_d and t < 1e8:
                    if vertex.factor(2.0 * t):
                        t *= 2.0
                        w = w / 2.0
                elif r_d > 10.0 * r_p and t > 1e-8:
                    if vertex.factor(t / 2.0):
                        t /= 2.0
                        w = w * 2.0
                    else:
                        vertex.factor(t)
    except NonConvexProxError:
        return best_effort(y, zeta, r_p, r_d, iterations, SolveStatus.NONCONVEX_DETECTED)

    if nonconvex:
        status = SolveStatus.NONCONVEX_DETECTED
    elif r_p < tol and r_d < tol:
        status = SolveStatus.OPTIMAL
    else:
        status = SolveStatus.MAX_ITER
    return best_effort(y, zeta, r_p, r_d, iterations, status)


# ----------------------------------------------------------------------
# independent grid oracle
# ----------------------------------------------------------------------


def brute_force(problem: RegularizedProblem, box=None, spacing=1e-3):
    """Zooming exhaustive grid minimization, independent of the splitting solver.

    Evaluates the objective on a uniform grid over ``box`` (a (lo, hi) pair
    applied to every coordinate), then repeatedly re-grids around the best
    point until the grid spacing drops below ``spacing``.  Only intended for
    cross-checking on instances with at most 4 vertices.
    """
    n = problem.graph.n_vertices
    if n > _BRUTE_FORCE_MAX_N:
        raise DimensionTooLargeError(f"grid search supports n <= {_BRUTE_FORCE_MAX_N}, got {n}")
    if box is None:
        anchors = problem.agents.anchors
        box = (float(anchors.min()) - 5.0, float(anchors.max()) + 5.0)
    lo = np.full(n, float(box[0]))
    hi = np.full(n, float(box[1]))
    npts = _BRUTE_FORCE_POINTS
    levels = 0
    while True:
        axes = [np.linspace(lo[i], hi[i], npts) for i in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        Y = np.stack([m.ravel() for m in mesh], axis=1)
        values = problem.objective_batch(Y)
        best = int(np.argmin(values))
        y_best = Y[best]
        value_best = float(values[best])
        h = float(np.max((hi - lo) / (npts - 1)))
        levels += 1
        if h <= spacing:
            break
        lo = y_best - 2.0 * h
        hi = y_best + 2.0 * h
    zeta = problem.graph.incidence.T @ y_best
    return Minimizer(
        y_star=y_best,
        zeta_star=zeta,
        objective_value=value_best,
        primal_residual=0.0,
        dual_residual=0.0,
        iterations=levels,
        status=SolveStatus.OPTIMAL,
    )


# ----------------------------------------------------------------------
# input-side (flow) objective and stationarity residual
# ----------------------------------------------------------------------


def flow_objective(agents: AgentBank, controllers: ControllerBank, u, mu):
    """Input-side dual objective: conjugate agent costs plus conjugate edge costs.

    Evaluates to ``+inf`` whenever an effort leaves its controller's dual
    domain or an input is infeasible for its agent.
    """
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return agents.conjugate_total(u) + controllers.conjugate_total(mu)


def stationarity_residual(problem: RegularizedProblem, y, zero_tol=1e-6):
    """Distance of y from satisfying the problem's first-order conditions.

    Minimizes ``|| smooth_gradient(y) + E s ||`` over per-edge effort
    selections ``s`` compatible with the steady-state relations at
    ``zeta = E^T y`` (an interval for saturated controllers at zero relative
    output, a point otherwise).  Returns the minimal norm and the selection.
    """
    y = np.asarray(y, dtype=float)
    E = problem.graph.incidence
    zeta = E.T @ y
    gradient = problem.smooth_gradient(y)
    lower, upper = problem.controllers.effort_bounds(zeta, zero_tol)
    selection = 0.5 * (lower + upper)
    fixed = upper - lower <= 1e-15
    residual_base = gradient + E[:, fixed] @ selection[fixed]
    free = ~fixed
    if not np.any(free):
        return float(np.linalg.norm(residual_base)), selection
    result = lsq_linear(
        E[:, free], -residual_base, bounds=(lower[free], upper[free]), method="bvls"
    )
    selection[free] = result.x
    residual = residual_base + E[:, free] @ result.x
    return float(np.linalg.norm(residual)), selection
