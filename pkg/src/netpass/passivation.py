"""Synthesis of network-level feedback gains that passivate short agents.

The closed loop applies, on top of the diffusive coupling, an edge-wise
relative-output feedback with gains ``beta`` and an optional vertex-wise
output feedback with gains ``alpha``.  The interconnection is passivating
exactly when

    X = diag(rho + alpha) + E diag(beta) E^T

is positive definite, where ``rho`` collects the agents' passivity indices
and ``E`` is the oriented incidence matrix.  Because the incidence rows sum
to zero, ``1^T X 1 = sum(rho + alpha)`` regardless of ``beta``: edge gains
alone can never rescue a vertex set whose indices sum non-positive, which is
what makes the positive-sum condition both necessary and sufficient.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    CertificateError,
    DimensionMismatchError,
    DisconnectedGraphError,
    EmptySelfRegulatingSetError,
    NotPassivizableError,
    VertexIndexError,
)
from .graph import NetworkGraph

__all__ = [
    "GainDesign",
    "Certificate",
    "coupling_matrix",
    "passivation_feasible",
    "edge_gain_threshold",
    "uniform_network_gain",
    "hybrid_gain",
    "check_design",
    "zero_design",
]


@dataclass(frozen=True)
class GainDesign:
    """A synthesized feedback gain with its positive-definiteness margin.

    Attributes
    ----------
    alpha : ndarray, shape (n,)
        Vertex output-feedback gains (zero for network-only designs).
    beta : ndarray, shape (m,)
        Edge relative-output gains.
    epsilon : float
        Margin added above the synthesis threshold.
    threshold : float
        The threshold the edge gains exceed (max over components).
    certificate : float
        Smallest eigenvalue of the coupling matrix X for this design.
    """

    alpha: np.ndarray
    beta: np.ndarray
    epsilon: float
    threshold: float
    certificate: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Certificate:
    """Result of checking a candidate design."""

    min_eig: float
    tol: float
    positive_definite: bool


def _as_vector(values, length, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape != (length,):
        raise DimensionMismatchError(
            f"{name} has shape {arr.shape}, expected ({length},)"
        )
    return arr


def coupling_matrix(rho, alpha, beta, graph: NetworkGraph):
    """Assemble X = diag(rho + alpha) + E diag(beta) E^T."""
    rho = _as_vector(rho, graph.n_vertices, "rho")
    alpha = _as_vector(alpha, graph.n_vertices, "alpha")
    beta = _as_vector(beta, graph.n_edges, "beta")
    E = graph.incidence
    return np.diag(rho + alpha) + (E * beta) @ E.T


def passivation_feasible(rho, graph: NetworkGraph):
    """True when every connected component has a positive index sum."""
    rho = _as_vector(rho, graph.n_vertices, "rho")
    return all(rho[comp].sum() > 0.0 for comp in graph.connected_components())


def edge_gain_threshold(rho, graph: NetworkGraph):
    """Uniform edge gain above which the coupling matrix is positive definite.

    Valid on connected graphs with a positive index sum.  The bound is

        max(0, lambda_max((n / sum(rho)) E^T R^2 E - E^T R E)
               / algebraic_connectivity(graph)**2)

    with R = diag(rho); any uniform edge gain strictly above it certifies.
    """
    rho = _as_vector(rho, graph.n_vertices, "rho")
    if not graph.is_connected():
        raise DisconnectedGraphError("edge gain threshold needs a connected graph")
    total = rho.sum()
    if total <= 0.0:
        raise NotPassivizableError(
            f"index sum {total} is not positive; no edge gain can passivate"
        )
    if graph.n_edges == 0:
        return 0.0
    E = graph.incidence
    quad = (graph.n_vertices / total) * (E.T * rho**2) @ E - (E.T * rho) @ E
    top = float(np.linalg.eigvalsh(quad)[-1])
    lam2 = graph.algebraic_connectivity()
    return max(0.0, top / lam2**2)


def _default_epsilon(threshold):
    return 0.1 * max(1.0, threshold)


def _certified(alpha, beta, epsilon, threshold, rho, graph):
    certificate = float(np.linalg.eigvalsh(coupling_matrix(rho, alpha, beta, graph))[0])
    if certificate <= 0.0:
        raise CertificateError(
            f"synthesized design is not positive definite (min eig {certificate})"
        )
    return GainDesign(alpha, beta, epsilon, threshold, certificate)


def uniform_network_gain(rho, graph: NetworkGraph, epsilon=None):
    """Network-only design: zero vertex gains, uniform edge gains per component.

    Each connected component gets its own threshold; every edge receives its
    component's threshold plus ``epsilon`` (default 0.1 * max(1, threshold)).

    Raises
    ------
    NotPassivizableError
        If some component's index sum is not positive.
    CertificateError
        If the synthesized design unexpectedly fails its own check.
    """
    rho = _as_vector(rho, graph.n_vertices, "rho")
    if epsilon is not None and epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    components = graph.connected_components()
    for comp in components:
        if rho[comp].sum() <= 0.0:
            raise NotPassivizableError(
                f"component {comp} has index sum {rho[comp].sum()}; "
                "edge gains cannot passivate it"
            )
    beta = np.zeros(graph.n_edges)
    thresholds = []
    per_edge_threshold = np.zeros(graph.n_edges)
    for comp in components:
        sub, edge_ids = graph.subgraph(comp)
        if sub.n_edges == 0:
            continue
        b = edge_gain_threshold(rho[comp], sub)
        thresholds.append(b)
        per_edge_threshold[edge_ids] = b
    threshold = max(thresholds, default=0.0)
    if epsilon is None:
        epsilon = _default_epsilon(threshold)
    beta = per_edge_threshold + epsilon
    alpha = np.zeros(graph.n_vertices)
    return _certified(alpha, beta, float(epsilon), threshold, rho, graph)


def hybrid_gain(rho, graph: NetworkGraph, self_regulating, epsilon=None):
    """Sparse vertex gain on one self-regulating vertex, then edge gains.

    When the index sum is already positive no vertex gain is needed and the
    design reduces to the network-only one.  Otherwise the lowest-index
    vertex allowed to self-regulate receives ``1 - sum(rho)``, lifting the
    corrected index sum to exactly 1, after which the edge-gain synthesis
    applies to the corrected indices.

    Raises
    ------
    EmptySelfRegulatingSetError
        If the index sum is not positive and no vertex may self-regulate.
    """
    rho = _as_vector(rho, graph.n_vertices, "rho")
    if not graph.is_connected():
        raise DisconnectedGraphError("hybrid synthesis needs a connected graph")
    self_regulating = sorted(int(i) for i in self_regulating)
    for i in self_regulating:
        if not 0 <= i < graph.n_vertices:
            raise VertexIndexError(f"self-regulating vertex {i} outside 0..{graph.n_vertices - 1}")
    alpha = np.zeros(graph.n_vertices)
    total = rho.sum()
    if total <= 0.0:
        if not self_regulating:
            raise EmptySelfRegulatingSetError(
                "index sum is not positive and no vertex may self-regulate"
            )
        alpha[self_regulating[0]] = 1.0 - total
    corrected = rho + alpha
    threshold = edge_gain_threshold(corrected, graph) if graph.n_edges else 0.0
    if epsilon is None:
        epsilon = _default_epsilon(threshold)
    elif epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    beta = np.full(graph.n_edges, threshold + epsilon)
    return _certified(alpha, beta, float(epsilon), threshold, rho, graph)


def check_design(rho, alpha, beta, graph: NetworkGraph):
    """Smallest eigenvalue of the coupling matrix and a scale-aware verdict."""
    X = coupling_matrix(rho, alpha, beta, graph)
    min_eig = float(np.linalg.eigvalsh(X)[0])
    tol = 1e-9 * (1.0 + float(np.linalg.norm(X, np.inf))) if X.size else 1e-9
    return Certificate(min_eig, tol, bool(min_eig > tol))


def zero_design(rho, graph: NetworkGraph):
    """The do-nothing design (alpha = beta = 0); certifies only if all indices are positive."""
    rho = _as_vector(rho, graph.n_vertices, "rho")
    alpha = np.zeros(graph.n_vertices)
    beta = np.zeros(graph.n_edges)
    certificate = float(np.linalg.eigvalsh(coupling_matrix(rho, alpha, beta, graph))[0])
    return GainDesign(alpha, beta, 0.0, 0.0, certificate)
