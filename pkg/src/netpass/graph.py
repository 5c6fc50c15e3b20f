"""Undirected graphs with an oriented incidence matrix and Laplacian spectrum.

Vertices are numbered 0..n-1.  Every edge carries an arbitrary but fixed
orientation, recorded as a (head, tail) pair; the incidence matrix has +1 at
the head and -1 at the tail of each edge column.  All symmetric quantities
derived here (Laplacian, algebraic connectivity, component structure) are
independent of the chosen orientation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DisconnectedGraphError,
    DuplicateEdgeError,
    SelfLoopError,
    VertexIndexError,
)

__all__ = ["NetworkGraph"]

# Eigenvalues below this count as zero when estimating the Laplacian kernel.
_KERNEL_TOL = 1e-9


@dataclass(frozen=True)
class NetworkGraph:
    """Immutable undirected graph with oriented incidence matrix.

    Parameters
    ----------
    n_vertices : int
        Number of vertices, at least 1.
    edges : sequence of (int, int)
        Oriented edge list.  Self loops and repeated undirected edges are
        rejected; vertex indices must lie in ``0..n_vertices-1``.

    Attributes
    ----------
    incidence : ndarray, shape (n_vertices, n_edges)
        +1 at each edge's head row, -1 at its tail row.
    """

    n_vertices: int
    edges: tuple
    incidence: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_vertices
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise VertexIndexError(f"n_vertices must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_vertices", int(n))
        edges = tuple((int(h), int(t)) for h, t in self.edges)
        object.__setattr__(self, "edges", edges)

        seen = set()
        for k, (head, tail) in enumerate(edges):
            if not (0 <= head < n and 0 <= tail < n):
                raise VertexIndexError(
                    f"edge {k} = ({head}, {tail}) references a vertex outside 0..{n - 1}"
                )
            if head == tail:
                raise SelfLoopError(f"edge {k} is a self loop at vertex {head}")
            key = (min(head, tail), max(head, tail))
            if key in seen:
                raise DuplicateEdgeError(f"edge {k} = ({head}, {tail}) repeats {key}")
            seen.add(key)

        inc = np.zeros((n, len(edges)))
        for k, (head, tail) in enumerate(edges):
            inc[head, k] = 1.0
            inc[tail, k] = -1.0
        inc.setflags(write=False)
        object.__setattr__(self, "incidence", inc)

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------

    @classmethod
    def complete(cls, n):
        """Complete graph on n vertices, edges oriented low index -> high."""
        return cls(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def path(cls, n):
        """Path graph 0-1-...-(n-1)."""
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def from_dict(cls, d):
        return cls(d["n"], tuple((e[0], e[1]) for e in d["edges"]))

    def to_dict(self):
        return {"n": self.n_vertices, "edges": [list(e) for e in self.edges]}

    # ------------------------------------------------------------------
    # derived quantities
    # ------------------------------------------------------------------

    @property
    def n_edges(self):
        return len(self.edges)

    def laplacian(self):
        """Graph Laplacian, the Gram matrix of the incidence rows."""
        return self.incidence @ self.incidence.T

    def connected_components(self):
        """Partition of the vertex set, each component sorted, ordered by minimum."""
        n = self.n_vertices
        adjacency = [[] for _ in range(n)]
        for head, tail in self.edges:
            adjacency[head].append(tail)
            adjacency[tail].append(head)
        seen = [False] * n
        components = []
        for start in range(n):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            comp = []
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in adjacency[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            components.append(sorted(comp))
        return components

    def is_connected(self):
        return len(self.connected_components()) == 1

    def algebraic_connectivity(self):
        """Second-smallest Laplacian eigenvalue; positive exactly on connected graphs.

        Raises
        ------
        DisconnectedGraphError
            If the graph has more than one connected component.
        """
        if not self.is_connected():
            raise DisconnectedGraphError(
                f"graph has {len(self.connected_components())} components"
            )
        if self.n_vertices == 1:
            raise DisconnectedGraphError("single vertex has no spectral gap")
        eigenvalues = np.linalg.eigvalsh(self.laplacian())
        return float(eigenvalues[1])

    def subgraph(self, vertices):
        """Induced subgraph on ``vertices`` (reindexed 0..k-1) plus the kept edge ids."""
        index = {v: i for i, v in enumerate(vertices)}
        kept_edges = []
        kept_ids = []
        for k, (head, tail) in enumerate(self.edges):
            if head in index and tail in index:
                kept_edges.append((index[head], index[tail]))
                kept_ids.append(k)
        return NetworkGraph(len(vertices), tuple(kept_edges)), kept_ids
