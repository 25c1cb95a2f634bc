"""Undirected weighted converter graphs and their Laplacian matrices.

Two graphs share this representation: the DC line network (edge weights are
line conductances, in siemens) and the communication network (edge weights
are consensus gains). Node indices are 1-based in the public interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConnectivityError, NumericalError, ValidationError

__all__ = ["GridTopology", "build_laplacian", "spectral_decomposition"]


@dataclass(frozen=True)
class GridTopology:
    """Connected undirected graph with strictly positive edge weights.

    Parameters
    ----------
    n : int
        Number of nodes, labelled 1..n.
    edges : sequence of (i, j, weight)
        Undirected edges with 1-based endpoints. No self-loops, no duplicate
        edges regardless of orientation, all weights > 0. The graph must be
        connected; construction fails otherwise.
    """

    n: int
    edges: tuple = field(default=())

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"node count must be a positive integer, got {self.n!r}")
        normalized = []
        seen = set()
        for edge in self.edges:
            try:
                i, j, w = edge
            except (TypeError, ValueError):
                raise ValidationError(f"edge {edge!r} is not an (i, j, weight) triple") from None
            i, j, w = int(i), int(j), float(w)
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValidationError(f"edge ({i},{j}) references a node outside 1..{self.n}")
            if i == j:
                raise ValidationError(f"self-loop on node {i} is not allowed")
            if not (w > 0.0) or not np.isfinite(w):
                raise ValidationError(f"edge ({i},{j}) has non-positive weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValidationError(f"duplicate edge between nodes {key[0]} and {key[1]}")
            seen.add(key)
            normalized.append((i, j, w))
        object.__setattr__(self, "edges", tuple(normalized))
        self._check_connected()

    def _check_connected(self):
        # union-find; fail fast at construction
        parent = list(range(self.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j, _ in self.edges:
            ri, rj = find(i - 1), find(j - 1)
            if ri != rj:
                parent[ri] = rj
        roots = {find(a) for a in range(self.n)}
        if len(roots) > 1:
            raise ConnectivityError(
                f"graph with {self.n} nodes is disconnected ({len(roots)} components)"
            )

    def scaled(self, factor):
        """Same topology with every edge weight multiplied by `factor` (> 0)."""
        if not factor > 0:
            raise ValidationError(f"scale factor must be positive, got {factor}")
        return GridTopology(self.n, tuple((i, j, w * factor) for i, j, w in self.edges))


def build_laplacian(topology: GridTopology) -> np.ndarray:
    """Dense weighted Laplacian of a connected topology.

    L[i][j] = -w_ij on edges, L[i][i] = sum of incident weights. The result is
    symmetric positive semidefinite with exact zero row sums and a single zero
    eigenvalue (the graph is connected by construction).
    """
    n = topology.n
    L = np.zeros((n, n))
    for i, j, w in topology.edges:
        a, b = i - 1, j - 1
        L[a, b] -= w
        L[b, a] -= w
        L[a, a] += w
        L[b, b] += w
    return L


def spectral_decomposition(L: np.ndarray):
    """Eigenpairs of a symmetric matrix, ascending by eigenvalue.

    Returns a list of (eigenvalue, eigenvector) pairs with orthonormal
    eigenvectors. For a connected-graph Laplacian the first eigenvalue is zero
    (within 1e-9 of the matrix scale) with eigenvector 1/sqrt(n).
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {L.shape}")
    if not np.allclose(L, L.T, rtol=0.0, atol=1e-9 * max(1.0, np.abs(L).max())):
        raise ValidationError("matrix is not symmetric")
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on sym matrices
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return [(float(eigenvalues[k]), eigenvectors[:, k].copy()) for k in range(L.shape[0])]
