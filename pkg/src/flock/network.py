"""Graph and rigidity linear algebra for a network of agents.

Stacked vectors are flat numpy arrays laid out agent-major: agent ``i`` owns
entries ``i*d : (i+1)*d``. Edge quantities (``z``, ``e``, rows of ``R``) follow
the declared edge order. Edge ``k = (tail, head)`` has ``z_k = q_tail - q_head``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, FrameworkError

RANK_RTOL = 1e-8
CONNECTIVITY_TOL = 1e-9


def rigid_edge_count(n: int, d: int) -> int:
    """Edge count of a minimally rigid graph: ``dn - d(d+1)/2``."""
    return d * n - d * (d + 1) // 2


@dataclass(frozen=True)
class Graph:
    """Plain undirected graph on agents ``0..n-1``; no rigidity requirements."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))


@dataclass(frozen=True)
class Framework:
    """Undirected, connected, minimally rigid graph with desired edge lengths.

    Agents are 0-indexed. Validation runs on construction.
    """

    n: int
    d: int
    edges: tuple[tuple[int, int], ...]
    desired_lengths: tuple[float, ...]

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        lengths = tuple(float(x) for x in self.desired_lengths)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "desired_lengths", lengths)

        if self.n < 2:
            raise FrameworkError(f"need at least 2 agents, got n={self.n}")
        if self.d not in (2, 3):
            raise FrameworkError(f"dimension must be 2 or 3, got d={self.d}")
        if len(lengths) != len(edges):
            raise FrameworkError(
                f"{len(edges)} edges but {len(lengths)} desired lengths"
            )
        seen = set()
        for k, (a, b) in enumerate(edges):
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise FrameworkError(f"edge {k} {(a, b)} references a missing agent")
            if a == b:
                raise FrameworkError(f"edge {k} is a self-loop on agent {a}")
            key = frozenset((a, b))
            if key in seen:
                raise FrameworkError(f"edge {k} {(a, b)} duplicates an earlier edge")
            seen.add(key)
        for k, dk in enumerate(lengths):
            if not (np.isfinite(dk) and dk > 0):
                raise FrameworkError(f"desired length of edge {k} must be > 0, got {dk}")
        expected = rigid_edge_count(self.n, self.d)
        if len(edges) != expected:
            raise FrameworkError(
                f"minimal rigidity in R^{self.d} needs {expected} edges for "
                f"n={self.n}, got {len(edges)}"
            )
        if algebraic_connectivity(self) <= CONNECTIVITY_TOL:
            raise FrameworkError("graph is not connected")

    @classmethod
    def from_layout(cls, edges, positions) -> "Framework":
        """Framework whose desired lengths are read off a reference layout."""
        positions = np.asarray(positions, dtype=float)
        n, d = positions.shape
        lengths = [float(np.linalg.norm(positions[a] - positions[b])) for a, b in edges]
        return cls(n=n, d=d, edges=tuple(map(tuple, edges)), desired_lengths=tuple(lengths))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([a for a, _ in self.edges], dtype=int)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([b for _, b in self.edges], dtype=int)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array(self.desired_lengths)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return out


def _blocks(fw: Framework, x, name: str = "q") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size != fw.n * fw.d:
        raise DimensionError(
            f"{name} must hold {fw.n} blocks of size {fw.d} ({fw.n * fw.d} entries), got {x.size}"
        )
    return x.reshape(fw.n, fw.d)


def incidence_matrix(g: Graph | Framework) -> np.ndarray:
    """Node-by-edge sign matrix: +1 at the tail, -1 at the head."""
    B = np.zeros((g.n, len(g.edges)))
    for k, (a, b) in enumerate(g.edges):
        B[a, k] = 1.0
        B[b, k] = -1.0
    return B


def laplacian(g: Graph | Framework) -> np.ndarray:
    B = incidence_matrix(g)
    return B @ B.T


def stacked_laplacian(fw: Framework) -> np.ndarray:
    """``L ⊗ I_d``, acting on stacked velocities."""
    return np.kron(laplacian(fw), np.eye(fw.d))


def algebraic_connectivity(g: Graph | Framework) -> float:
    """Second-smallest Laplacian eigenvalue."""
    return float(np.linalg.eigvalsh(laplacian(g))[1])


def relative_positions(fw: Framework, q) -> np.ndarray:
    """Stacked ``z = (B ⊗ I_d)^T q``, computed blockwise."""
    Q = _blocks(fw, q)
    return (Q[fw.tails] - Q[fw.heads]).ravel()


def rigidity_matrix(fw: Framework, q) -> np.ndarray:
    """``R(z) = D(z)^T (B ⊗ I_d)``, shape ``(|E|, d n)``; half the Jacobian of squared lengths."""
    d = fw.d
    Z = relative_positions(fw, q).reshape(fw.num_edges, d)
    R = np.zeros((fw.num_edges, fw.n * d))
    for k in range(fw.num_edges):
        a, b = fw.edges[k]
        R[k, a * d:(a + 1) * d] = Z[k]
        R[k, b * d:(b + 1) * d] = -Z[k]
    return R


def distance_errors(fw: Framework, q) -> np.ndarray:
    """Squared-length errors ``e_k = |z_k|^2 - d_k^2``."""
    Z = relative_positions(fw, q).reshape(fw.num_edges, fw.d)
    return np.einsum("ij,ij->i", Z, Z) - fw.lengths**2


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_infinitesimally_minimally_rigid(fw: Framework, q, rtol: float = RANK_RTOL) -> bool:
    target = rigid_edge_count(fw.n, fw.d)
    if fw.num_edges != target:
        return False
    return numerical_rank(rigidity_matrix(fw, q), rtol) == target
