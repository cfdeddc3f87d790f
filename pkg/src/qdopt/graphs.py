"""Weighted undirected graphs and the Laplacian spectral objects consumed by
the parameter formulas.

The Laplacian action used by the simulators is pinned to one canonical
arithmetic form so that independent implementations can reproduce results
bit-for-bit: for each agent ``i`` the sum ``sum_j L_ij v_j`` is accumulated as

    sum over neighbors j of i, in ascending j, of  w_ij * (v_i - v_j)

with left-to-right float64 additions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConnectivityRetryExhausted,
    DisconnectedGraph,
    DuplicateEdge,
    EigensolverFailure,
    InvalidIndex,
)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass
class UndirectedGraph:
    """Symmetric nonnegative weight matrix with zero diagonal, connected.

    Attributes
    ----------
    n : int
        Agent count (>= 2).
    weights : ndarray, shape (n, n)
        Symmetric weights, ``weights[i, i] == 0``.
    """

    n: int
    weights: np.ndarray
    _edge_src: np.ndarray = field(init=False, repr=False)
    _edge_dst: np.ndarray = field(init=False, repr=False)
    _edge_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.n, self.n):
            raise InvalidIndex(f"weight matrix shape {w.shape} != ({self.n}, {self.n})")
        if not np.array_equal(w, w.T):
            raise DuplicateEdge("weight matrix is not symmetric")
        if np.any(np.diag(w) != 0.0):
            raise InvalidIndex("self-loops are not allowed")
        if np.any(w < 0.0):
            raise InvalidIndex("weights must be nonnegative")
        self.weights = w
        self.weights.setflags(write=False)
        if not self._connected():
            raise DisconnectedGraph("graph is not connected")
        # Directed edge list sorted by (dst agent, src neighbor); this is the
        # canonical accumulation order of laplacian_action.
        dst, src = np.nonzero(w)
        order = np.lexsort((src, dst))
        self._edge_dst = dst[order]
        self._edge_src = src[order]
        self._edge_w = w[self._edge_dst, self._edge_src]

    def _connected(self) -> bool:
        uf = _UnionFind(self.n)
        ii, jj = np.nonzero(np.triu(self.weights))
        for i, j in zip(ii.tolist(), jj.tolist()):
            uf.union(i, j)
        root = uf.find(0)
        return all(uf.find(i) == root for i in range(1, self.n))

    @property
    def degrees(self) -> np.ndarray:
        """Weighted degree of every agent."""
        return self.weights.sum(axis=1)

    @property
    def max_degree(self) -> float:
        return float(self.degrees.max())

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.weights[i])[0]

    def laplacian(self) -> np.ndarray:
        return np.diag(self.degrees) - self.weights

    def laplacian_action(self, v: np.ndarray) -> np.ndarray:
        """Apply the Laplacian row-wise in the canonical edge order.

        ``v`` has shape (n,) or (n, m); the result matches ``L @ v`` up to
        rounding, with a reproducible summation order.
        """
        out = np.zeros_like(v, dtype=float)
        terms = (v[self._edge_dst] - v[self._edge_src])
        if terms.ndim == 1:
            terms = terms * self._edge_w
        else:
            terms = terms * self._edge_w[:, None]
        np.add.at(out, self._edge_dst, terms)
        return out


def build_graph(n: int, edges) -> UndirectedGraph:
    """Build a graph from an edge list of ``(i, j, weight)`` triples.

    Raises
    ------
    InvalidIndex
        Endpoint out of range, self-loop, or nonpositive weight.
    DuplicateEdge
        Same unordered pair listed twice with different weights.
    DisconnectedGraph
        Resulting graph is not connected.
    """
    if n < 2:
        raise InvalidIndex("need at least two agents")
    w = np.zeros((n, n))
    seen: dict[tuple[int, int], float] = {}
    for i, j, weight in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidIndex(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise InvalidIndex(f"self-loop at {i}")
        if weight <= 0:
            raise InvalidIndex(f"edge ({i}, {j}) has nonpositive weight {weight}")
        key = (min(i, j), max(i, j))
        if key in seen and seen[key] != weight:
            raise DuplicateEdge(f"edge {key} listed with weights {seen[key]} and {weight}")
        seen[key] = float(weight)
        w[i, j] = w[j, i] = float(weight)
    return UndirectedGraph(n, w)


def random_connected_graph(n: int, edge_prob: float, seed: int,
                           max_attempts: int = 1000) -> UndirectedGraph:
    """Erdos-Renyi draw with unit weights, resampled until connected.

    Deterministic for a given seed: each attempt consumes a fresh block of
    the same seeded stream.
    """
    if not (0 < edge_prob <= 1):
        raise InvalidIndex(f"edge_prob {edge_prob} outside (0, 1]")
    if n < 2:
        raise InvalidIndex("need at least two agents")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        upper = rng.random((n, n)) < edge_prob
        w = np.triu(upper, k=1).astype(float)
        w = w + w.T
        try:
            return UndirectedGraph(n, w)
        except DisconnectedGraph:
            continue
    raise ConnectivityRetryExhausted(
        f"no connected draw in {max_attempts} attempts (n={n}, p={edge_prob})")


@dataclass
class LaplacianSpectrum:
    """Spectral objects of a connected graph Laplacian.

    ``pseudo`` is the matrix P with ``P L = L P = centering`` built from the
    eigendecomposition, with the inverse top eigenvalue placed on the
    consensus direction (so ``P @ ones = ones / rho``).
    """

    laplacian: np.ndarray
    eigenvalues: np.ndarray        # ascending, eigenvalues[0] ~ 0
    rho: float                     # largest eigenvalue
    rho_min: float                 # smallest nonzero eigenvalue
    max_degree: float              # max weighted degree
    centering: np.ndarray          # I - (1/n) 11^T
    pseudo: np.ndarray             # P
    n: int

    @property
    def tol_lin(self) -> float:
        """Tolerance for matrix identity checks: 1e-9 * n * rho."""
        return 1e-9 * self.n * self.rho


def spectrum(g: UndirectedGraph) -> LaplacianSpectrum:
    """Eigendecompose the Laplacian and build the centering/pseudo matrices.

    Raises ``EigensolverFailure`` when the decomposition violates the
    structural identities (zero bottom eigenvalue, positive connectivity
    eigenvalue, ``P L = centering``).
    """
    lap = g.laplacian()
    n = g.n
    try:
        evals, evecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numpy rarely fails
        raise EigensolverFailure(str(exc)) from exc
    rho = float(evals[-1])
    if rho <= 0:
        raise EigensolverFailure("nonpositive top eigenvalue on a connected graph")
    if abs(evals[0]) > 1e-10 * rho:
        raise EigensolverFailure(
            f"bottom eigenvalue {evals[0]:.3e} not numerically zero (rho={rho:.3e})")
    rho_min = float(evals[1])
    if rho_min <= 1e-12 * rho:
        raise EigensolverFailure(
            f"connectivity eigenvalue {rho_min:.3e} not positive; graph must be connected")

    # Replace the (simple) zero eigenvector by the exact consensus direction.
    evecs = evecs.copy()
    evecs[:, 0] = 1.0 / np.sqrt(n)
    inv = np.empty(n)
    inv[0] = 1.0 / rho
    inv[1:] = 1.0 / evals[1:]
    pseudo = (evecs * inv) @ evecs.T
    centering = np.eye(n) - np.full((n, n), 1.0 / n)

    spec = LaplacianSpectrum(
        laplacian=lap,
        eigenvalues=evals,
        rho=rho,
        rho_min=rho_min,
        max_degree=g.max_degree,
        centering=centering,
        pseudo=pseudo,
        n=n,
    )
    err = np.abs(pseudo @ lap - centering).max()
    if err > spec.tol_lin:
        raise EigensolverFailure(f"pseudo-inverse identity off by {err:.3e}")
    return spec


def mixing_radius(spec: LaplacianSpectrum, beta: float) -> float:
    """Spectral radius of the centered mixing matrix I - beta L - (1/n)11^T.

    Equals ``max over nonzero eigenvalues of |1 - beta * lambda_i|``; the
    consensus direction contributes 1 - 1 = 0 and never dominates for beta in
    the admissible range.
    """
    return float(np.abs(1.0 - beta * spec.eigenvalues[1:]).max())


# ---------------------------------------------------------------------------
# Text file format: "n <count>" then "e <i> <j> <weight>" records, 0-indexed,
# '#' starts a comment.

def save_graph(g: UndirectedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {g.n}\n")
        ii, jj = np.nonzero(np.triu(g.weights))
        for i, j in zip(ii.tolist(), jj.tolist()):
            fh.write(f"e {i} {j} {float(g.weights[i, j])!r}\n")


def load_graph(path) -> UndirectedGraph:
    """Parse a graph file. Rejects records whose pair repeats with a
    different weight and files without a leading agent count."""
    n = None
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "n" and len(parts) == 2:
                if n is not None:
                    raise InvalidIndex(f"line {lineno}: repeated agent count")
                n = int(parts[1])
            elif parts[0] == "e" and len(parts) == 4:
                if n is None:
                    raise InvalidIndex(f"line {lineno}: edge before agent count")
                edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
            else:
                raise InvalidIndex(f"line {lineno}: unrecognized record {line!r}")
    if n is None:
        raise InvalidIndex("missing agent count record")
    return build_graph(n, edges)
