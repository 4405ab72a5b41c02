"""Metric graphs, vertex boundary conditions and the reduction to one product problem.

Every edge contributes two copies of ``T*R^n`` (source end, then target end).
Configuration vectors live in ``R^{2 n E}`` with slot ``2e`` for the source
and ``2e + 1`` for the target of edge ``e``.  Phase vectors live in
``R^{4 n E}``, each slot laid out ``(p, q)``; source slots carry ``-sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .jacobi import LinearHamiltonianSystem, LQEdgeData, flow, jacobi_from_lq
from .symplectic import (
    LagrangianFrame,
    SymplecticMatrix,
    SymplecticSpace,
    Tolerances,
    _tol,
    signed_space,
)


@dataclass(frozen=True)
class Edge:
    src: int
    tgt: int
    length: float = 1.0


@dataclass(frozen=True, eq=False)
class MetricGraph:
    vertices: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        nv = len(self.vertices)
        if not self.edges:
            raise ValueError("graph has no edges")
        for i, e in enumerate(self.edges):
            for end in ("src", "tgt"):
                v = getattr(e, end)
                if not (isinstance(v, (int, np.integer)) and 0 <= v < nv):
                    raise IndexError(f"edges[{i}].{end}: no vertex {v!r}")
            if not (np.isfinite(e.length) and e.length > 0):
                raise ValueError(f"edges[{i}].length must be positive and finite")
        lonely = set(range(nv)) - {v for e in self.edges for v in (e.src, e.tgt)}
        if lonely:
            names = [self.vertices[v] for v in sorted(lonely)]
            raise ValueError(f"vertices without incident edges: {names}")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def slot_vertex(self) -> list[int]:
        """Vertex attached to each edge-endpoint slot."""
        out = []
        for e in self.edges:
            out += [e.src, e.tgt]
        return out

    def slots_of(self, v: int) -> list[int]:
        return [j for j, w in enumerate(self.slot_vertex()) if w == v]

    def index(self, name) -> int:
        return self.vertices.index(name)


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Tangent boundary data at the vertices.

    ``per_vertex``: ``data[v]`` is an ``n x d_v`` frame of ``T_v N_v``.
    ``general``: ``data`` is an ``(n |V|) x d`` frame, vertex-major.
    """

    mode: str
    n: int
    data: object

    def __post_init__(self):
        if self.mode == "per_vertex":
            frames = tuple(np.asarray(F, dtype=float).reshape(self.n, -1) for F in self.data)
            for v, F in enumerate(frames):
                if F.shape[1] > self.n or (F.size and np.linalg.matrix_rank(F) < F.shape[1]):
                    raise ValueError(f"boundary.data[{v}] is not a full-rank frame in R^{self.n}")
            object.__setattr__(self, "data", frames)
        elif self.mode == "general":
            F = np.asarray(self.data, dtype=float)
            if F.ndim == 1:
                F = F[:, None]
            if F.shape[0] % self.n or (F.size and np.linalg.matrix_rank(F) < F.shape[1]):
                raise ValueError("general boundary frame has bad shape or rank")
            object.__setattr__(self, "data", F)
        else:
            raise ValueError(f"unknown boundary mode {self.mode!r}")

    @classmethod
    def per_vertex(cls, frames, n: int) -> BoundaryCondition:
        return cls("per_vertex", n, tuple(frames))

    @classmethod
    def fixed(cls, n_vertices: int, n: int) -> BoundaryCondition:
        return cls("per_vertex", n, tuple(np.zeros((n, 0)) for _ in range(n_vertices)))

    @classmethod
    def from_flags(cls, free, n: int) -> BoundaryCondition:
        """Each vertex fixed (False) or free (True)."""
        return cls(
            "per_vertex", n, tuple(np.eye(n) if f else np.zeros((n, 0)) for f in free)
        )

    def vertex_frame(self, n_vertices: int) -> np.ndarray:
        """Frame of ``T N`` inside ``(R^n)^{|V|}``."""
        if self.mode == "general":
            if self.data.shape[0] != self.n * n_vertices:
                raise ValueError("general boundary frame does not match the vertex count")
            return self.data
        if len(self.data) != n_vertices:
            raise ValueError("per-vertex boundary needs one frame per vertex")
        cols = []
        for v, F in enumerate(self.data):
            for c in F.T:
                x = np.zeros(self.n * n_vertices)
                x[v * self.n:(v + 1) * self.n] = c
                cols.append(x)
        return np.array(cols).T.reshape(self.n * n_vertices, len(cols))


def orthonormal(A: np.ndarray, tol: Tolerances | None = None) -> np.ndarray:
    if A.shape[1] == 0:
        return A
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    return U[:, : _tol(tol).rank(s, A.shape)]


def subspace_meet_dim(X: np.ndarray, Y: np.ndarray, tol: Tolerances | None = None) -> int:
    """``dim(span X ∩ span Y)`` for Euclidean column frames."""
    if X.shape[1] == 0 or Y.shape[1] == 0:
        return 0
    K = np.hstack([orthonormal(X, tol), orthonormal(Y, tol)])
    s = np.linalg.svd(K, compute_uv=False)
    return K.shape[1] - _tol(tol).rank(s, K.shape)


def pullback_boundary(graph: MetricGraph, bc: BoundaryCondition) -> np.ndarray:
    """Orthonormal frame of ``T (s ⊔ t)^* N`` in ``R^{2 n E}``.

    Every edge endpoint takes the value assigned to its vertex.
    """
    n = bc.n
    G = bc.vertex_frame(len(graph.vertices))
    sv = graph.slot_vertex()
    out = np.zeros((2 * n * graph.n_edges, G.shape[1]))
    for j, v in enumerate(sv):
        out[j * n:(j + 1) * n] = G[v * n:(v + 1) * n]
    return orthonormal(out)


def product_space(n_edges: int, n: int, field: str = "real") -> SymplecticSpace:
    return signed_space([-1, 1] * n_edges, n, field)


def _slot_signs(n_slots: int) -> np.ndarray:
    return np.array([-1.0, 1.0] * (n_slots // 2))


def annihilator(TN: np.ndarray, n: int, field: str = "real",
                tol: Tolerances | None = None) -> LagrangianFrame:
    """Lagrangian ``A(N)`` of a linear ``N`` in the signed product space.

    Points of ``N`` with zero covector, plus covectors vanishing on ``N``
    with the source blocks negated so the result is Lagrangian for the
    signed form.
    """
    TN = np.asarray(TN, dtype=float)
    m = TN.shape[0]
    if m % (2 * n):
        raise ValueError("boundary frame size is not a multiple of 2n")
    slots = m // n
    Q = orthonormal(TN, tol)
    U, _, _ = np.linalg.svd(Q, full_matrices=True) if Q.shape[1] else (np.eye(m), None, None)
    perp = U[:, Q.shape[1]:]
    signs = _slot_signs(slots)
    cols = np.zeros((2 * m, m))
    for j in range(slots):
        p = slice(2 * n * j, 2 * n * j + n)
        q = slice(2 * n * j + n, 2 * n * (j + 1))
        cols[q, : Q.shape[1]] = Q[j * n:(j + 1) * n]
        cols[p, Q.shape[1]:] = signs[j] * perp[j * n:(j + 1) * n]
    space = product_space(slots // 2, n, field)
    return LagrangianFrame(space, cols, tol)


def product_flow_graph(thetas, field: str = "real", tol: Tolerances | None = None) -> LagrangianFrame:
    """``Gamma(⊕ Theta_e) = {(xi_e, Theta_e xi_e)}`` in the signed product space."""
    mats = [np.asarray(T.matrix if isinstance(T, SymplecticMatrix) else T) for T in thetas]
    d = mats[0].shape[0]
    E = len(mats)
    dtype = complex if field == "complex" else float
    cols = np.zeros((2 * d * E, d * E), dtype=dtype)
    for e, M in enumerate(mats):
        cols[2 * d * e: 2 * d * e + d, d * e: d * (e + 1)] = np.eye(d)
        cols[2 * d * e + d: 2 * d * (e + 1), d * e: d * (e + 1)] = M
    return LagrangianFrame(product_space(E, d // 2, field), cols, tol)


def vertical_product(n_edges: int, n: int) -> LagrangianFrame:
    """All-covector Lagrangian (the annihilator of a point)."""
    return annihilator(np.zeros((2 * n * n_edges, 0)), n)


@dataclass(frozen=True, eq=False)
class ProductProblem:
    """Single-interval problem on ``[0, 1]`` obtained from a graph problem."""

    n: int
    n_edges: int
    boundary: np.ndarray
    systems: tuple
    tol: Tolerances | None = None

    @property
    def space(self) -> SymplecticSpace:
        return product_space(self.n_edges, self.n)

    @cached_property
    def thetas(self) -> list[SymplecticMatrix]:
        return [flow(s, self.tol) for s in self.systems]

    @cached_property
    def flow_graph(self) -> LagrangianFrame:
        return product_flow_graph(self.thetas, tol=self.tol)

    @cached_property
    def annihilator(self) -> LagrangianFrame:
        return annihilator(self.boundary, self.n, tol=self.tol)


@dataclass(frozen=True, eq=False)
class GraphProblem:
    """Metric graph with per-edge LQ data (edge ``e`` on ``[0, length_e]``) and a boundary."""

    graph: MetricGraph
    lq: tuple
    boundary: BoundaryCondition

    def __post_init__(self):
        object.__setattr__(self, "lq", tuple(self.lq))
        if len(self.lq) != self.graph.n_edges:
            raise ValueError("need LQ data for every edge")
        for i, (e, d) in enumerate(zip(self.graph.edges, self.lq)):
            if not isinstance(d, LQEdgeData):
                raise TypeError(f"edges[{i}].lq is not LQEdgeData")
            if d.n != self.n:
                raise ValueError(f"edges[{i}].lq has state dimension {d.n}, expected {self.n}")
            if abs(d.t0) > 0 or abs(d.t1 - e.length) > 1e-12 * e.length:
                raise ValueError(f"edges[{i}].lq must live on [0, length]")
        if self.boundary.n != self.n:
            raise ValueError("boundary dimension does not match the state dimension")

    @property
    def n(self) -> int:
        return self.lq[0].n

    def with_boundary(self, bc: BoundaryCondition) -> GraphProblem:
        return GraphProblem(self.graph, self.lq, bc)

    def systems(self) -> list[LinearHamiltonianSystem]:
        return [jacobi_from_lq(d) for d in self.lq]

    def boundary_frame(self) -> np.ndarray:
        return pullback_boundary(self.graph, self.boundary)

    def product(self, tol: Tolerances | None = None) -> ProductProblem:
        return ProductProblem(
            self.n,
            self.graph.n_edges,
            self.boundary_frame(),
            tuple(s.rescaled() for s in self.systems()),
            tol,
        )
