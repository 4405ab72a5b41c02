"""Index formulas: comparison of boundary conditions, splitting and discretization,
filtration over vertices, iteration of periodic orbits and the circle function."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import (
    BoundaryCondition,
    GraphProblem,
    annihilator,
    orthonormal,
    product_flow_graph,
    subspace_meet_dim,
)
from .jacobi import LinearHamiltonianSystem, conjugate_times, flow
from .maslov import hermitian_triple_index, triple_index
from .symplectic import (
    Frame,
    SymplecticMatrix,
    Tolerances,
    _tol,
    intersect,
    reduction,
    vertical,
)


@dataclass(frozen=True, eq=False)
class ComparisonInput:
    """Data of two boundary conditions ``N``, ``Ñ`` for one product problem."""

    AN: Frame
    ANt: Frame
    GammaTheta: Frame
    TN: np.ndarray
    TNt: np.ndarray

    def __post_init__(self):
        sp = self.AN.space
        for F in (self.ANt, self.GammaTheta):
            if not sp.compatible(F.space):
                raise ValueError("comparison frames live in different spaces")
        for F in (self.AN, self.ANt, self.GammaTheta):
            if F.kind != "lagrangian":
                raise ValueError("comparison frames must be Lagrangian")
        m = sp.dim // 2
        if self.TN.shape[0] != m or self.TNt.shape[0] != m:
            raise ValueError("boundary frames do not match the product space")


def comparison_input(problem: GraphProblem, bc: BoundaryCondition, bc_t: BoundaryCondition,
                     tol: Tolerances | None = None) -> ComparisonInput:
    P = problem.with_boundary(bc).product(tol)
    TNt = problem.with_boundary(bc_t).boundary_frame()
    return ComparisonInput(P.annihilator, annihilator(TNt, P.n, tol=tol), P.flow_graph,
                           P.boundary, TNt)


def comparison_index_difference(inp: ComparisonInput, tol: Tolerances | None = None) -> int:
    """``ind Q_Ñ - ind Q_N`` from the Maslov index of ``(A(N), Gamma(Theta), A(Ñ))``.

    Adds ``dim(TN ∩ TÑ) - dim TN`` and ``k0 = dim(A(N) ∩ Gamma) - dim(A(N) ∩ Gamma ∩ A(Ñ))``.
    """
    tol = _tol(tol)
    mas = triple_index(inp.AN, inp.GammaTheta, inp.ANt, tol).index_neg
    meet = intersect(inp.AN, inp.GammaTheta, tol)
    k0 = meet.dim - intersect(meet, inp.ANt, tol).dim
    return mas + subspace_meet_dim(inp.TN, inp.TNt, tol) - inp.TN.shape[1] + k0


def compare_boundaries(problem: GraphProblem, bc: BoundaryCondition, bc_t: BoundaryCondition,
                       tol: Tolerances | None = None) -> int:
    return comparison_index_difference(comparison_input(problem, bc, bc_t, tol), tol)


def split_index_correction(Theta1: SymplecticMatrix, Theta2: SymplecticMatrix,
                           tol: Tolerances | None = None) -> tuple[int, int]:
    """Correction terms for splitting a fixed-end problem at an interior time.

    ``Theta1`` is the flow up to the split, ``Theta2`` the flow after it.  The
    index of the whole arc is the sum of the two sub-arc indices plus
    ``maslov + k``.
    """
    tol = _tol(tol)
    Pi = vertical(Theta1.space)
    back = Theta2.inverse() @ Pi
    fwd = Theta1 @ Pi
    maslov = triple_index(back, Pi, fwd, tol).index_neg
    k = (
        intersect(Theta2 @ Pi, Pi, tol).dim
        + intersect(fwd, Pi, tol).dim
        - intersect(intersect(back, Pi, tol), fwd, tol).dim
    )
    return maslov, k


@dataclass(frozen=True)
class DiscretizationResult:
    lower_bound: int
    exact: bool
    terms: tuple = ()
    kernels: tuple = ()


def discretization_index(sys: LinearHamiltonianSystem, partition, count_kernel: bool = False,
                         tol: Tolerances | None = None) -> DiscretizationResult:
    """Fixed-end index bound from the flows between consecutive partition points.

    Sums ``i(Theta_{i+1,i}^{-1} Pi, Pi, Theta_{i,0} Pi)`` over interior points.
    ``exact`` certifies equality: no segment contains a conjugate time of its
    own start in its interior, and the splitting kernels vanish (or are
    counted, with ``count_kernel``).
    """
    tol = _tol(tol)
    ts = [float(t) for t in partition]
    if len(ts) < 2 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("partition must be strictly increasing with at least two points")
    if abs(ts[0] - sys.t0) > 1e-12 or abs(ts[-1] - sys.t1) > 1e-12:
        raise ValueError("partition must start at t0 and end at t1")
    segs = [flow(sys.restricted(a, b), tol) for a, b in zip(ts, ts[1:])]
    terms, kernels = [], []
    acc = segs[0]
    for step in segs[1:]:
        m, k = split_index_correction(acc, step, tol)
        terms.append(m)
        kernels.append(k)
        acc = step @ acc
    total = sum(terms) + (sum(kernels) if count_kernel else 0)
    quiet = True
    for a, b in zip(ts, ts[1:]):
        inner = [c for c in conjugate_times(sys.restricted(a, b), tol=tol)
                 if c.time < b - 1e-7 * (b - a)]
        if inner:
            quiet = False
            break
    exact = quiet and (count_kernel or not any(kernels))
    return DiscretizationResult(total, exact, tuple(terms), tuple(kernels))


# --- periodic orbits -------------------------------------------------------

def _diagonal_annihilator(n: int, field: str, tol) -> Frame:
    diag = orthonormal(np.vstack([np.eye(n), np.eye(n)]))
    return annihilator(diag, n, field, tol)


@dataclass(frozen=True, eq=False)
class IterationInput:
    Theta: SymplecticMatrix
    k: int
    omega: complex | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("iterate count k must be at least 2")
        if self.omega is None:
            object.__setattr__(self, "omega", np.exp(2j * np.pi / self.k))
        w = complex(self.omega)
        if abs(w ** self.k - 1) > 1e-10 or any(abs(w ** j - 1) < 1e-10 for j in range(1, self.k)):
            raise ValueError("omega must be a primitive k-th root of unity")
        object.__setattr__(self, "omega", w)


def iteration_index_I(inp: IterationInput, tol: Tolerances | None = None) -> int:
    """``ind(gamma^k) - k ind(gamma)`` from real Maslov indices of powers of ``Theta``.

    Sum over ``j = 1..k-1`` of
    ``i(Gamma(Theta^{j+1}), A(Delta), Gamma(Theta^j)) - n + dim ker(Theta^j - I)``.
    """
    tol = _tol(tol)
    n = inp.Theta.space.n
    AD = _diagonal_annihilator(n, "real", tol)
    I = np.eye(2 * n)
    total = 0
    power = inp.Theta.matrix
    G = product_flow_graph([power], tol=tol)
    for _ in range(1, inp.k):
        nxt = inp.Theta.matrix @ power
        G_next = product_flow_graph([nxt], tol=tol)
        ker = intersect(G, product_flow_graph([I], tol=tol), tol).dim
        total += triple_index(G_next, AD, G, tol).index_neg - n + ker
        power, G = nxt, G_next
    return total


def iteration_index_II(inp: IterationInput, tol: Tolerances | None = None) -> int:
    """Same quantity from Hermitian indices at the powers of a primitive root.

    Sum over ``j = 1..k-1`` of
    ``n - dim_C ker(Theta - w^j) - i(Gamma(Theta), A(Delta), Gamma(w^j Theta))``.
    """
    tol = _tol(tol)
    n = inp.Theta.space.n
    Th = inp.Theta.matrix.astype(complex)
    AD = _diagonal_annihilator(n, "complex", tol)
    G = product_flow_graph([Th], "complex", tol)
    total = 0
    for j in range(1, inp.k):
        w = inp.omega ** j
        Gw = product_flow_graph([w * Th], "complex", tol)
        ker = intersect(G, product_flow_graph([w * np.eye(2 * n)], "complex", tol), tol).dim
        total += n - ker - hermitian_triple_index(G, AD, Gw, tol).index_neg
    return total


def circle_matrix(Theta: SymplecticMatrix, z: complex) -> np.ndarray:
    """``M_z = J (conj(z) + 1 - conj(z) Theta - Theta^{-1}) / (1 - conj(z))``."""
    z = complex(z)
    if abs(abs(z) - 1) > 1e-12:
        raise ValueError("z must lie on the unit circle")
    if abs(z - 1) < 1e-14:
        raise ValueError("the circle function is singular at z = 1")
    T = Theta.matrix
    J = Theta.space.form
    zb = np.conj(z)
    if np.iscomplexobj(T):
        I = np.eye(T.shape[0])
        return J @ ((zb + 1) * I - zb * T - Theta.inverse().matrix) / (1 - zb)
    # real symplectic: J Theta^{-1} = Theta^T J, so M_z = i c J - (B + B^H)
    # with B = w J Theta; Hermitian to the last bit even where 1/(1 - zb) is large
    c = ((zb + 1) / (1 - zb)).imag
    B = (zb / (1 - zb)) * (J @ T)
    return 1j * c * J - (B + np.conj(B).T)


def circle_index(Theta: SymplecticMatrix, z: complex, tol: Tolerances | None = None) -> int:
    """Number of negative eigenvalues of the Hermitian matrix ``M_z``."""
    M = circle_matrix(Theta, z)
    w = np.linalg.eigvalsh(0.5 * (M + np.conj(M).T))
    return int(np.sum(w < -_tol(tol).eig_cut(w)))


def circle_triple_index(Theta: SymplecticMatrix, z: complex, tol: Tolerances | None = None) -> int:
    """``i(Gamma(Theta), A(Delta), Gamma(z Theta))`` computed directly from frames."""
    n = Theta.space.n
    Th = Theta.matrix.astype(complex)
    AD = _diagonal_annihilator(n, "complex", tol)
    G = product_flow_graph([Th], "complex", tol)
    Gz = product_flow_graph([complex(z) * Th], "complex", tol)
    return hermitian_triple_index(G, AD, Gz, tol).index_neg


@dataclass(frozen=True)
class CircleJump:
    angle: float
    before: int
    after: int

    @property
    def z(self) -> complex:
        return complex(np.exp(1j * self.angle))


def circle_sweep(Theta: SymplecticMatrix, samples: int = 1024, tol: Tolerances | None = None):
    """Circle index at ``exp(2 pi i (k + 1/2) / samples)``, ``k = 0..samples-1``."""
    angles = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    return angles, np.array([circle_index(Theta, np.exp(1j * a), tol) for a in angles])


def circle_jumps(Theta: SymplecticMatrix, samples: int = 1024, tol: Tolerances | None = None,
                 angle_tol: float = 1e-10) -> list[CircleJump]:
    """Locate changes of the circle index by bisection between sweep samples."""
    angles, idx = circle_sweep(Theta, samples, tol)
    jumps = []
    for i in range(samples - 1):
        if idx[i] == idx[i + 1]:
            continue
        lo, hi = angles[i], angles[i + 1]
        left = idx[i]
        while hi - lo > angle_tol:
            mid = 0.5 * (lo + hi)
            if circle_index(Theta, np.exp(1j * mid), tol) == left:
                lo = mid
            else:
                hi = mid
        jumps.append(CircleJump(0.5 * (lo + hi), int(idx[i]), int(idx[i + 1])))
    return jumps


# --- filtration over vertices ----------------------------------------------

@dataclass(frozen=True)
class FiltrationStep:
    vertex: object
    contribution: int


def filtration_contributions(problem: GraphProblem, vertex_order, tol: Tolerances | None = None,
                             reduce: bool = True) -> list[FiltrationStep]:
    """Index gained as vertices are released one at a time in ``vertex_order``.

    Step ``j`` compares the problem with vertices ``v_1..v_{j-1}`` released
    (the rest fixed) to the one with ``v_j`` released as well.  With
    ``reduce`` the Maslov term is evaluated after symplectic reduction by
    ``A_{j-1} ∩ A_j``, which leaves every term unchanged.
    """
    tol = _tol(tol)
    bc = problem.boundary
    if bc.mode != "per_vertex":
        raise ValueError("filtration needs a per-vertex boundary condition")
    nv = len(problem.graph.vertices)
    order = [problem.graph.index(v) if not isinstance(v, (int, np.integer)) else int(v)
             for v in vertex_order]
    if sorted(order) != list(range(nv)):
        raise ValueError("vertex_order is not a permutation of the vertices")
    n = problem.n
    fixed = np.zeros((n, 0))
    frames = [fixed] * nv
    P = problem.with_boundary(BoundaryCondition.per_vertex(frames, n)).product(tol)
    Gamma = P.flow_graph
    prev_TN = P.boundary
    prev_A = P.annihilator
    out = []
    for v in order:
        frames = list(frames)
        frames[v] = bc.data[v]
        TN = problem.with_boundary(BoundaryCondition.per_vertex(frames, n)).boundary_frame()
        A = annihilator(TN, n, tol=tol)
        meet = intersect(prev_A, Gamma, tol)
        k0 = meet.dim - intersect(meet, A, tol).dim
        V = intersect(prev_A, A, tol)
        if V.dim == A.dim:
            mas = 0
        elif reduce and V.dim:
            red = reduction(V, tol)
            mas = triple_index(red.apply(prev_A), red.apply(Gamma), red.apply(A), tol).index_neg
        else:
            mas = triple_index(prev_A, Gamma, A, tol).index_neg
        step = mas + k0 + subspace_meet_dim(prev_TN, TN, tol) - prev_TN.shape[1]
        out.append(FiltrationStep(problem.graph.vertices[v], int(step)))
        prev_A, prev_TN = A, TN
    return out
