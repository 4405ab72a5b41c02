"""Brute-force Morse indices from a Galerkin discretization of the second variation.

Works in primal variables only: per edge the initial state ``x_e(0)`` and a
piecewise-constant control on a uniform mesh.  States are propagated with
exact transition matrices and the cost of each cell is integrated exactly
(Van Loan exponential for constant data, tight ODE quadrature otherwise), so
the only approximation is the restriction of the control space.  The
boundary condition ``(x_e(0), x_e(l_e))_e ∈ T Ñ`` is imposed exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .graph import GraphProblem
from .jacobi import LinearHamiltonianSystem, LQEdgeData, conjugate_times


class NonStabilizationError(RuntimeError):
    """Negative eigenvalue counts did not settle before the largest mesh."""


def _augmented(edge: LQEdgeData, t: float):
    A, B, W, S, R = edge.at(t)
    n, k = B.shape
    F = np.zeros((n + k, n + k))
    F[:n, :n] = A
    F[:n, n:] = B
    C = np.block([[W, S], [S.T, R]])
    return F, C


def _piece_constant(edge: LQEdgeData, a: float, b: float):
    F, C = _augmented(edge, 0.5 * (a + b))
    m = F.shape[0]
    big = np.zeros((2 * m, 2 * m))
    big[:m, :m] = -F.T
    big[:m, m:] = C
    big[m:, m:] = F
    E = expm(big * (b - a))
    P = E[m:, m:]
    return P, P.T @ E[:m, m:]


def _piece_smooth(edge: LQEdgeData, a: float, b: float):
    m = edge.n + edge.k

    def rhs(t, y):
        Phi = y[: m * m].reshape(m, m)
        F, C = _augmented(edge, t)
        return np.concatenate([(F @ Phi).ravel(), (Phi.T @ C @ Phi).ravel()])

    y0 = np.concatenate([np.eye(m).ravel(), np.zeros(m * m)])
    sol = solve_ivp(rhs, (a, b), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(f"cell quadrature failed: {sol.message}")
    y = sol.y[:, -1]
    G = y[m * m:].reshape(m, m)
    return y[: m * m].reshape(m, m), 0.5 * (G + G.T)


def cell_maps(edge: LQEdgeData, a: float, b: float):
    """Transition of ``(x, v)`` over ``[a, b]`` with constant ``v``, and the cell cost Gram."""
    nodes = [a, *[t for t in edge.breaks if a < t < b], b]
    m = edge.n + edge.k
    Phi = np.eye(m)
    G = np.zeros((m, m))
    piece = _piece_constant if edge.is_piecewise_constant else _piece_smooth
    for x, y in zip(nodes, nodes[1:]):
        P, Gp = piece(edge, x, y)
        G += Phi.T @ Gp @ Phi
        Phi = P @ Phi
    return Phi, 0.5 * (G + G.T)


def _edge_blocks(edge: LQEdgeData, m: int):
    """Cost matrix and endpoint map of one edge in the variables ``(x(0), w_1..w_m)``."""
    n, k = edge.n, edge.k
    h = (edge.t1 - edge.t0) / m
    dim = n + m * k
    uniform = edge.is_piecewise_constant and not edge.breaks
    if uniform:
        cell = cell_maps(edge, edge.t0, edge.t0 + h)
    X = np.zeros((n, dim))
    X[:, :n] = np.eye(n)
    Q = np.zeros((dim, dim))
    scale = 1.0 / np.sqrt(h)
    for j in range(m):
        a = edge.t0 + j * h
        Phi, G = cell if uniform else cell_maps(edge, a, a + h)
        Z = np.zeros((n + k, dim))
        Z[:n] = X
        Z[n:, n + j * k: n + (j + 1) * k] = scale * np.eye(k)
        Q += Z.T @ G @ Z
        X = Phi[:n] @ Z
    return 0.5 * (Q + Q.T), X


@dataclass(frozen=True, eq=False)
class DiscretizedHessian:
    """Second variation on the discretized admissible variations."""

    mesh: int
    Q_matrix: np.ndarray
    kernel_basis: np.ndarray
    constraint: np.ndarray

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if self.Q_matrix.shape[0] == 0:
            return np.zeros(0)
        return np.linalg.eigvalsh(self.Q_matrix)

    def inertia(self, gap: float = 1e-8, zero: float = 1e-11):
        """``(negatives, blocked, min_gap)`` relative to the spectral radius.

        Eigenvalues within ``zero`` of 0 are treated as roundoff; a negative
        one inside ``(-gap, -zero)`` is too close to call and blocks.
        """
        w = self.eigenvalues
        if w.size == 0:
            return 0, False, float("inf")
        rho = max(float(np.abs(w).max()), 1e-300)
        r = w / rho
        neg = r < -zero
        blocked = bool(np.any(neg & (r > -gap)))
        min_gap = float(np.min(-r[neg])) if neg.any() else float("inf")
        return int(neg.sum()), blocked, min_gap


def assemble_hessian(problem: GraphProblem, m: int) -> DiscretizedHessian:
    """Discretized second variation with ``m`` control cells per edge."""
    if m < 1:
        raise ValueError("mesh must have at least one cell")
    n = problem.n
    blocks = [_edge_blocks(edge, m) for edge in problem.lq]
    dims = [b[0].shape[0] for b in blocks]
    N = sum(dims)
    Q = np.zeros((N, N))
    ends = np.zeros((2 * n * len(blocks), N))
    off = 0
    for e, (Qe, Xe) in enumerate(blocks):
        d = Qe.shape[0]
        Q[off:off + d, off:off + d] = Qe
        ends[2 * e * n: (2 * e + 1) * n, off:off + n] = np.eye(n)
        ends[(2 * e + 1) * n: (2 * e + 2) * n, off:off + d] = Xe
        off += d
    TN = problem.boundary_frame()
    U, _, _ = np.linalg.svd(TN, full_matrices=True) if TN.shape[1] else (np.eye(TN.shape[0]),) * 3
    perp = U[:, TN.shape[1]:]
    C = perp.T @ ends
    if C.shape[0]:
        _, s, Vh = np.linalg.svd(C)
        r = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        K = Vh[r:].T
    else:
        K = np.eye(N)
    QK = K.T @ Q @ K
    return DiscretizedHessian(m, 0.5 * (QK + QK.T), K, C)


@dataclass(frozen=True)
class OracleResult:
    index: int
    mesh_used: int
    min_gap: float
    history: tuple = field(default=())

    def as_dict(self) -> dict:
        return {"index": self.index, "mesh_used": self.mesh_used, "min_gap": self.min_gap}


def starting_mesh(problem: GraphProblem, cells_per_radian: float = 4.0, floor: int = 8) -> int:
    """Power of two giving every edge cells shorter than ``1 / (c * omega)``.

    ``omega`` bounds the rotation rate of the Jacobi flow, the square root of
    the largest ``|H(t)|`` sampled on the edge.  Coarser meshes can agree on a
    count that is still too low.
    """
    need = floor
    for sys in problem.systems():
        ts = np.linspace(sys.t0, sys.t1, 9)
        omega = max(np.sqrt(np.linalg.norm(sys.H(t), 2)) for t in ts)
        need = max(need, int(np.ceil(cells_per_radian * omega * (sys.t1 - sys.t0))))
    return 1 << int(np.ceil(np.log2(need)))


def _heading_negative(coarse: np.ndarray, fine: np.ndarray, count: int, zero: float,
                      look: int = 3) -> bool:
    """True if a small nonnegative eigenvalue extrapolates to a negative limit.

    Galerkin eigenvalues approach their limits from above at rate ``h^2``, so
    halving ``h`` predicts ``lam_inf ~ lam_fine - (lam_coarse - lam_fine) / 3``.
    An exact zero extrapolates to about 0, hence the relative margin.
    """
    rho = max(float(np.abs(fine).max()), 1e-300)
    for j in range(count, min(count + look, coarse.size, fine.size)):
        drop = coarse[j] - fine[j]
        if drop <= 0:
            continue
        limit = fine[j] - drop / 3
        if limit < -max(zero * rho, 0.1 * drop):
            return True
    return False


def oracle_index(problem: GraphProblem, m0: int | None = None, max_mesh: int = 1024,
                 gap: float = 1e-8, zero: float = 1e-11) -> OracleResult:
    """Negative index of the second variation by mesh doubling.

    Starts from :func:`starting_mesh` unless ``m0`` is given.  Stops once two
    consecutive meshes give the same count, no negative eigenvalue sits in the
    ambiguous band near zero, and no small positive eigenvalue is on course
    to cross zero under further refinement.
    """
    prev = None
    hist = []
    m = starting_mesh(problem) if m0 is None else m0
    while m <= max_mesh:
        hess = assemble_hessian(problem, m)
        count, blocked, min_gap = hess.inertia(gap, zero)
        w = np.sort(hess.eigenvalues)
        hist.append((m, count))
        if (prev is not None and count == prev[0] and not blocked
                and not _heading_negative(prev[1], w, count, zero)):
            return OracleResult(count, m, min_gap, tuple(hist))
        prev = (count, w)
        m *= 2
    raise NonStabilizationError(f"negative counts did not stabilize: {hist}")


@dataclass(frozen=True)
class ConjugateReport:
    index: int
    end_multiplicity: int
    stable: bool


def conjugate_point_report(sys: LinearHamiltonianSystem, **kw) -> ConjugateReport:
    """Fixed-end index as the number of conjugate times in the open interval."""
    ts = conjugate_times(sys, **kw)
    span = sys.t1 - sys.t0
    inner = [c for c in ts if c.time < sys.t1 - 1e-7 * span]
    end = [c for c in ts if c.time >= sys.t1 - 1e-7 * span]
    return ConjugateReport(
        sum(c.multiplicity for c in inner),
        sum(c.multiplicity for c in end),
        all(c.stable for c in ts),
    )


def conjugate_point_index(sys: LinearHamiltonianSystem, **kw) -> int:
    return conjugate_point_report(sys, **kw).index
