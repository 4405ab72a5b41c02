"""Linear Hamiltonian (Jacobi) flows: LQ data, integration, conjugate times."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .symplectic import (
    Frame,
    SymplecticMatrix,
    Tolerances,
    _tol,
    intersect,
    standard_form,
    standard_space,
)


class LegendreError(ValueError):
    """The control cost R(t) is not uniformly positive definite."""


class IntegrationError(RuntimeError):
    """The flow could not be integrated to the requested tolerance."""


@dataclass(frozen=True, eq=False)
class TimeMatrix:
    """Matrix-valued function of time, piecewise polynomial.

    ``coeffs[i][k]`` multiplies ``(t - breakpoints[i])**k`` on
    ``[breakpoints[i], breakpoints[i+1])``.  A constant matrix has no
    breakpoints and a single degree-zero piece.
    """

    breakpoints: tuple = ()
    coeffs: tuple = ()

    @classmethod
    def constant(cls, M) -> TimeMatrix:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls((), (M[None],))

    @classmethod
    def piecewise(cls, breakpoints, pieces) -> TimeMatrix:
        bp = tuple(float(b) for b in breakpoints)
        if len(bp) != len(pieces) + 1:
            raise ValueError("need one more breakpoint than pieces")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        cs = []
        for p in pieces:
            c = np.asarray(p, dtype=float)
            if c.ndim == 2:
                c = c[None]
            if c.ndim != 3:
                raise ValueError("each piece is a list of coefficient matrices")
            cs.append(c)
        if len({c.shape[1:] for c in cs}) != 1:
            raise ValueError("pieces have inconsistent matrix shapes")
        return cls(bp, tuple(cs))

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs[0].shape[1:]

    @property
    def is_piecewise_constant(self) -> bool:
        return all(c.shape[0] == 1 for c in self.coeffs)

    def __call__(self, t: float) -> np.ndarray:
        if not self.breakpoints:
            return self.coeffs[0][0]
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        i = min(max(i, 0), len(self.coeffs) - 1)
        c = self.coeffs[i]
        dt = t - self.breakpoints[i]
        out = c[-1].copy()
        for k in range(c.shape[0] - 2, -1, -1):
            out = out * dt + c[k]
        return out

    def scaled(self, a: float) -> TimeMatrix:
        return TimeMatrix(self.breakpoints, tuple(a * c for c in self.coeffs))


def as_time_matrix(x) -> TimeMatrix:
    if isinstance(x, TimeMatrix):
        return x
    if isinstance(x, dict):
        return TimeMatrix.piecewise(x["breakpoints"], x["pieces"])
    return TimeMatrix.constant(x)


def _breaks_inside(breaks, t0: float, t1: float) -> tuple[float, ...]:
    return tuple(sorted({b for b in breaks if t0 < b < t1}))


def _sample_times(t0: float, t1: float, breaks, per_piece: int = 17) -> np.ndarray:
    nodes = [t0, *breaks, t1]
    ts = [np.linspace(a, b, per_piece) for a, b in zip(nodes, nodes[1:])]
    return np.unique(np.concatenate(ts))


@dataclass(frozen=True, eq=False)
class LQEdgeData:
    """Linearized dynamics ``x' = A x + B u`` with cost ``x'Wx + 2x'Su + u'Ru`` on ``[t0, t1]``."""

    A: TimeMatrix
    B: TimeMatrix
    W: TimeMatrix
    S: TimeMatrix
    R: TimeMatrix
    t0: float = 0.0
    t1: float = 1.0

    def __post_init__(self):
        for name in "ABWSR":
            object.__setattr__(self, name, as_time_matrix(getattr(self, name)))
        n, k = self.B.shape
        want = {"A": (n, n), "W": (n, n), "S": (n, k), "R": (k, k)}
        for name, shp in want.items():
            if getattr(self, name).shape != shp:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shp}")
        if not self.t1 > self.t0:
            raise ValueError("empty time interval")
        if not np.isfinite(self.t1 - self.t0):
            raise ValueError("infinite time intervals are not supported")
        for t in _sample_times(self.t0, self.t1, self.breaks):
            for name in "WR":
                M = getattr(self, name)(t)
                if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
                    raise ValueError(f"{name}({t:g}) is not symmetric")
            Rt = self.R(t)
            w = np.linalg.eigvalsh(0.5 * (Rt + Rt.T))
            if w[0] <= 1e-10 * max(1.0, abs(w[-1])):
                raise LegendreError(
                    f"strong Legendre condition fails: min eig R({t:g}) = {w[0]:.3e}"
                )

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def breaks(self) -> tuple[float, ...]:
        bs = set()
        for name in "ABWSR":
            bs.update(getattr(self, name).breakpoints)
        return _breaks_inside(bs, self.t0, self.t1)

    @property
    def is_piecewise_constant(self) -> bool:
        return all(getattr(self, name).is_piecewise_constant for name in "ABWSR")

    def at(self, t: float):
        return tuple(getattr(self, name)(t) for name in "ABWSR")


@dataclass(frozen=True, eq=False)
class LinearHamiltonianSystem:
    """Quadratic time-dependent Hamiltonian ``t -> H(t)`` generating ``Theta' = J H Theta``."""

    n: int
    hamiltonian: Callable[[float], np.ndarray]
    t0: float = 0.0
    t1: float = 1.0
    breakpoints: tuple = ()
    piecewise_constant: bool = False

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("empty time interval")
        if not np.isfinite(self.t1 - self.t0):
            raise ValueError("infinite time intervals are not supported")
        object.__setattr__(self, "breakpoints", _breaks_inside(self.breakpoints, self.t0, self.t1))
        for t in (self.t0, 0.5 * (self.t0 + self.t1), self.t1):
            H = self.H(t)
            if H.shape != (2 * self.n, 2 * self.n):
                raise ValueError("Hamiltonian has the wrong shape")
            if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())):
                raise ValueError(f"H({t:g}) is not symmetric")

    @classmethod
    def constant(cls, H, t0: float = 0.0, t1: float = 1.0) -> LinearHamiltonianSystem:
        H = np.array(H, dtype=float)
        H.setflags(write=False)
        return cls(H.shape[0] // 2, lambda t: H, t0, t1, (), True)

    @property
    def space(self):
        return standard_space(self.n)

    def H(self, t: float) -> np.ndarray:
        return np.asarray(self.hamiltonian(t), dtype=float)

    def restricted(self, a: float, b: float) -> LinearHamiltonianSystem:
        return LinearHamiltonianSystem(
            self.n, self.hamiltonian, a, b, self.breakpoints, self.piecewise_constant
        )

    def rescaled(self) -> LinearHamiltonianSystem:
        """Same flow reparametrized over ``[0, 1]``: ``s -> l * H(t0 + l * s)``."""
        t0, l = self.t0, self.t1 - self.t0
        f = self.hamiltonian
        return LinearHamiltonianSystem(
            self.n,
            lambda s: l * np.asarray(f(t0 + l * s)),
            0.0,
            1.0,
            tuple((b - t0) / l for b in self.breakpoints),
            self.piecewise_constant,
        )


def lq_hamiltonian(A, B, W, S, R) -> np.ndarray:
    """Hessian of the maximized LQ Hamiltonian in ``(p, x)`` coordinates."""
    Rinv = np.linalg.inv(R)
    Hpp = B @ Rinv @ B.T
    Hpx = A - B @ Rinv @ S.T
    Hxx = -(W - S @ Rinv @ S.T)
    H = np.block([[Hpp, Hpx], [Hpx.T, Hxx]])
    return 0.5 * (H + H.T)


def jacobi_from_lq(edge: LQEdgeData) -> LinearHamiltonianSystem:
    """Jacobi system of an LQ edge.

    The control is eliminated by ``u* = R^{-1}(B'p - S'x)``, the maximizer of
    ``h = p'(Ax + Bu) - (x'Wx + 2x'Su + u'Ru) / 2``.
    """
    return LinearHamiltonianSystem(
        edge.n,
        lambda t: lq_hamiltonian(*edge.at(t)),
        edge.t0,
        edge.t1,
        edge.breaks,
        edge.is_piecewise_constant,
    )


@dataclass(frozen=True, eq=False)
class FlowResult:
    Theta: SymplecticMatrix
    checkpoints: list = field(default_factory=list)
    symplectic_defect: float = 0.0


def symplectic_defect(M: np.ndarray) -> float:
    J = standard_form(M.shape[0] // 2)
    return float(np.abs(M.T @ J @ M - J).max())


def symplectic_project(M: np.ndarray, tol: float = 1e-14, maxiter: int = 20) -> np.ndarray:
    """Pull a nearly symplectic matrix back onto the group.

    Newton-Schulz type iteration ``M <- M (3I - S) / 2`` with
    ``S = J^{-1} M^T J M``; the first-order correction is in the Lie algebra.
    """
    J = standard_form(M.shape[0] // 2)
    I = np.eye(M.shape[0])
    for _ in range(maxiter):
        S = -J @ M.T @ J @ M
        if np.abs(S - I).max() <= tol:
            break
        M = M @ (3 * I - S) / 2
    return M


_C = np.sqrt(3) / 6


def _magnus4(Hf, J, t: float, h: float) -> np.ndarray:
    A1 = J @ Hf(t + (0.5 - _C) * h)
    A2 = J @ Hf(t + (0.5 + _C) * h)
    Om = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12) * h * h * (A2 @ A1 - A1 @ A2)
    return expm(Om)


def _advance(sys: LinearHamiltonianSystem, a: float, b: float, local_tol: float,
             max_steps: int) -> np.ndarray:
    """Flow map from ``a`` to ``b`` inside one smooth piece."""
    J = standard_form(sys.n)
    if b <= a:
        return np.eye(2 * sys.n)
    if sys.piecewise_constant:
        return expm((b - a) * J @ sys.H(0.5 * (a + b)))
    Hf = sys.H
    M = np.eye(2 * sys.n)
    t = a
    h = min(b - a, 0.05)
    steps = 0
    while t < b:
        if steps >= max_steps:
            raise IntegrationError("step limit reached before the tolerance was met")
        h = min(h, b - t)
        full = _magnus4(Hf, J, t, h)
        half = _magnus4(Hf, J, t + h / 2, h / 2) @ _magnus4(Hf, J, t, h / 2)
        err = np.abs(full - half).max() / 15
        scale = max(1.0, np.abs(half).max())
        steps += 1
        if err <= local_tol * scale or h < 1e-12 * (b - a):
            M = half @ M
            t = b if b - t - h <= 1e-15 * max(1.0, abs(b)) else t + h
        fac = 0.9 * (local_tol * scale / err) ** 0.2 if err > 0 else 4.0
        h *= min(4.0, max(0.2, fac))
    return M


def _stops(sys: LinearHamiltonianSystem, times) -> list[float]:
    return sorted({sys.t0, sys.t1, *sys.breakpoints, *times})


def integrate_flow(
    sys: LinearHamiltonianSystem,
    times=(),
    tol: Tolerances | None = None,
    local_tol: float = 1e-13,
    max_steps: int = 200_000,
) -> FlowResult:
    """Integrate ``Theta' = J H Theta`` from ``t0`` with ``Theta(t0) = I``.

    Constant pieces use the exact exponential; smooth pieces a fourth-order
    Magnus scheme with step-doubling error control.  Both keep the iterate on
    the symplectic group up to roundoff; a projection step fixes drift when
    the defect exceeds a tenth of ``tol.symp``.
    """
    tol = _tol(tol)
    times = [float(t) for t in times]
    if any(t < sys.t0 - 1e-14 or t > sys.t1 + 1e-14 for t in times):
        raise ValueError("checkpoint outside the integration interval")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("checkpoints must be increasing")
    stops = _stops(sys, times)
    want = set(times)
    M = np.eye(2 * sys.n)
    out = [(sys.t0, M.copy())] if sys.t0 in want else []
    worst = 0.0
    pieces = [sys.t0, *sys.breakpoints, sys.t1]
    J = standard_form(sys.n)
    gen, cache = None, {}
    for a, b in zip(stops, stops[1:]):
        if sys.piecewise_constant:
            # one generator per piece; uniform checkpoint grids reuse the exponential
            piece = int(np.searchsorted(pieces, 0.5 * (a + b))) - 1
            if gen is None or gen[0] != piece:
                gen = (piece, J @ sys.H(0.5 * (a + b)))
                cache = {}
            key = round((b - a) / (sys.t1 - sys.t0), 13)
            if key not in cache:
                cache[key] = expm((b - a) * gen[1])
            M = cache[key] @ M
        else:
            M = _advance(sys, a, b, local_tol, max_steps) @ M
        d = symplectic_defect(M)
        if d > 0.1 * tol.symp:
            M = symplectic_project(M)
            d = symplectic_defect(M)
        if d > tol.symp:
            raise IntegrationError(f"symplectic defect {d:.2e} exceeds {tol.symp:.0e}")
        if b in want:
            out.append((b, M.copy()))
            worst = max(worst, d)
    worst = max(worst, symplectic_defect(M))
    return FlowResult(SymplecticMatrix(sys.space, M, tol), out, worst)


def flow(sys: LinearHamiltonianSystem, tol: Tolerances | None = None) -> SymplecticMatrix:
    """Flow map over the whole interval of ``sys``."""
    return integrate_flow(sys, (), tol).Theta


class _Sampler:
    """Evaluate ``Theta_{t, t0}`` at arbitrary times from cached checkpoints."""

    def __init__(self, sys: LinearHamiltonianSystem, grid: np.ndarray, tol: Tolerances):
        self.sys = sys
        self.tol = tol
        res = integrate_flow(sys, grid, tol)
        self.times = np.array([t for t, _ in res.checkpoints])
        self.mats = [M for _, M in res.checkpoints]

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(i, 0)
        a = float(self.times[i])
        if t <= a:
            return self.mats[i]
        sub = self.sys.restricted(a, t)
        M = np.eye(2 * self.sys.n)
        nodes = [a, *sub.breakpoints, t]
        for x, y in zip(nodes, nodes[1:]):
            M = _advance(sub, x, y, 1e-13, 200_000) @ M
        return M @ self.mats[i]


def _vertical_angles(M: np.ndarray, n: int) -> np.ndarray:
    """Sines of principal angles between ``M(Pi)`` and ``Pi``, ascending."""
    Q, _ = np.linalg.qr(M[:, :n])
    return np.sort(np.linalg.svd(Q[n:], compute_uv=False))


@dataclass(frozen=True)
class ConjugateTime:
    time: float
    multiplicity: int
    stable: bool = True

    def __iter__(self):
        yield self.time
        yield self.multiplicity


def conjugate_times(
    sys: LinearHamiltonianSystem,
    interval: tuple[float, float] | None = None,
    tol: Tolerances | None = None,
    samples: int = 256,
    time_tol: float = 1e-9,
    zero_cut: float = 1e-6,
    unsure_cut: float = 1e-3,
) -> list[ConjugateTime]:
    """Times ``t`` in ``(a, b]`` with ``Theta_{t,a}(Pi) ∩ Pi != 0``.

    A coarse scan of the smallest principal-angle sine between the transported
    and the fixed vertical subspace is refined around each local minimum.  The
    multiplicity is the number of sines below ``zero_cut``; a sine between the
    two cuts marks the entry as not ``stable``.
    """
    tol = _tol(tol)
    a, b = (sys.t0, sys.t1) if interval is None else map(float, interval)
    sub = sys.restricted(a, b)
    grid = np.linspace(a, b, samples + 1)
    sampler = _Sampler(sub, grid, tol)
    n = sys.n

    def smin(t):
        return _vertical_angles(sampler(t), n)[0]

    vals = np.array([_vertical_angles(M, n)[0] for M in sampler.mats])
    found: list[ConjugateTime] = []

    def record(t):
        s = _vertical_angles(sampler(t), n)
        mult = int(np.sum(s < zero_cut))
        if mult == 0:
            return
        stable = not np.any((s >= zero_cut) & (s < unsure_cut))
        if found and abs(found[-1].time - t) < 10 * time_tol:
            return
        found.append(ConjugateTime(float(t), mult, stable))

    for i in range(1, samples):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            if vals[i] == 0.0:
                record(grid[i])
                continue
            r = minimize_scalar(
                smin, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                options={"xatol": time_tol},
            )
            record(r.x)
    if vals[-1] < vals[-2]:
        # minimum may sit at the right end, or just inside it
        r = minimize_scalar(
            smin, bounds=(grid[-2], b), method="bounded", options={"xatol": time_tol}
        )
        t_end = b if smin(b) <= r.fun or b - r.x < 10 * time_tol else r.x
        record(t_end)
    return found


def bvp_solution_dim(
    Theta: SymplecticMatrix, L_start: Frame, L_end: Frame, tol: Tolerances | None = None
) -> int:
    """``dim{eta in L_start : Theta eta in L_end}``."""
    return intersect(L_start, Theta.inverse() @ L_end, tol).dim
