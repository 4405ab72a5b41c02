"""Linear symplectic algebra on column frames.

Phase vectors are laid out as ``(p, q)``: covector block first, base block
second.  The standard form is ``sigma(x, y) = <J x, y>`` with
``J = [[0, -I], [I, 0]]``, so the vertical subspace (``q = 0``) is spanned by
the first ``n`` coordinates and the horizontal one by the last ``n``.  In the
complex setting the pairing is ``sigma(conj(x), y)``, i.e. ``x^H J^T y``.

Subspaces are stored as orthonormal column frames.  Every dimension decision
goes through an SVD with the thresholds held by :class:`Tolerances`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerances:
    """Thresholds for rank, eigenvalue-sign and symplecticity decisions.

    Singular values below ``max(max(shape) * eps, rank_atol) * sigma_max`` count
    as zero.  Form eigenvalues with ``|w| <= max(dim * eps * max|w|, eig_atol)``
    count as kernel.  The absolute floors are set to absorb the error carried by
    numerically integrated flows; pure linear-algebra inputs sit far below them.
    """

    rank_atol: float = 1e-9
    eig_atol: float = 1e-9
    symp: float = 1e-10
    isotropy: float = 1e-8

    def rank_cut(self, s: np.ndarray, shape: tuple[int, ...]) -> float:
        smax = float(s[0]) if s.size else 0.0
        return max(max(shape) * EPS, self.rank_atol) * smax

    def rank(self, s: np.ndarray, shape: tuple[int, ...]) -> int:
        if s.size == 0:
            return 0
        return int(np.sum(s > self.rank_cut(s, shape)))

    def eig_cut(self, w: np.ndarray) -> float:
        if w.size == 0:
            return self.eig_atol
        return max(w.size * EPS * float(np.max(np.abs(w))), self.eig_atol)

    def with_overrides(self, **kw) -> Tolerances:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


DEFAULT_TOL = Tolerances()


def _tol(tol: Tolerances | None) -> Tolerances:
    return DEFAULT_TOL if tol is None else tol


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def standard_form(n: int) -> np.ndarray:
    """Return ``J = [[0, -I], [I, 0]]`` of size ``2n``."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


@dataclass(frozen=True, eq=False)
class SymplecticSpace:
    """A finite-dimensional symplectic vector space with a constant form matrix."""

    form: np.ndarray
    field: str = "real"

    def __post_init__(self):
        form = np.asarray(self.form, dtype=float)
        if form.ndim != 2 or form.shape[0] != form.shape[1] or form.shape[0] % 2:
            raise ValueError("form must be a square matrix of even size")
        if form.shape[0] == 0:
            raise ValueError("symplectic space must have positive dimension")
        if not np.allclose(form, -form.T, atol=10 * EPS * max(1.0, np.abs(form).max())):
            raise ValueError("form is not skew-symmetric")
        s = np.linalg.svd(form, compute_uv=False)
        if s[-1] <= DEFAULT_TOL.rank_cut(s, form.shape):
            raise ValueError("form is degenerate")
        if self.field not in ("real", "complex"):
            raise ValueError(f"unknown scalar field {self.field!r}")
        object.__setattr__(self, "form", _frozen(form))

    @property
    def dim(self) -> int:
        return self.form.shape[0]

    @property
    def n(self) -> int:
        return self.dim // 2

    @property
    def is_complex(self) -> bool:
        return self.field == "complex"

    @property
    def dtype(self):
        return complex if self.is_complex else float

    def pairing(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Matrix of ``sigma(conj(x_i), y_j)`` over columns of ``X`` and ``Y``."""
        return np.conj(X).T @ self.form.T @ Y

    def compatible(self, other: SymplecticSpace) -> bool:
        return (
            self is other
            or (self.field == other.field and self.form.shape == other.form.shape
                and np.array_equal(self.form, other.form))
        )

    def complexified(self) -> SymplecticSpace:
        return self if self.is_complex else SymplecticSpace(self.form, "complex")


def standard_space(n: int, field: str = "real") -> SymplecticSpace:
    """Standard symplectic space of dimension ``2n`` over ``field``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return SymplecticSpace(standard_form(n), field)


def signed_space(signs, n: int, field: str = "real") -> SymplecticSpace:
    """Direct sum of copies of the standard space, the i-th with form ``signs[i] * J``."""
    signs = list(signs)
    if not signs:
        raise ValueError("need at least one copy")
    J = standard_form(n)
    form = np.zeros((2 * n * len(signs),) * 2)
    for i, s in enumerate(signs):
        if s not in (1, -1):
            raise ValueError("signs must be +1 or -1")
        sl = slice(2 * n * i, 2 * n * (i + 1))
        form[sl, sl] = s * J
    return SymplecticSpace(form, field)


def _orthonormal_span(A: np.ndarray, tol: Tolerances) -> tuple[np.ndarray, np.ndarray]:
    if A.shape[1] == 0:
        return A[:, :0], np.zeros(0)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    r = tol.rank(s, A.shape)
    return U[:, :r], s


_KINDS = ("subspace", "isotropic", "lagrangian")


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal basis of a subspace, optionally tagged isotropic or Lagrangian.

    The stored ``basis`` is an orthonormalization of the given columns; the
    columns must have full rank.
    """

    space: SymplecticSpace
    basis: np.ndarray
    kind: str = "subspace"
    tol: Tolerances | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        tol = _tol(self.tol)
        cols = np.asarray(self.basis)
        if np.iscomplexobj(cols) and not self.space.is_complex:
            raise ValueError("complex columns in a real space")
        cols = cols.astype(self.space.dtype)
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.ndim != 2 or cols.shape[0] != self.space.dim:
            raise ValueError(
                f"frame has {cols.shape[0] if cols.ndim == 2 else '?'} rows, "
                f"space has dimension {self.space.dim}"
            )
        U, _ = _orthonormal_span(cols, tol)
        if U.shape[1] < cols.shape[1]:
            raise ValueError("frame columns are not of full rank")
        object.__setattr__(self, "basis", _frozen(U))
        if self.kind != "subspace":
            iso = isotropy_defect(self)
            if iso > tol.isotropy:
                raise ValueError(f"frame tagged {self.kind} is not isotropic (defect {iso:.2e})")
            if self.kind == "lagrangian" and self.dim != self.space.n:
                raise ValueError(f"Lagrangian frame must have dimension {self.space.n}")

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def as_kind(self, kind: str) -> Frame:
        return make_frame(self.space, self.basis, kind, self.tol)


class LagrangianFrame(Frame):
    """Frame checked to be isotropic of dimension ``n``."""

    def __init__(self, space: SymplecticSpace, basis, tol: Tolerances | None = None):
        super().__init__(space, basis, "lagrangian", tol)


def make_frame(space, basis, kind="subspace", tol=None) -> Frame:
    if kind == "lagrangian":
        return LagrangianFrame(space, basis, tol)
    return Frame(space, basis, kind, tol)


def span(space: SymplecticSpace, vectors, tol: Tolerances | None = None, kind="subspace") -> Frame:
    """Frame of the span of ``vectors``; linearly dependent columns are dropped."""
    A = np.asarray(vectors)
    if A.ndim == 1:
        A = A[:, None]
    U, _ = _orthonormal_span(A, _tol(tol))
    return make_frame(space, U, kind, tol)


def isotropy_defect(F: Frame) -> float:
    if F.dim == 0:
        return 0.0
    return float(np.abs(F.space.pairing(F.basis, F.basis)).max())


def is_isotropic(F: Frame, tol: Tolerances | None = None) -> bool:
    return isotropy_defect(F) <= _tol(tol).isotropy


def is_lagrangian(F: Frame, tol: Tolerances | None = None) -> bool:
    """True iff ``F`` has dimension ``n`` and the form vanishes on it."""
    return F.dim == F.space.n and is_isotropic(F, tol)


def _check_space(*frames: Frame) -> SymplecticSpace:
    space = frames[0].space
    for F in frames[1:]:
        if not space.compatible(F.space):
            raise ValueError("frames live in different symplectic spaces")
    return space


def sum_span(F1: Frame, F2: Frame, tol: Tolerances | None = None) -> Frame:
    space = _check_space(F1, F2)
    return span(space, np.hstack([F1.basis, F2.basis]), tol)


def intersect(F1: Frame, F2: Frame, tol: Tolerances | None = None) -> Frame:
    """Orthonormal frame of ``span(F1) ∩ span(F2)``.

    The dimension is ``k1 + k2 - rank[F1 F2]``; the basis comes from the right
    singular vectors of ``[F1, -F2]`` belonging to the dropped singular values.
    """
    space = _check_space(F1, F2)
    tol = _tol(tol)
    k1 = F1.dim
    if k1 == 0 or F2.dim == 0:
        return Frame(space, np.zeros((space.dim, 0), dtype=F1.basis.dtype), tol=tol)
    K = np.hstack([F1.basis, -F2.basis])
    _, s, Vh = np.linalg.svd(K)
    r = tol.rank(s, K.shape)
    null = np.conj(Vh[r:]).T
    vecs = F1.basis @ null[:k1] + F2.basis @ null[k1:]
    kind = "isotropic" if F1.kind != "subspace" or F2.kind != "subspace" else "subspace"
    Q, _ = np.linalg.qr(vecs)
    return Frame(space, Q, kind, tol)


def skew_complement(F: Frame, tol: Tolerances | None = None) -> Frame:
    """Frame of ``{u : sigma(w, u) = 0 for all w in F}``."""
    space = F.space
    tol = _tol(tol)
    if F.dim == 0:
        return Frame(space, np.eye(space.dim, dtype=space.dtype), tol=tol)
    G = np.conj(F.basis).T @ space.form.T
    _, s, Vh = np.linalg.svd(G)
    r = tol.rank(s, G.shape)
    return Frame(space, np.conj(Vh[r:]).T, tol=tol)


def _darboux_real(G: np.ndarray) -> np.ndarray:
    """Coordinates D with ``D^T G D = J^T`` for a real nondegenerate skew ``G``.

    Symplectic Gram-Schmidt with pivoting on the largest pairing.
    """
    m = G.shape[0]
    vecs = np.eye(m)
    es, fs = [], []
    while vecs.shape[1]:
        P = vecs.T @ G @ vecs
        i, j = np.unravel_index(np.argmax(np.abs(P)), P.shape)
        e = vecs[:, i]
        f = vecs[:, j] / P[i, j]
        es.append(e)
        fs.append(f)
        rest = np.delete(vecs, [i, j], axis=1)
        if rest.shape[1]:
            se = e @ G @ rest
            sf = f @ G @ rest
            rest = rest + np.outer(e, sf) - np.outer(f, se)
            rest, _ = np.linalg.qr(rest)
        vecs = rest
    return np.column_stack(es + fs)


def _darboux_complex(G: np.ndarray) -> np.ndarray:
    """Coordinates D with ``D^H G D = J^T`` for a skew-Hermitian ``G`` of balanced type."""
    m = G.shape[0]
    r = m // 2
    w, U = np.linalg.eigh(1j * G)
    if np.sum(w < 0) != r:
        raise ValueError("form restricted to the complement is not of split type")
    E = U / np.sqrt(np.abs(w))
    ws, W = np.linalg.eigh(1j * standard_form(r).T)
    return E @ np.conj(W).T


@dataclass(frozen=True, eq=False)
class Reduction:
    """Concrete model of ``V^perp / V`` for an isotropic ``V``.

    ``complement`` is an orthonormal basis of the orthogonal complement of ``V``
    inside ``V^perp``; ``coords`` maps its coefficients to Darboux coordinates of
    the reduced standard space.
    """

    source: SymplecticSpace
    isotropic: Frame
    perp: Frame
    complement: np.ndarray
    coords: np.ndarray
    space: SymplecticSpace | None
    tol: Tolerances

    def apply(self, L: Frame) -> Frame:
        """Image of ``L`` in the reduced space: ``(L ∩ V^perp + V) / V``."""
        if self.space is None:
            raise ValueError("reduction by a Lagrangian subspace leaves a zero space")
        M = intersect(L, self.perp, self.tol)
        c = np.conj(self.complement).T @ M.basis
        y = np.linalg.solve(self.coords, c)
        kind = "isotropic" if L.kind != "subspace" else "subspace"
        F = span(self.space, y, self.tol, kind=kind)
        if L.kind == "lagrangian" and F.dim == self.space.n:
            F = F.as_kind("lagrangian")
        return F


def reduction(V: Frame, tol: Tolerances | None = None) -> Reduction:
    """Set up symplectic reduction by the isotropic subspace ``V``."""
    tol = _tol(tol)
    space = V.space
    if not is_isotropic(V, tol):
        raise ValueError("reduction needs an isotropic subspace")
    perp = skew_complement(V, tol)
    if V.dim == 0 and np.array_equal(space.form, standard_form(space.n)):
        # nothing to quotient; keep the original coordinates
        I = np.eye(space.dim, dtype=space.dtype)
        return Reduction(space, V, perp, I, I, standard_space(space.n, space.field), tol)
    # orthogonal complement of V inside V^perp
    proj = perp.basis - V.basis @ (np.conj(V.basis).T @ perp.basis)
    U, s, _ = np.linalg.svd(proj, full_matrices=False)
    m = space.dim - 2 * V.dim
    C = U[:, :m]
    if m == 0:
        return Reduction(space, V, perp, C, np.zeros((0, 0)), None, tol)
    G = space.pairing(C, C)
    if space.is_complex:
        D = _darboux_complex(G)
    else:
        D = _darboux_real(0.5 * (G - G.T))
    return Reduction(space, V, perp, C, D, standard_space(m // 2, space.field), tol)


def symplectic_reduce(L: Frame, V: Frame, tol: Tolerances | None = None) -> Frame:
    """Frame of ``L^V = (L ∩ V^perp + V) / V`` in the reduced standard space.

    When ``V = L`` is Lagrangian the quotient is the zero space; a frame with no
    columns in a dimension-zero ambient cannot be represented, so ``ValueError``
    is raised in that case by :meth:`Reduction.apply`.
    """
    return reduction(V, tol).apply(L)


@dataclass(frozen=True, eq=False)
class SymplecticMatrix:
    """Linear map ``T`` with ``T^H Omega T = Omega`` on a symplectic space."""

    space: SymplecticSpace
    matrix: np.ndarray
    tol: Tolerances | None = None

    def __post_init__(self):
        M = np.asarray(self.matrix)
        if M.shape != (self.space.dim, self.space.dim):
            raise ValueError("matrix shape does not match the space")
        if np.iscomplexobj(M) and not self.space.is_complex:
            raise ValueError("complex matrix on a real space")
        M = M.astype(self.space.dtype if self.space.is_complex else float)
        object.__setattr__(self, "matrix", _frozen(M))
        scale = max(1.0, float(np.abs(M).max()) ** 2)
        d = self.defect
        if d > _tol(self.tol).symp * scale:
            raise ValueError(f"matrix is not symplectic (defect {d:.2e})")

    @property
    def defect(self) -> float:
        M = self.matrix
        Om = self.space.form
        return float(np.abs(np.conj(M).T @ Om @ M - Om).max())

    def inverse(self) -> SymplecticMatrix:
        Om = self.space.form
        inv = np.linalg.solve(Om, np.conj(self.matrix).T @ Om)
        return SymplecticMatrix(self.space, inv, self.tol)

    def __matmul__(self, other):
        if isinstance(other, SymplecticMatrix):
            if not self.space.compatible(other.space):
                raise ValueError("maps act on different spaces")
            return SymplecticMatrix(self.space, self.matrix @ other.matrix, self.tol)
        if isinstance(other, Frame):
            if not self.space.compatible(other.space):
                raise ValueError("frame lives in a different space")
            return make_frame(other.space, self.matrix @ other.basis, other.kind, other.tol)
        return NotImplemented

    def power(self, k: int) -> SymplecticMatrix:
        return SymplecticMatrix(self.space, np.linalg.matrix_power(self.matrix, k), self.tol)

    def complexified(self) -> SymplecticMatrix:
        return SymplecticMatrix(self.space.complexified(), self.matrix.astype(complex), self.tol)


def vertical(space: SymplecticSpace) -> Frame:
    """Vertical subspace ``{q = 0}`` of a standard space (first ``n`` coordinates)."""
    return LagrangianFrame(space, np.eye(space.dim, space.n, dtype=space.dtype))


def horizontal(space: SymplecticSpace) -> Frame:
    """Horizontal subspace ``{p = 0}`` (last ``n`` coordinates)."""
    return LagrangianFrame(space, np.eye(space.dim, space.n, -space.n, dtype=space.dtype))


def darboux_transform(L0: Frame, L2: Frame, tol: Tolerances | None = None) -> SymplecticMatrix:
    """Symplectic ``T`` of the standard space with ``T L0 = horizontal``, ``T L2 = vertical``.

    Builds ``S = [l2 | l0']`` with ``l0'`` the basis of ``L0`` dual to the
    orthonormal basis of ``L2`` under the form, and returns ``S^{-1}``.
    """
    space = _check_space(L0, L2)
    n = space.n
    if not np.array_equal(space.form, standard_form(n)):
        raise ValueError("darboux_transform expects the standard space")
    if L0.dim != n or L2.dim != n:
        raise ValueError("darboux_transform needs two Lagrangian frames")
    G = space.pairing(L2.basis, L0.basis)
    s = np.linalg.svd(G, compute_uv=False)
    if _tol(tol).rank(s, G.shape) < n:
        raise ValueError("L0 and L2 are not transversal")
    S = np.hstack([L2.basis, L0.basis @ np.linalg.inv(G)])
    J = space.form
    T = -J @ np.conj(S).T @ J
    return SymplecticMatrix(space, T, tol)
