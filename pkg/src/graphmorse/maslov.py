"""Maslov form of a Lagrangian triple and its inertia (real and Hermitian)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symplectic import (
    Frame,
    Tolerances,
    _check_space,
    _tol,
    intersect,
    reduction,
    sum_span,
)


@dataclass(frozen=True, eq=False)
class MaslovResult:
    """Inertia data of the Maslov form of ``(L0, L1, L2)``.

    ``index_neg`` is the negative index i, ``signature`` the Kashiwara index.
    """

    index_neg: int
    signature: int
    kernel_dim: int
    domain_dim: int
    form_matrix: np.ndarray

    @property
    def index_pos(self) -> int:
        return (self.domain_dim - self.kernel_dim + self.signature) // 2

    def as_dict(self) -> dict:
        return {
            "index_neg": self.index_neg,
            "index_pos": self.index_pos,
            "signature": self.signature,
            "kernel_dim": self.kernel_dim,
            "domain_dim": self.domain_dim,
        }


def _require_lagrangian(*frames: Frame) -> None:
    for F in frames:
        if F.kind != "lagrangian":
            raise ValueError("Maslov form needs Lagrangian frames")


def maslov_form(L0: Frame, L1: Frame, L2: Frame, tol: Tolerances | None = None):
    """Return ``(basis, M)`` with ``basis`` spanning ``L1 ∩ (L0 + L2)``.

    Each basis vector ``l1`` is split as ``l0 + l2`` by minimum-norm least
    squares on ``[L0 L2]`` and ``M[i, j] = sigma(l0_i, l2_j)`` (conjugated in the
    first slot for complex spaces).  Any two splittings differ by an element
    of ``L0 ∩ L2``, which pairs to zero with both Lagrangians.
    """
    space = _check_space(L0, L1, L2)
    _require_lagrangian(L0, L1, L2)
    tol = _tol(tol)
    domain = intersect(L1, sum_span(L0, L2, tol), tol)
    k = domain.dim
    if k == 0:
        return domain, np.zeros((0, 0), dtype=space.dtype)
    K = np.hstack([L0.basis, L2.basis])
    U, s, Vh = np.linalg.svd(K, full_matrices=False)
    r = tol.rank(s, K.shape)
    coef = np.conj(Vh[:r]).T @ ((np.conj(U[:, :r]).T @ domain.basis) / s[:r, None])
    n0 = L0.dim
    l0 = L0.basis @ coef[:n0]
    l2 = L2.basis @ coef[n0:]
    M = space.pairing(l0, l2)
    M = 0.5 * (M + np.conj(M).T)
    return domain, M


def _inertia(M: np.ndarray, tol: Tolerances) -> tuple[int, int, int]:
    if M.shape[0] == 0:
        return 0, 0, 0
    w = np.linalg.eigvalsh(M)
    cut = tol.eig_cut(w)
    return int(np.sum(w < -cut)), int(np.sum(w > cut)), int(np.sum(np.abs(w) <= cut))


def triple_index(
    L0: Frame,
    L1: Frame,
    L2: Frame,
    tol: Tolerances | None = None,
    reduce_first: bool = False,
) -> MaslovResult:
    """Negative index, signature and kernel of the Maslov form.

    With ``reduce_first`` the triple is first reduced by ``V = L0 ∩ L1 ∩ L2``.
    ``V`` lies in the kernel of the form, so it is added back to the kernel
    and domain dimensions; ``form_matrix`` is then the reduced one.
    """
    tol = _tol(tol)
    extra = 0
    if reduce_first:
        V = intersect(intersect(L0, L1, tol), L2, tol)
        extra = V.dim
        if V.dim == L0.space.n:
            empty = np.zeros((0, 0), dtype=L0.space.dtype)
            return MaslovResult(0, 0, extra, extra, empty)
        if V.dim:
            red = reduction(V, tol)
            L0, L1, L2 = red.apply(L0), red.apply(L1), red.apply(L2)
    _, M = maslov_form(L0, L1, L2, tol)
    neg, pos, ker = _inertia(M, tol)
    return MaslovResult(neg, pos - neg, ker + extra, M.shape[0] + extra, M)


def hermitian_triple_index(
    L0: Frame,
    L1: Frame,
    L2: Frame,
    tol: Tolerances | None = None,
    reduce_first: bool = False,
) -> MaslovResult:
    """:func:`triple_index` for frames of a complex space (Hermitian form)."""
    if not L0.space.is_complex:
        raise ValueError("hermitian_triple_index expects frames in a complex space")
    return triple_index(L0, L1, L2, tol, reduce_first)


def kashiwara(L0: Frame, L1: Frame, L2: Frame, tol: Tolerances | None = None) -> int:
    return triple_index(L0, L1, L2, tol).signature
