from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphmorse.maslov import hermitian_triple_index, kashiwara, maslov_form, triple_index
from graphmorse.sampling import random_lagrangian, random_symplectic
from graphmorse.symplectic import Frame, LagrangianFrame, intersect, span, standard_space
from graphmorse.theorems import circle_index, circle_triple_index

from builders import flag_lagrangian, lagrangian_quadruple, rotation

PLANE = standard_space(1)


def line(x, y, space=PLANE):
    return LagrangianFrame(space, np.array([[x], [y]], dtype=space.dtype))


def perm_sign(p) -> int:
    sign = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def test_form_on_diagonal_line():
    # l1 = (1,1)/sqrt2 splits as l0 = (1,0)/sqrt2, l2 = (0,1)/sqrt2; sigma(l0, l2) = 1/2
    _, M = maslov_form(line(1, 0), line(1, 1), line(0, 1))
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(0.5)


def test_form_on_antidiagonal_line():
    _, M = maslov_form(line(1, 0), line(1, -1), line(0, 1))
    assert M[0, 0] == pytest.approx(-0.5)


def test_triple_index_plane_examples():
    r = triple_index(line(1, 0), line(1, 1), line(0, 1))
    assert (r.index_neg, r.signature, r.kernel_dim) == (0, 1, 0)
    r = triple_index(line(1, 0), line(1, -1), line(0, 1))
    assert (r.index_neg, r.signature, r.kernel_dim) == (1, -1, 0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_equal_arguments_give_zero_form(n):
    rng = np.random.default_rng(n)
    sp = standard_space(n)
    L0, L2 = random_lagrangian(sp, rng), random_lagrangian(sp, rng)
    for triple in [(L0, L0, L2), (L0, L2, L2), (L0, L2, L0)]:
        r = triple_index(*triple)
        assert (r.index_neg, r.signature) == (0, 0)
        assert r.kernel_dim == r.domain_dim
        assert np.abs(r.form_matrix).max(initial=0) < 1e-12


def test_result_invariants():
    rng = np.random.default_rng(5)
    sp = standard_space(4)
    for _ in range(20):
        r = triple_index(*(flag_lagrangian(sp, rng, int(rng.integers(0, 5))) for _ in range(3)))
        assert r.index_pos >= 0
        assert r.index_pos - r.index_neg == r.signature
        assert r.index_pos + r.index_neg + r.kernel_dim == r.domain_dim
        assert r.as_dict()["index_neg"] == r.index_neg


def test_errors():
    sp = standard_space(2)
    L = random_lagrangian(sp, np.random.default_rng(0))
    other = random_lagrangian(standard_space(1), np.random.default_rng(0))
    with pytest.raises(ValueError, match="different"):
        triple_index(L, L, other)
    with pytest.raises(ValueError, match="Lagrangian"):
        triple_index(L, Frame(sp, L.basis), L)
    with pytest.raises(ValueError, match="complex"):
        hermitian_triple_index(L, L, L)


@pytest.mark.parametrize("seed", range(8))
def test_complexified_triple_matches_real(seed):
    rng = np.random.default_rng(seed)
    sp = standard_space(3)
    Ls = [flag_lagrangian(sp, rng, int(rng.integers(0, 3))) for _ in range(3)]
    csp = sp.complexified()
    Cs = [LagrangianFrame(csp, L.basis.astype(complex)) for L in Ls]
    a = triple_index(*Ls)
    b = hermitian_triple_index(*Cs)
    assert (a.index_neg, a.signature, a.kernel_dim) == (b.index_neg, b.signature, b.kernel_dim)


def _direct_hermitian_inertia(L0, L1, L2):
    """Independent evaluation of the Hermitian form via lstsq splitting."""
    sp = L0.space
    K = np.hstack([L0.basis, L2.basis])
    # domain: L1 ∩ (L0 + L2)
    dom = intersect(L1, span(sp, K))
    if dom.dim == 0:
        return 0
    c = np.linalg.lstsq(K, dom.basis, rcond=None)[0]
    l0, l2 = L0.basis @ c[: L0.dim], L2.basis @ c[L0.dim:]
    M = np.conj(l0).T @ sp.form.T @ l2
    w = np.linalg.eigvalsh(0.5 * (M + np.conj(M).T))
    return int(np.sum(w < -1e-9))


def _random_complex_lagrangian(sp, rng):
    # a real Lagrangian moved by a complex unitary-symplectic map keeps isotropy for sigma_C
    n = sp.n
    L = random_lagrangian(standard_space(n), rng).basis
    H = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = H + np.conj(H).T
    from scipy.linalg import expm

    U = expm(1j * H)
    # U acts diagonally on p and q: (p, q) -> (U p, conj(U)^{-T} q) preserves sigma_C
    T = np.block([[U, np.zeros((n, n))], [np.zeros((n, n)), np.linalg.inv(np.conj(U).T)]])
    return LagrangianFrame(sp, T @ L.astype(complex))


@pytest.mark.parametrize("seed", range(8))
def test_hermitian_form_against_direct_evaluation(seed):
    rng = np.random.default_rng(seed)
    sp = standard_space(2, "complex")
    Ls = [_random_complex_lagrangian(sp, rng) for _ in range(3)]
    r = hermitian_triple_index(*Ls)
    assert np.allclose(r.form_matrix, np.conj(r.form_matrix).T)
    assert r.index_neg == _direct_hermitian_inertia(*Ls)


@pytest.mark.parametrize("angle", [0.4, 1.0, 2.5, np.pi / 2])
def test_flip_triple_matches_circle_matrix(angle):
    Theta = rotation(angle)
    assert circle_triple_index(Theta, -1.0) == circle_index(Theta, -1.0)


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_alternating_and_cyclic(seed, n):
    rng = np.random.default_rng(seed)
    L = lagrangian_quadruple(standard_space(n), rng)[:3]
    base = triple_index(*L)
    for p in itertools.permutations(range(3)):
        r = triple_index(*(L[i] for i in p))
        assert r.signature == perm_sign(p) * base.signature
        if perm_sign(p) == 1:
            assert r.index_neg == base.index_neg


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_cocycle(seed, n):
    rng = np.random.default_rng(seed)
    L = lagrangian_quadruple(standard_space(n), rng)
    t = lambda a, b, c: kashiwara(L[a], L[b], L[c])
    assert t(0, 1, 2) - t(1, 2, 3) + t(0, 2, 3) - t(0, 1, 3) == 0


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_symplectomorphism_invariance(seed, n):
    rng = np.random.default_rng(seed)
    sp = standard_space(n)
    L = lagrangian_quadruple(sp, rng)[:3]
    T = random_symplectic(sp, rng, 1.0)
    a = triple_index(*L)
    b = triple_index(*(T @ X for X in L))
    assert (a.index_neg, a.signature, a.kernel_dim) == (b.index_neg, b.signature, b.kernel_dim)


@given(st.integers(0, 2**31), st.integers(2, 4))
def test_reduce_first_agrees(seed, n):
    rng = np.random.default_rng(seed)
    sp = standard_space(n)
    d = int(rng.integers(1, n + 1))
    T = random_symplectic(sp, rng, 1.0)
    L = [T @ flag_lagrangian(sp, rng, d) for _ in range(3)]
    a = triple_index(*L)
    b = triple_index(*L, reduce_first=True)
    assert (a.index_neg, a.signature, a.kernel_dim, a.domain_dim) == (
        b.index_neg, b.signature, b.kernel_dim, b.domain_dim)


@pytest.mark.parametrize("seed", range(6))
def test_form_independent_of_splitting(seed):
    rng = np.random.default_rng(seed)
    sp = standard_space(3)
    L0 = flag_lagrangian(sp, rng, 2)
    L2 = flag_lagrangian(sp, rng, 2)
    L1 = random_lagrangian(sp, rng)
    dom, M = maslov_form(L0, L1, L2)
    common = intersect(L0, L2)
    assert common.dim >= 2
    K = np.hstack([L0.basis, L2.basis])
    c = np.linalg.lstsq(K, dom.basis, rcond=None)[0]
    l0, l2 = L0.basis @ c[:3], L2.basis @ c[3:]
    shift = common.basis @ rng.standard_normal((common.dim, dom.dim))
    l0, l2 = l0 + shift, l2 - shift
    assert np.allclose(l0 + l2, dom.basis)
    M2 = sp.pairing(l0, l2)
    assert np.allclose(0.5 * (M2 + M2.T), M, atol=1e-10)
