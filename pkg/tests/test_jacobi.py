from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from graphmorse.jacobi import (
    LegendreError,
    LinearHamiltonianSystem,
    LQEdgeData,
    TimeMatrix,
    bvp_solution_dim,
    conjugate_times,
    flow,
    integrate_flow,
    jacobi_from_lq,
    lq_hamiltonian,
    symplectic_defect,
    symplectic_project,
)
from graphmorse.sampling import random_symmetric
from graphmorse.symplectic import Tolerances, standard_form, standard_space, vertical

from builders import free_particle_lq, oscillator, oscillator_lq, rand_lq


def rot(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def smooth_system(seed: int, n: int = 2, t1: float = 2.0) -> LinearHamiltonianSystem:
    rng = np.random.default_rng(seed)
    H0, H1, H2 = (random_symmetric(2 * n, rng) for _ in range(3))
    return LinearHamiltonianSystem(n, lambda t: H0 + np.sin(2 * t) * H1 + t * t * H2 / 4, 0.0, t1)


def reference_flow(sys: LinearHamiltonianSystem, t: float) -> np.ndarray:
    J = standard_form(sys.n)
    m = 2 * sys.n

    def rhs(s, y):
        return (J @ sys.H(s) @ y.reshape(m, m)).ravel()

    sol = solve_ivp(rhs, (sys.t0, t), np.eye(m).ravel(), method="DOP853", rtol=1e-12, atol=1e-13)
    return sol.y[:, -1].reshape(m, m)


def test_oscillator_hamiltonian_is_identity():
    assert np.allclose(jacobi_from_lq(oscillator_lq(1.0)).H(0.3), np.eye(2))


def test_positive_state_cost_gives_saddle():
    # W = +1 penalizes x, so the Hessian block in x is -1
    H = lq_hamiltonian(*(np.eye(1) * c for c in (0, 1, 1, 0, 1)))
    assert np.allclose(H, np.diag([1.0, -1.0]))


@pytest.mark.parametrize("t", [0.5, np.pi / 2, 2.0, 5.0])
def test_oscillator_flow_is_rotation(t):
    Th = flow(oscillator(t))
    assert np.allclose(Th.matrix, rot(t), atol=1e-12)


def test_free_particle_flow_is_shear():
    Th = flow(jacobi_from_lq(free_particle_lq(2.5)))
    assert np.allclose(Th.matrix, [[1.0, 0.0], [2.5, 1.0]], atol=1e-14)


def test_zero_hamiltonian_flow_is_identity():
    sys = LinearHamiltonianSystem.constant(np.zeros((4, 4)), 0.0, 3.0)
    assert np.array_equal(flow(sys).matrix, np.eye(4))


@pytest.mark.parametrize("seed", range(5))
def test_hamiltonian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, k = 2, 2
    A, B, W, S, R = rand_lq(rng, n, k, 1.0).at(0.0)

    def h(z):
        p, x = z[:n], z[n:]
        u = np.linalg.solve(R, B.T @ p - S.T @ x)
        return p @ (A @ x + B @ u) - 0.5 * (x @ W @ x + 2 * x @ S @ u + u @ R @ u)

    step = 1e-4
    m = 2 * n
    E = np.eye(m)
    fd = np.zeros((m, m))
    z0 = rng.standard_normal(m)
    for i in range(m):
        for j in range(m):
            fd[i, j] = (h(z0 + step * (E[i] + E[j])) - h(z0 + step * (E[i] - E[j]))
                        - h(z0 - step * (E[i] - E[j])) + h(z0 - step * (E[i] + E[j]))) / (4 * step**2)
    assert np.allclose(lq_hamiltonian(A, B, W, S, R), fd, atol=1e-6)


def test_piecewise_constant_is_product_of_exponentials():
    H1 = np.array([[1.0, 0.2], [0.2, -0.5]])
    H2 = np.array([[0.3, 0.0], [0.0, 2.0]])
    sys = LinearHamiltonianSystem(1, lambda t: H1 if t < 0.7 else H2, 0.0, 1.5, (0.7,), True)
    J = standard_form(1)
    expect = expm(0.8 * J @ H2) @ expm(0.7 * J @ H1)
    assert np.allclose(flow(sys).matrix, expect, atol=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_smooth_flow_against_reference_solver(seed):
    sys = smooth_system(seed)
    assert np.allclose(flow(sys).matrix, reference_flow(sys, sys.t1), atol=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_group_law(seed):
    sys = smooth_system(seed, t1=3.0)
    a = flow(sys.restricted(0.0, 1.1))
    b = flow(sys.restricted(1.1, 3.0))
    whole = flow(sys)
    assert np.allclose((b @ a).matrix, whole.matrix, atol=1e-9)


def test_checkpoints_and_defect():
    sys = smooth_system(0, t1=2.0)
    res = integrate_flow(sys, [0.5, 1.0, 1.5])
    assert [t for t, _ in res.checkpoints] == [0.5, 1.0, 1.5]
    assert res.symplectic_defect <= 1e-10
    for t, M in res.checkpoints:
        assert np.allclose(M, reference_flow(sys, t), atol=1e-9)


def test_checkpoint_validation():
    sys = oscillator(1.0)
    with pytest.raises(ValueError, match="outside"):
        integrate_flow(sys, [2.0])
    with pytest.raises(ValueError, match="increasing"):
        integrate_flow(sys, [0.6, 0.3])


def test_piecewise_polynomial_data():
    # W(t) = -(1 + t) on [0, 1), then -2 on [1, 2]
    W = TimeMatrix.piecewise([0.0, 1.0, 2.0], [[[[-1.0]], [[-1.0]]], [[[-2.0]]]])
    assert W(0.5)[0, 0] == pytest.approx(-1.5)
    assert W(1.5)[0, 0] == pytest.approx(-2.0)
    d = LQEdgeData(0.0, 1.0, W, 0.0, 1.0, 0.0, 2.0)
    assert d.breaks == (1.0,)
    assert not d.is_piecewise_constant
    sys = jacobi_from_lq(d)
    assert np.allclose(flow(sys).matrix, reference_flow(sys, 2.0), atol=1e-9)


def test_lq_validation():
    with pytest.raises(LegendreError):
        LQEdgeData(0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0)
    with pytest.raises(LegendreError):
        LQEdgeData(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError, match="symmetric"):
        LQEdgeData(np.zeros((2, 2)), np.eye(2), [[0, 1], [0, 0]], np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError, match="shape"):
        LQEdgeData(np.zeros((2, 2)), np.eye(2), np.zeros((3, 3)), np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError, match="infinite"):
        LQEdgeData(0.0, 1.0, 0.0, 0.0, 1.0, 0.0, np.inf)


def test_symplectic_project_repairs_drift():
    rng = np.random.default_rng(0)
    M = expm(standard_form(2) @ random_symmetric(4, rng)) + 1e-7 * rng.standard_normal((4, 4))
    assert symplectic_defect(M) > 1e-8
    assert symplectic_defect(symplectic_project(M)) < 1e-13


@given(st.integers(0, 2**31), st.floats(0.3, 4.0))
def test_rescaled_flow_unchanged(seed, t1):
    # fast-growing samples hit the float64 defect floor; only the reparametrization is tested here
    tol = Tolerances(symp=1e-6)
    sys = smooth_system(seed % 1000, n=1, t1=t1)
    a, b = flow(sys, tol).matrix, flow(sys.rescaled(), tol).matrix
    assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


def test_conjugate_times_oscillator():
    ts = conjugate_times(oscillator(3.5))
    assert len(ts) == 1
    t, mult = ts[0]
    assert t == pytest.approx(np.pi, abs=1e-8)
    assert mult == 1 and ts[0].stable


def test_conjugate_times_free_particle():
    assert conjugate_times(jacobi_from_lq(free_particle_lq(10.0))) == []


def test_conjugate_times_double_oscillator():
    ts = conjugate_times(oscillator(3.5, n=2))
    assert [(round(t, 7), m) for t, m in ts] == [(round(np.pi, 7), 2)]


def test_conjugate_times_several_and_endpoint():
    ts = conjugate_times(oscillator(2 * np.pi))
    assert [m for _, m in ts] == [1, 1]
    assert ts[0].time == pytest.approx(np.pi, abs=1e-8)
    assert ts[1].time == pytest.approx(2 * np.pi, abs=1e-8)


def test_conjugate_times_frequency():
    ts = conjugate_times(oscillator(4.0, omega=2.0))
    assert [round(t, 6) for t, _ in ts] == [round(k * np.pi / 2, 6) for k in (1, 2)]


def test_bvp_dimensions():
    sp = standard_space(2)
    Pi = vertical(sp)
    I = flow(LinearHamiltonianSystem.constant(np.zeros((4, 4))))
    assert bvp_solution_dim(I, Pi, Pi) == 2
    P1 = vertical(standard_space(1))
    assert bvp_solution_dim(flow(oscillator(np.pi)), P1, P1) == 1
    assert bvp_solution_dim(flow(oscillator(np.pi / 2)), P1, P1) == 0


@pytest.mark.parametrize("n", [1, 2])
def test_bvp_dimension_matches_conjugate_multiplicity(n):
    sys = oscillator(np.pi, n)
    ts = conjugate_times(sys)
    Pi = vertical(standard_space(n))
    assert ts[-1].time == pytest.approx(np.pi, abs=1e-8)
    assert ts[-1].multiplicity == bvp_solution_dim(flow(sys), Pi, Pi) == n
