"""Random symplectic objects for tests and experiments."""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from .symplectic import LagrangianFrame, SymplecticMatrix, SymplecticSpace, standard_form


def random_symmetric(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return scale * (A + A.T) / 2


def random_symplectic(space: SymplecticSpace, rng: np.random.Generator, scale: float = 0.5):
    """``expm(J S)`` for a random symmetric ``S``; ``scale`` bounds the condition number."""
    J = standard_form(space.n)
    S = random_symmetric(space.dim, rng, scale / np.sqrt(space.dim))
    return SymplecticMatrix(space, expm(J @ S))


def random_lagrangian(space: SymplecticSpace, rng: np.random.Generator) -> LagrangianFrame:
    """Haar-random Lagrangian ``span [X; Y]`` with ``X + iY`` unitary."""
    n = space.n
    W = unitary_group.rvs(n, random_state=rng) if n > 1 else np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return LagrangianFrame(space, np.vstack([W.real, W.imag]))
