"""Morse indices of linear-quadratic optimal control problems on metric graphs.

Index differences between boundary conditions, discretizations and iterates
are computed as Maslov indices of Lagrangian triples, and cross-checked
against a brute-force Galerkin count of negative eigenvalues.
"""
from __future__ import annotations

from .graph import (
    BoundaryCondition,
    Edge,
    GraphProblem,
    MetricGraph,
    ProductProblem,
    annihilator,
    product_flow_graph,
)
from .jacobi import (
    ConjugateTime,
    IntegrationError,
    LegendreError,
    LinearHamiltonianSystem,
    LQEdgeData,
    TimeMatrix,
    conjugate_times,
    flow,
    integrate_flow,
    jacobi_from_lq,
)
from .maslov import MaslovResult, hermitian_triple_index, kashiwara, maslov_form, triple_index
from .oracle import (
    NonStabilizationError,
    assemble_hessian,
    conjugate_point_index,
    oracle_index,
)
from .symplectic import (
    DEFAULT_TOL,
    Frame,
    LagrangianFrame,
    SymplecticMatrix,
    SymplecticSpace,
    Tolerances,
    darboux_transform,
    intersect,
    reduction,
    skew_complement,
    standard_space,
    symplectic_reduce,
)
from .theorems import (
    IterationInput,
    circle_index,
    circle_jumps,
    compare_boundaries,
    comparison_index_difference,
    comparison_input,
    discretization_index,
    filtration_contributions,
    iteration_index_I,
    iteration_index_II,
    split_index_correction,
)

__version__ = "0.1.0"
