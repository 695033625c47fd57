"""Phase-space solver and verification suite for first-order kinetic
mean field games with local couplings.

The primal problem minimizes a convex cost over density/flux pairs (m, w)
subject to the kinetic continuity equation

    dm/dt + v . D_x m + div_v w = 0,    m(0) = m0,

on the unit torus in x and a truncated velocity box.  The dual problem
optimizes a relaxed Hamilton-Jacobi value function u with couplings
(beta, beta_T).  The solver is a Chambolle-Pock primal-dual scheme whose
convergence certificate is the vanishing duality gap; the diagnostics
package checks the optimality couplings, the energy equality, kinetic
regularity quotients and commutator decay rates on the computed fields.
"""

from kmfg.grid import GridSpec, ScalarField, VectorField, build_grid, integrate_slice, shift_field
from kmfg.model import ModelSpec, InitialDensity, build_initial_density
from kmfg.solver import SolverConfig, FlowState, ValueState, pdhg_solve

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "build_grid",
    "integrate_slice",
    "shift_field",
    "ModelSpec",
    "InitialDensity",
    "build_initial_density",
    "SolverConfig",
    "FlowState",
    "ValueState",
    "pdhg_solve",
]
