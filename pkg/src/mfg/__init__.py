"""Finite-difference toolkit for mean field games.

Subpackages cover the pieces of the discrete system: grids and difference
operators, monotone discrete Hamiltonians, the coupled backward/forward
steppers, fixed-point and variational solvers, multigrid-preconditioned
Krylov linear algebra, and a stationary heterogeneous-agent model.
"""

from mfg.grid import Grid
from mfg.core import MFGProblem

__all__ = ["Grid", "MFGProblem"]
__version__ = "0.1.0"
