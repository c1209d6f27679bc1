"""Ground states of 1D trapped bosons with two- and three-body interactions.

NLS and Hartree energy functionals, their constrained minimizers, the
collapse regimes near the critical three-body strength, and exact
diagonalization of the N-body Hamiltonian at small N.
"""
from .functionals import B_CRIT, ModelParams
from .grid import Field, Grid

__version__ = "0.1.0"

__all__ = ["B_CRIT", "Field", "Grid", "ModelParams", "__version__"]
