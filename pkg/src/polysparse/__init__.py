"""Exact (k, l)-sparse polynomial regression with kernel input ranking."""

__version__ = "0.1.0"

from .basis import BasisCatalog, MonomialIndex, enumerate_basis, n_monomials
from .errors import CapacityError, DataError, NumericalError, PolySparseError
from .kernel import loss_c, loss_c_primal, polynomial_kernel
from .lasso import fit_elastic_net, path_to_support
from .ranking import InputRanking, rank_inputs, select_top
from .solver import SparseFit, SparsityPattern, solve

__all__ = [
    "BasisCatalog", "MonomialIndex", "enumerate_basis", "n_monomials",
    "CapacityError", "DataError", "NumericalError", "PolySparseError",
    "loss_c", "loss_c_primal", "polynomial_kernel",
    "fit_elastic_net", "path_to_support",
    "InputRanking", "rank_inputs", "select_top",
    "SparseFit", "SparsityPattern", "solve",
]
