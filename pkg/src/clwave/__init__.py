"""Classical wave functions and density matrices for probabilistic spin chains."""
from . import boundary, evolution, lattice_core, models, observables, oracle, transforms
from .boundary import BoundaryCondition, Trajectory, solve_boundary
from .errors import NormalizationError, SingularOperatorError, UnsupportedCaseError, ValidationError
from .lattice_core import ChainSpec, StepOperator

__version__ = "0.1.0"
