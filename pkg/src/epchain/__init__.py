"""Conserved operators and dynamics of a spin chain at an exceptional point.

Modules: opalg (exact Pauli-string algebra), chain (concrete operators and
states), jordan (generalized eigenvectors and block theory), dynamics
(non-unitary evolution), fitting (timescale extraction), circuit
(measurement + post-selection protocol), cli (figure-data pipelines).
"""

__version__ = "0.1.0"

from .chain import DefectSpec, SpinChainParams          # noqa: F401
from .dynamics import EvolutionConfig, TimeSeries       # noqa: F401
from .opalg import Coeff, OperatorExpr, SiteOp          # noqa: F401
