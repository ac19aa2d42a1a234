"""Perturbative thermal (KMS) states of scalar field theories: propagators, graph expansion, case studies."""

from . import casestudies, cutoff, expansion, graphs, propagators, quadrature
from .casestudies import CaseResult
from .cutoff import CutoffFamily
from .expansion import evaluate, evaluate_terms, expansion_terms
from .casestudies import MEASURE_6D
from .propagators import MEASURE_3D, DomainError, ThermalParams

__all__ = ["casestudies", "cutoff", "expansion", "graphs", "propagators", "quadrature", "CaseResult",
           "CutoffFamily", "evaluate", "evaluate_terms", "expansion_terms", "MEASURE_3D", "MEASURE_6D",
           "DomainError", "ThermalParams"]
__version__ = "0.1.0"
