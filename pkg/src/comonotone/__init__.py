"""
Comonotone approximation of periodic functions by trigonometric polynomials.

The main entry point is :func:`assemble_tau`, which returns a polynomial whose
derivative changes sign exactly where ``f'`` does and whose error decays like
``n^{-r}`` for ``f`` in ``W^r``.
"""

from .corpus import CorpusEntry, corpus, get_entry
from .decompose import SplitFunctions, build_split
from .kernels import (
    KernelConstants,
    estimate_constants,
    gamma,
    jackson_poly,
    make_kernel,
)
from .operators import (
    ApproximationResult,
    ConstantsLedger,
    StageError,
    assemble_tau,
    resolve_constants,
    resolve_strict,
)
from .partition import PartitionState, UniformGrid, build_partition, lemma1_constant
from .step import StepApproximant, build_step
from .trigpoly import BreakpointSet, LinearPlusTrig, TrigPoly, make_pi
from .verify import (
    RateFit,
    comonotonicity_margin,
    divided_difference,
    fit_rate,
    sup_error,
)

__version__ = "0.1.0"

__all__ = [
    "ApproximationResult",
    "BreakpointSet",
    "ConstantsLedger",
    "CorpusEntry",
    "KernelConstants",
    "LinearPlusTrig",
    "PartitionState",
    "RateFit",
    "SplitFunctions",
    "StageError",
    "StepApproximant",
    "TrigPoly",
    "UniformGrid",
    "assemble_tau",
    "build_partition",
    "build_split",
    "build_step",
    "comonotonicity_margin",
    "corpus",
    "divided_difference",
    "estimate_constants",
    "fit_rate",
    "gamma",
    "get_entry",
    "jackson_poly",
    "lemma1_constant",
    "make_kernel",
    "make_pi",
    "resolve_constants",
    "resolve_strict",
    "sup_error",
]
