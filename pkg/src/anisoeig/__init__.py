"""Principal eigenvalues of strongly anisotropic elliptic operators.

Finite-difference assembly, Perron eigensolver, local spectra and small-eps
limit predictors, explicit Hamilton-Jacobi solutions, and a Monte Carlo for
the quasi-stationary law of the matching killed diffusion.
"""

from __future__ import annotations

from .eig import EigenPair, dense_oracle, principal_eigenpair
from .errors import (
    AnisoError,
    CoefficientError,
    ConfigError,
    ConvergenceError,
    EvaluationError,
    ExprSyntaxError,
    HypothesisError,
    NumericalError,
    PositivityError,
)
from .expr import evaluate, parse
from .grid import Domain1D, Grid1D, Grid2D, Kind, build_grid, cell_measure
from .hj import HjSolution, build_ubar, build_v, hj_residual
from .operator import CoefficientSet, SparseOperator, apply, assemble_global, assemble_local
from .qsd import ParticleEnsemble, QsdEstimate, qsd_sweep, simulate
from .spectrum import (
    LimitPrediction,
    LocalSpectrum,
    Regime,
    TransportIntegrals,
    local_spectrum,
    predict_limit,
    slice_tv_diagnostic,
)

__version__ = "0.1.0"

__all__ = [
    "AnisoError", "CoefficientError", "ConfigError", "ConvergenceError", "EvaluationError",
    "ExprSyntaxError", "HypothesisError", "NumericalError", "PositivityError",
    "parse", "evaluate",
    "Kind", "Domain1D", "Grid1D", "Grid2D", "build_grid", "cell_measure",
    "CoefficientSet", "SparseOperator", "assemble_global", "assemble_local", "apply",
    "EigenPair", "principal_eigenpair", "dense_oracle",
    "LocalSpectrum", "LimitPrediction", "Regime", "TransportIntegrals", "local_spectrum",
    "predict_limit", "slice_tv_diagnostic",
    "HjSolution", "build_ubar", "build_v", "hj_residual",
    "ParticleEnsemble", "QsdEstimate", "simulate", "qsd_sweep",
]
