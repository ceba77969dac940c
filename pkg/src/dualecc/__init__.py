"""Ensemble copula coupling with error-autocorrelation adjustment (d-ECC).

Calibrate raw wind ensembles per lead time with EMOS, rebuild temporally
coherent scenarios by ECC or d-ECC reordering, and verify them with
multivariate scores, rank histograms, spectra and a day-block bootstrap.
"""

__version__ = "0.1.0"

from dualecc._backend import BACKEND
from dualecc.calibration import EmosCoefficients, TrainingWindow, crps_normal, emit_quantiles, fit_emos
from dualecc.copula import climatological_template, decc, ecc, estimate_error_correlation
from dualecc.core import (
    EnsembleForecast,
    ObservationSeries,
    QuantileSet,
    ScenarioSet,
    compute_ranks,
    reorder_by_ranks,
)
from dualecc.errors import ConvergenceError, DualEccError, NotPSDError, StageError, ValidationError
from dualecc.linalg import eigh, sqrt_psd
from dualecc.pipeline import PipelineConfig, VerificationReport, derive_products, evaluate, run_pipeline
from dualecc.spectral import amplitude_spectrum
from dualecc.synthetic import GeneratorConfig, generate
from dualecc.verification import (
    block_bootstrap,
    crps_decomposition,
    crps_ensemble,
    energy_score,
    multivariate_rank,
    variogram_score,
)

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "DualEccError",
    "EmosCoefficients",
    "EnsembleForecast",
    "GeneratorConfig",
    "NotPSDError",
    "ObservationSeries",
    "PipelineConfig",
    "QuantileSet",
    "ScenarioSet",
    "StageError",
    "TrainingWindow",
    "ValidationError",
    "VerificationReport",
    "amplitude_spectrum",
    "block_bootstrap",
    "climatological_template",
    "compute_ranks",
    "crps_decomposition",
    "crps_ensemble",
    "crps_normal",
    "decc",
    "derive_products",
    "ecc",
    "eigh",
    "emit_quantiles",
    "energy_score",
    "estimate_error_correlation",
    "evaluate",
    "fit_emos",
    "generate",
    "multivariate_rank",
    "reorder_by_ranks",
    "run_pipeline",
    "sqrt_psd",
    "variogram_score",
]
