"""Spectral-Galerkin simulation of slow-fast stochastic wave-heat systems.

The package integrates a coupled hyperbolic-parabolic system whose fast
component relaxes on a time scale epsilon, the frozen fast equation that
defines the averaged slow drift, and the averaged wave equation itself,
all in the Dirichlet sine eigenbasis.  A harness runs Monte Carlo
convergence studies of the slow component against the averaged dynamics
and quantitative checks of the moment, regularity and mixing bounds the
solvers rely on.
"""

from .averaged import AveragedRun, ClosedFormDrift, MonteCarloDrift, integrate_averaged
from .coupled import (SystemConfig, TrajectorySample, energy_residual,
                      integrate_auxiliary, integrate_full)
from .errors import (BlowupError, ConfigurationError, EstimationQualityError,
                     SpdeAvgError, UsageError)
from .frozen import (AveragedDriftEstimate, MixingReport, VariationReport,
                     closed_form_avg_drift, estimate_avg_drift, estimate_mixing,
                     first_variation, integrate_frozen)
from .harness import (LemmaCheck, RateReport, RateRow, run_lemma_checks,
                      run_rate_study)
from .model import (AssumptionReport, CoefficientSet, dissipativity_margin,
                    make_fixture, validate_assumptions)
from .noise import NoiseSpec, NoiseStream, make_noise_spec, sample_increment
from .spectral import (SpectralField, WaveState, apply_heat_semigroup,
                       apply_wave_propagator, collocation_grid, eigenvalue,
                       eigenvalues, project, sobolev_norm, synthesize,
                       wave_energy)
from .stats import SlopeFit, fit_loglog_slope, fit_semilog_slope

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "AveragedDriftEstimate", "AveragedRun", "BlowupError",
    "ClosedFormDrift", "CoefficientSet", "ConfigurationError",
    "EstimationQualityError", "LemmaCheck", "MixingReport", "MonteCarloDrift",
    "NoiseSpec", "NoiseStream", "RateReport", "RateRow", "SlopeFit",
    "SpdeAvgError", "SpectralField", "SystemConfig", "TrajectorySample",
    "UsageError", "VariationReport", "WaveState", "apply_heat_semigroup",
    "apply_wave_propagator", "closed_form_avg_drift", "collocation_grid",
    "dissipativity_margin", "eigenvalue", "eigenvalues", "energy_residual",
    "estimate_avg_drift", "estimate_mixing", "first_variation",
    "fit_loglog_slope", "fit_semilog_slope", "integrate_auxiliary",
    "integrate_averaged", "integrate_frozen", "integrate_full",
    "make_fixture", "make_noise_spec", "project", "run_lemma_checks",
    "run_rate_study", "sample_increment", "sobolev_norm", "synthesize",
    "validate_assumptions", "wave_energy",
]
