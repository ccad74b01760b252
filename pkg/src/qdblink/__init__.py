"""qdblink: simulation and analysis of blinking quantum-dot photon sources.

The library covers the full chain from a physical rate model to measured
observables: Monte-Carlo time-tag streams, auto-/cross-correlation
histograms, pulse-binned bunching fits that recover the charge capture
rates, gate-laser intensity analyses and two-photon polarization
tomography with maximum-likelihood reconstruction.
"""

__version__ = "0.1.0"

from .correlate import (CorrelationHistogram, GaussianTraceCheck, PulsePeaks,
                        correlate, gaussian_trace_check, log_correlate,
                        pulse_bin)
from .dynamics import (GateLaserConfig, RateSet, SteadyState, apply_gate,
                       decompose_rates, g2_auto_model, g2_cross_model,
                       steady_state)
from .errors import (FitConvergenceError, MleConvergenceError, NoBunchingError,
                     NumericsError, ValidationError)
from .fitting import (BlinkFitResult, SaturationFit, SweepRow, SweepTable,
                      choose_norm_window, estimate_gamma_b, fit_auto,
                      fit_cross, fit_saturation, intensity_ratios,
                      normalized_intensity, sweep_analysis)
from .qttfile import read_stream, write_stream
from .simulate import (DetectorModel, PulseTrain, simulate_intensity_trace,
                       simulate_polarized_pairs, simulate_stream)
from .stream import CHANNELS, TimeTagStream
from .tomography import (CANONICAL_SETTINGS, FULL_SETTINGS, CoincidenceRecord,
                         DensityMatrix4, ProjectorSetting, bell_phi_plus,
                         fidelity, linear_reconstruct, mle_reconstruct,
                         projector, resample_errors, werner_state)

__all__ = [
    "__version__",
    # dynamics
    "RateSet", "GateLaserConfig", "SteadyState", "steady_state",
    "g2_auto_model", "g2_cross_model", "decompose_rates", "apply_gate",
    # simulation
    "PulseTrain", "DetectorModel", "TimeTagStream", "CHANNELS",
    "simulate_stream", "simulate_intensity_trace", "simulate_polarized_pairs",
    # correlation
    "CorrelationHistogram", "PulsePeaks", "GaussianTraceCheck",
    "correlate", "pulse_bin", "log_correlate", "gaussian_trace_check",
    # fitting
    "BlinkFitResult", "SaturationFit", "SweepRow", "SweepTable",
    "fit_auto", "fit_cross", "fit_saturation", "normalized_intensity",
    "intensity_ratios", "sweep_analysis", "estimate_gamma_b",
    "choose_norm_window",
    # tomography
    "ProjectorSetting", "CoincidenceRecord", "DensityMatrix4",
    "CANONICAL_SETTINGS", "FULL_SETTINGS", "projector", "bell_phi_plus",
    "werner_state", "linear_reconstruct", "mle_reconstruct", "fidelity",
    "resample_errors",
    # io
    "read_stream", "write_stream",
    # errors
    "ValidationError", "NumericsError", "FitConvergenceError",
    "NoBunchingError", "MleConvergenceError",
]
