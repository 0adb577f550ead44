"""Optical Bloch simulation and fitting of femtosecond double-pulse delay traces."""
from .units import (BlochState, DomainError, PulseProgram, SystemParams, fwhm_to_tau,
                    linewidth_to_min_dephasing, pulse_area, wavenumber_to_angfreq)
from .integrator import (FULL_WINDOW, DriveEnvelope, IntegratorConfig, Trajectory, drive_at,
                         evolve, evolve_many, rhs, trajectory)
from .experiment import (DelayTrace, NoiseModel, coherence_trace, delay_trace, phase_pair,
                         rabi_curve, synth_counts)
from .estimation import (FIT_CONFIG, FitBounds, FitFailure, FitResult, SearchGrid, batch_fit,
                         fit_trace, objective, scale_factor, t2_histogram)

__version__ = "0.1.0"
