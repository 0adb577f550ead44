"""Observables built from integrator runs: delay traces, phase pairs,
Rabi-flopping curves and Poisson-noisy synthetic count data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import IntegratorConfig, evolve_many
from .units import DomainError, SystemParams

SIMULATED = "simulated"
MEASURED = "measured"

RHO11 = "rho11"
COHERENCE = "coherence_v"
COUNTS = "counts_per_s"


def default_delays() -> np.ndarray:
    """0-600 fs in 10 fs steps."""
    return np.arange(0.0, 601.0, 10.0)


@dataclass(frozen=True, eq=False)
class DelayTrace:
    """Observable sampled on a strictly increasing delay grid (fs)."""

    delays: np.ndarray
    values: np.ndarray
    kind: str = SIMULATED
    phase: float = 0.0
    quantity: str = RHO11
    coherence: np.ndarray | None = field(default=None)

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "values", values)
        if delays.ndim != 1 or delays.shape != values.shape:
            raise DomainError("delays and values must be 1-D arrays of equal length")
        if delays.size == 0:
            raise DomainError("a trace needs at least one point")
        if np.any(np.diff(delays) <= 0):
            raise DomainError("delays must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DomainError("trace values must be finite")
        if self.kind not in (SIMULATED, MEASURED):
            raise DomainError(f"unknown trace kind {self.kind!r}")
        if self.kind == MEASURED and np.any(values < 0):
            raise DomainError("measured values must be non-negative")
        if self.quantity == RHO11 and np.any((values < 0) | (values > 1)):
            raise DomainError("populations must lie in [0, 1]")
        if self.quantity == COHERENCE and np.any(np.abs(values) > 1):
            raise DomainError("coherences must lie in [-1, 1]")
        if self.coherence is not None:
            object.__setattr__(self, "coherence", np.asarray(self.coherence, dtype=float))

    def __len__(self):
        return self.delays.size

    def __eq__(self, other):
        if not isinstance(other, DelayTrace):
            return NotImplemented
        same_coh = (self.coherence is None and other.coherence is None) or (
            self.coherence is not None and other.coherence is not None
            and np.array_equal(self.coherence, other.coherence))
        return (self.kind == other.kind and self.quantity == other.quantity
                and self.phase == other.phase and same_coh
                and np.array_equal(self.delays, other.delays)
                and np.array_equal(self.values, other.values))

    def value_at(self, delay: float) -> float:
        idx = np.flatnonzero(self.delays == delay)
        if idx.size == 0:
            raise KeyError(delay)
        return float(self.values[idx[0]])


@dataclass(frozen=True)
class NoiseModel:
    """Shot-noise model: ``scale`` counts/s at rho11 = 1, ``dwell`` s per point."""

    scale: float
    dwell: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive, got {self.scale!r}")
        if not (self.dwell > 0 and math.isfinite(self.dwell)):
            raise DomainError(f"dwell must be positive, got {self.dwell!r}")


def _check_grid(delays) -> np.ndarray:
    delays = np.asarray(delays, dtype=float)
    if delays.ndim != 1 or delays.size == 0:
        raise DomainError("delay grid must be a non-empty 1-D sequence")
    if np.any(np.diff(delays) <= 0):
        raise DomainError("delay grid must be strictly increasing")
    if np.any(delays < 0):
        raise DomainError("delays must be non-negative")
    return delays


def _readout(params: SystemParams, phase, delays, cfg):
    cfg = cfg or IntegratorConfig()
    return evolve_many(params.omega_r0, params.t2_star, params.delta, params.tau_p,
                       delays, phase, cfg)


def delay_trace(params: SystemParams, phase: float = 0.0, delays=None,
                cfg: IntegratorConfig | None = None) -> DelayTrace:
    """Excited-state population at readout versus delay.

    The v-component at readout is kept alongside in ``coherence``.
    """
    delays = _check_grid(default_delays() if delays is None else delays)
    states = _readout(params, phase, delays, cfg)
    rho11 = np.clip(0.5 * (1.0 + states[:, 2]), 0.0, 1.0)
    return DelayTrace(delays, rho11, SIMULATED, phase, RHO11, coherence=states[:, 1])


def coherence_trace(params: SystemParams, phase: float = 0.0, delays=None,
                    cfg: IntegratorConfig | None = None) -> DelayTrace:
    """v = i(rho21 - rho12) at readout versus delay."""
    delays = _check_grid(default_delays() if delays is None else delays)
    states = _readout(params, phase, delays, cfg)
    return DelayTrace(delays, np.clip(states[:, 1], -1.0, 1.0), SIMULATED, phase, COHERENCE)


@dataclass(frozen=True)
class PhasePair:
    in_phase: DelayTrace
    out_of_phase: DelayTrace


def phase_pair(params: SystemParams, delays=None,
               cfg: IntegratorConfig | None = None) -> PhasePair:
    """Delay traces at relative phase 0 and pi on one grid."""
    return PhasePair(delay_trace(params, 0.0, delays, cfg),
                     delay_trace(params, math.pi, delays, cfg))


@dataclass(frozen=True, eq=False)
class RabiCurve:
    amplitudes: np.ndarray
    rho11: np.ndarray


def rabi_curve(tau_p: float, t2_star: float, delta: float, amplitudes,
               cfg: IntegratorConfig | None = None) -> RabiCurve:
    """rho11 versus peak Rabi frequency for coincident pulses (delay 0, phase 0).

    Both pulses of the pair stay on and overlap, so the effective pulse area
    is ``2 * sqrt(2*pi) * amplitude * tau_p``.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.ndim != 1 or amplitudes.size == 0:
        raise DomainError("amplitude grid must be a non-empty 1-D sequence")
    if np.any(amplitudes < 0) or np.any(np.diff(amplitudes) <= 0):
        raise DomainError("amplitudes must be non-negative and increasing")
    SystemParams(0.0, t2_star, delta, tau_p)  # validates the fixed parameters
    states = evolve_many(amplitudes, t2_star, delta, tau_p, 0.0, 0.0, cfg)
    return RabiCurve(amplitudes, np.clip(0.5 * (1.0 + states[:, 2]), 0.0, 1.0))


def synth_counts(trace: DelayTrace, noise: NoiseModel) -> DelayTrace:
    """Replace each rho11 value with Poisson(scale*rho11*dwell)/dwell counts/s."""
    if trace.kind != SIMULATED or trace.quantity != RHO11:
        raise DomainError("synth_counts needs a simulated rho11 trace")
    rng = np.random.default_rng(noise.seed)
    counts = rng.poisson(noise.scale * trace.values * noise.dwell) / noise.dwell
    return DelayTrace(trace.delays.copy(), counts.astype(float), MEASURED, trace.phase, COUNTS)
