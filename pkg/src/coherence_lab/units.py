"""Constants, unit conversions and the shared parameter/state types.

Internal units: time in fs, angular frequencies in rad/fs. Detunings are
quoted externally in cm^-1 and converted with :func:`wavenumber_to_angfreq`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT_CM_PER_FS = 2.99792458e-5
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
BLOCH_NORM_EPS = 1e-9


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


def wavenumber_to_angfreq(nu_tilde):
    """Convert a wavenumber (cm^-1) to an angular frequency (rad/fs).

    Works elementwise on arrays; the sign is preserved.
    """
    return 2.0 * math.pi * SPEED_OF_LIGHT_CM_PER_FS * nu_tilde


def angfreq_to_wavenumber(omega):
    return omega / (2.0 * math.pi * SPEED_OF_LIGHT_CM_PER_FS)


def fwhm_to_tau(fwhm: float, envelope: str = "field") -> float:
    """Gaussian width parameter tau_p of ``exp(-t**2 / (2 tau_p**2))``.

    Parameters
    ----------
    fwhm : float
        Full width at half maximum in fs.
    envelope : {"field", "intensity"}
        Which envelope the FWHM was measured on. The intensity of a field
        envelope with parameter tau_p is a Gaussian that is narrower by
        sqrt(2), so an intensity FWHM maps to ``fwhm_to_tau(sqrt(2) * fwhm)``.
    """
    if not fwhm > 0:
        raise DomainError(f"FWHM must be positive, got {fwhm!r}")
    if envelope == "field":
        return fwhm / FWHM_PER_SIGMA
    if envelope == "intensity":
        return math.sqrt(2.0) * fwhm / FWHM_PER_SIGMA
    raise DomainError(f"unknown envelope kind {envelope!r}")


def pulse_area(omega_r0: float, tau_p: float) -> float:
    """Area (rad) of one Gaussian pulse with peak Rabi frequency omega_r0."""
    return math.sqrt(2.0 * math.pi) * omega_r0 * tau_p


def linewidth_to_min_dephasing(fwhm_wavenumber: float) -> float:
    """Lower bound on T2* (fs) from a homogeneous Lorentzian line width (cm^-1)."""
    if not fwhm_wavenumber > 0:
        raise DomainError(f"line width must be positive, got {fwhm_wavenumber!r}")
    return 2.0 / wavenumber_to_angfreq(fwhm_wavenumber)


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of one molecule and its drive.

    ``t2_star`` may be ``math.inf`` to switch dephasing off.
    """

    omega_r0: float
    t2_star: float
    delta: float
    tau_p: float

    def __post_init__(self):
        if not self.omega_r0 >= 0 or math.isinf(self.omega_r0):
            raise DomainError(f"omega_r0 must be finite and >= 0, got {self.omega_r0!r}")
        if not self.tau_p > 0 or math.isinf(self.tau_p):
            raise DomainError(f"tau_p must be finite and > 0, got {self.tau_p!r}")
        if not self.t2_star > 0:
            raise DomainError(f"t2_star must be > 0 or inf, got {self.t2_star!r}")
        if not math.isfinite(self.delta):
            raise DomainError(f"delta must be finite, got {self.delta!r}")

    @classmethod
    def from_lab_units(cls, omega_r0, t2_star, delta_cm, tau_p):
        return cls(omega_r0, t2_star, wavenumber_to_angfreq(delta_cm), tau_p)

    @property
    def delta_cm(self) -> float:
        return angfreq_to_wavenumber(self.delta)

    @property
    def dephasing_rate(self) -> float:
        return 0.0 if math.isinf(self.t2_star) else 1.0 / self.t2_star


@dataclass(frozen=True)
class PulseProgram:
    """Two-pulse sequence: delay (fs) and relative carrier phase (rad)."""

    delay: float
    phase: float = 0.0
    readout_offset: float = 3.0

    def __post_init__(self):
        if not self.delay >= 0 or math.isinf(self.delay):
            raise DomainError(f"delay must be finite and >= 0, got {self.delay!r}")
        if not math.isfinite(self.phase):
            raise DomainError(f"phase must be finite, got {self.phase!r}")
        if not self.readout_offset >= 3:
            raise DomainError("readout_offset must be >= 3 pulse widths")


@dataclass(frozen=True)
class BlochState:
    """Bloch vector (u, v, w); w = rho11 - rho22, so the ground state is w = -1."""

    u: float
    v: float
    w: float

    def __post_init__(self):
        if self.u * self.u + self.v * self.v + self.w * self.w > 1.0 + BLOCH_NORM_EPS:
            raise DomainError(f"Bloch vector outside the unit ball: {self}")

    @classmethod
    def ground(cls) -> BlochState:
        return cls(0.0, 0.0, -1.0)

    @property
    def norm(self) -> float:
        return math.sqrt(self.u * self.u + self.v * self.v + self.w * self.w)

    @property
    def rho11(self) -> float:
        return 0.5 * (1.0 + self.w)

    @property
    def rho22(self) -> float:
        return 0.5 * (1.0 - self.w)

    @property
    def rho21(self) -> complex:
        return complex(0.5 * self.u, -0.5 * self.v)

    @property
    def rho12(self) -> complex:
        return complex(0.5 * self.u, 0.5 * self.v)

    def density_matrix(self) -> np.ndarray:
        """2x2 density matrix in the (|1>, |2>) basis, excited state first."""
        return np.array([[self.rho11, self.rho12], [self.rho21, self.rho22]], dtype=complex)

    @classmethod
    def from_density_matrix(cls, rho) -> BlochState:
        rho = np.asarray(rho)
        r11, r12 = rho[0, 0], rho[0, 1]
        r21, r22 = rho[1, 0], rho[1, 1]
        u = (r21 + r12).real
        v = (1j * (r21 - r12)).real
        w = (r11 - r22).real
        return cls(float(u), float(v), float(w))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w])
