"""Experimental parameters and the rates derived from them.

All quantities are SI with angular frequencies in rad/s. The config
document uses lab-friendly units (mm, ng, nm, mW, Hz); conversion happens
once, in :func:`system_from_mapping`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import constants as sc

from .errors import ParameterError

HBAR = sc.hbar
K_B = sc.k
C_LIGHT = sc.c


@dataclass(frozen=True)
class SystemParams:
    cavity_length: float          # m
    finesse: float
    mech_freq: float              # rad/s
    quality: float
    eff_mass: float               # kg
    bath_temp: float              # K
    laser_wavelength: float       # m
    detuning: float               # rad/s, Delta_0
    modulation_freq: float        # rad/s, Omega
    sideband_powers: Mapping[int, float] = field(default_factory=dict)  # W
    sideband_phases: Mapping[int, float] = field(default_factory=dict)  # rad

    def __post_init__(self):
        positive = {
            "cavity_length": self.cavity_length,
            "finesse": self.finesse,
            "mech_freq": self.mech_freq,
            "quality": self.quality,
            "eff_mass": self.eff_mass,
            "laser_wavelength": self.laser_wavelength,
            "modulation_freq": self.modulation_freq,
        }
        for name, value in positive.items():
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value!r}")
        if not (np.isfinite(self.bath_temp) and self.bath_temp >= 0):
            raise ParameterError(f"bath_temp must be >= 0, got {self.bath_temp!r}")
        if not np.isfinite(self.detuning):
            raise ParameterError("detuning must be finite")
        powers = {int(n): float(p) for n, p in self.sideband_powers.items()}
        for n, p in powers.items():
            if not (np.isfinite(p) and p >= 0):
                raise ParameterError(f"sideband power P_{n} must be >= 0, got {p!r}")
        phases = {int(n): float(v) for n, v in self.sideband_phases.items()}
        object.__setattr__(self, "sideband_powers", MappingProxyType(powers))
        object.__setattr__(self, "sideband_phases", MappingProxyType(phases))


@dataclass(frozen=True)
class DerivedConstants:
    kappa: float
    gamma_m: float
    omega_m: float
    omega_c: float
    omega_0: float
    g0: float
    nbar: float
    drive: Mapping[int, complex]
    tau: float
    detuning: float
    modulation_freq: float
    hbar: float = HBAR
    k_b: float = K_B
    c: float = C_LIGHT

    @property
    def Omega(self):
        return self.modulation_freq


def thermal_occupation(omega, temp):
    """Bose occupation ``1/(exp(hbar*omega/kT) - 1)``; exactly 0 at T = 0."""
    if temp == 0:
        return 0.0
    return float(1.0 / np.expm1(HBAR * omega / (K_B * temp)))


def derive_constants(p: SystemParams) -> DerivedConstants:
    kappa = np.pi * C_LIGHT / (2.0 * p.finesse * p.cavity_length)
    gamma_m = p.mech_freq / p.quality
    omega_0 = 2.0 * np.pi * C_LIGHT / p.laser_wavelength
    omega_c = omega_0 + p.detuning
    g0 = np.sqrt(HBAR / (p.eff_mass * p.mech_freq)) * omega_c / p.cavity_length
    nbar = thermal_occupation(p.mech_freq, p.bath_temp)
    drive = {}
    for n in sorted(p.sideband_powers):
        amp = np.sqrt(2.0 * kappa * p.sideband_powers[n] / (HBAR * omega_0))
        drive[n] = complex(amp * np.exp(1j * p.sideband_phases.get(n, 0.0)))
    return DerivedConstants(
        kappa=float(kappa),
        gamma_m=float(gamma_m),
        omega_m=float(p.mech_freq),
        omega_c=float(omega_c),
        omega_0=float(omega_0),
        g0=float(g0),
        nbar=nbar,
        drive=MappingProxyType(drive),
        tau=float(2.0 * np.pi / p.modulation_freq),
        detuning=float(p.detuning),
        modulation_freq=float(p.modulation_freq),
    )


def system_from_mapping(system: Mapping, drive) -> SystemParams:
    """Build :class:`SystemParams` from the ``system``/``drive`` config sections.

    Parameters
    ----------
    system : mapping
        Keys ``L_mm, finesse, omega_m_hz, Q, mass_ng, T_K, lambda_nm,
        delta0_over_omega_m, Omega_over_omega_m``. ``omega_m_hz`` is the
        ordinary frequency, so the mechanical angular frequency is
        ``2*pi*omega_m_hz``.
    drive : list of mappings
        Entries ``{n, P_mW, phase_rad}``; ``phase_rad`` is optional.
    """
    required = ("L_mm", "finesse", "omega_m_hz", "Q", "mass_ng", "T_K",
                "lambda_nm", "delta0_over_omega_m", "Omega_over_omega_m")
    missing = [k for k in required if k not in system]
    if missing:
        raise ParameterError(f"system section missing keys: {', '.join(missing)}")
    omega_m = 2.0 * np.pi * float(system["omega_m_hz"])
    powers, phases = {}, {}
    for entry in drive or ():
        n = int(entry["n"])
        if n in powers:
            raise ParameterError(f"duplicate drive sideband n={n}")
        powers[n] = float(entry["P_mW"]) * 1e-3
        phases[n] = float(entry.get("phase_rad", 0.0))
    return SystemParams(
        cavity_length=float(system["L_mm"]) * 1e-3,
        finesse=float(system["finesse"]),
        mech_freq=omega_m,
        quality=float(system["Q"]),
        eff_mass=float(system["mass_ng"]) * 1e-12,
        bath_temp=float(system["T_K"]),
        laser_wavelength=float(system["lambda_nm"]) * 1e-9,
        detuning=float(system["delta0_over_omega_m"]) * omega_m,
        modulation_freq=float(system["Omega_over_omega_m"]) * omega_m,
        sideband_powers=powers,
        sideband_phases=phases,
    )


def constants_to_dict(c: DerivedConstants) -> dict:
    """Plain-data view for manifests and the ``derive`` subcommand."""
    return {
        "kappa": c.kappa,
        "gamma_m": c.gamma_m,
        "omega_m": c.omega_m,
        "omega_c": c.omega_c,
        "omega_0": c.omega_0,
        "G0_single_photon": c.g0,
        "nbar": c.nbar,
        "tau": c.tau,
        "Delta0": c.detuning,
        "Omega": c.modulation_freq,
        "E_n": {str(n): [v.real, v.imag] for n, v in c.drive.items()},
        "hbar": c.hbar,
        "k_B": c.k_b,
        "c": c.c,
    }
