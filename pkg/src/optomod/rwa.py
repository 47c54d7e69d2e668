"""Closed-form steady states in the rotating-wave approximation.

Valid for ``Delta(t) = omega_m + ...``, ``Omega = 2 omega_m`` and
``omega_m >> |G(t)|, kappa``. Only the cooling harmonic ``G0`` (n = 0) and
the heating harmonic ``Gm1`` (n = -1) of ``G(t)`` survive; both are taken
real after fixing the laser phase and the time origin.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RwaUnstableError


@dataclass(frozen=True)
class RwaParams:
    G0: float
    Gm1: float
    gamma_m: float
    kappa: float
    nbar: float
    s: float = 1.0

    def __post_init__(self):
        if not (self.gamma_m > 0 and self.kappa > 0):
            raise ValueError("gamma_m and kappa must be positive")
        if self.nbar < 0:
            raise ValueError("nbar must be >= 0")
        if self.s <= 0:
            raise ValueError("s must be positive")


def rwa_drift_diffusion(p: RwaParams):
    """RWA drift ``A_s`` and diffusion ``D_s`` in the slowly rotating frame."""
    g, k = p.gamma_m, p.kappa
    dm, sm = p.Gm1 - p.G0, p.Gm1 + p.G0
    A = 0.5 * np.array([
        [-g, 0.0, 0.0, dm],
        [0.0, -g, sm, 0.0],
        [0.0, dm, -2 * k, 0.0],
        [sm, 0.0, 0.0, -2 * k],
    ])
    D = np.diag([g * (p.nbar + 0.5), g * (p.nbar + 0.5), k, k])
    return A, D


def rwa_stability(p: RwaParams) -> bool:
    """``Gm1**2 - G0**2 <= 2 gamma_m kappa``; equality counts as stable."""
    lhs = p.Gm1**2 - p.G0**2
    rhs = 2 * p.gamma_m * p.kappa
    if lhs == rhs:
        warnings.warn("RWA stability boundary: steady state diverges", RuntimeWarning, stacklevel=2)
    return bool(lhs <= rhs)


def _require_strict(p: RwaParams, margin=1e-12):
    gap = p.G0**2 - p.Gm1**2 + 2 * p.gamma_m * p.kappa
    if gap <= margin * p.gamma_m * p.kappa:
        raise RwaUnstableError("RWA steady state requires Gm1^2 - G0^2 < 2 gamma_m kappa",
                               context="mirror variances f_+-")
    return gap


def rwa_variances(p: RwaParams):
    """Steady mirror variances ``(f_minus, f_plus)`` of the RWA dynamics."""
    gap = _require_strict(p)
    g, k, nb, G0, Gm = p.gamma_m, p.kappa, p.nbar, p.G0, p.Gm1
    den = (g + 2 * k) * gap
    f_minus = 0.5 + nb - 2 * k * (G0 - Gm) * (G0 * nb + Gm * (nb + 1)) / den
    f_plus = 0.5 + nb - 2 * k * (G0 + Gm) * (G0 * nb - Gm * (nb + 1)) / den
    return float(f_minus), float(f_plus)


def rotating_quadrature_variance(G0, Gm1, gamma_m, kappa, nbar):
    """Variance of the rotating squeezed mirror quadrature.

    Identical to ``f_minus``; the heating harmonic enters by magnitude
    because its sign is fixed only up to a half-period shift of the time
    origin, which exchanges ``f_minus`` and ``f_plus``.
    """
    fm, fp = rwa_variances(RwaParams(abs(G0), abs(Gm1), gamma_m, kappa, nbar))
    return fm


def squeezed_env_drift_diffusion(G, s, gamma_m, kappa, nbar):
    A, _ = rwa_drift_diffusion(RwaParams(G, 0.0, gamma_m, kappa, nbar))
    D = np.diag([gamma_m * (nbar + 0.5), gamma_m * (nbar + 0.5), s * kappa, kappa / s])
    return A, D


def squeezed_env_variances(G, s, gamma_m, kappa, nbar):
    """Mirror variances ``(f'_minus, f'_plus)`` with a squeezed cavity bath."""
    if s <= 0:
        raise ValueError("s must be positive")
    den = (gamma_m + 2 * kappa) * (G**2 + 2 * gamma_m * kappa)
    fm = 0.5 + nbar - kappa * G**2 * (2 * nbar + 1 - 1 / s) / den
    fp = 0.5 + nbar - kappa * G**2 * (2 * nbar + 1 - s) / den
    return float(fm), float(fp)


def equivalence_map(G, s):
    """Modulation harmonics ``(G0, Gm1)`` mimicking a bath squeezed by ``s``.

    The map gives ``rwa_variances = (f'_plus, f'_minus)``: the squeezed
    quadrature moves from ``q_s`` to ``p_s``.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    r = np.sqrt(s)
    return G * (1 / r + r) / 2, G * (1 / r - r) / 2


def rwa_sweep_rows(points):
    """Rows ``(G0, Gm1, gamma_m, kappa, nbar, f_minus, f_plus, stable)``."""
    rows = []
    for p in points:
        stable = rwa_stability(p)
        try:
            fm, fp = rwa_variances(p)
        except RwaUnstableError:
            fm = fp = float("nan")
        rows.append((p.G0, p.Gm1, p.gamma_m, p.kappa, p.nbar, fm, fp, stable))
    return rows
