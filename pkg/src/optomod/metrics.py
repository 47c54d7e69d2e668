"""Entanglement and squeezing figures of merit for two-mode Gaussian states.

Convention: vacuum variance 1/2, ordering ``(q, p, x, y)`` with the mirror
first. Logarithmic negativity uses the natural logarithm; divide by
``ln 2`` for bits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SIGMA, physicality_min_eig
from .errors import UnphysicalStateError

PT = np.diag([1.0, -1.0, 1.0, 1.0])    # partial transposition flips the mirror momentum


@dataclass(frozen=True)
class MetricsSample:
    t: float
    E_N: float
    mirror_min_var: float
    mirror_angle: float
    physical: bool


def _check(V, tol):
    V = np.asarray(V, dtype=float)
    if V.shape != (4, 4):
        raise ValueError("expected a 4x4 covariance matrix")
    if not np.allclose(V, V.T, atol=1e-12 * max(1.0, np.abs(V).max())):
        raise ValueError("covariance matrix must be symmetric")
    return V


def smallest_pt_symplectic_eigenvalue(V):
    """Smaller symplectic eigenvalue of the partial transpose via invariants.

    ``nu_pm^2`` are the roots of ``mu^2 - Delta mu + det V`` with
    ``Delta = det A + det B - 2 det C``. The discriminant is evaluated as
    ``((a - b)/2)^2 + p`` from ``H = -(sigma V^T)^2 = [[a I, X], [Y, b I]]``,
    ``a = det A - det C``, ``b = det B - det C``, ``X Y = p I``. This is the
    same quantity as ``Delta^2/4 - det V`` but without the cancellation that
    costs ``sqrt(eps)`` accuracy when ``nu_+ ~ nu_-``.
    """
    V = np.asarray(V, dtype=float)
    K = SIGMA @ PT @ V @ PT
    H = -K @ K
    a = 0.5 * (H[0, 0] + H[1, 1])
    b = 0.5 * (H[2, 2] + H[3, 3])
    p = 0.5 * np.trace(H[:2, 2:] @ H[2:, :2])
    root = np.sqrt(max(0.25 * (a - b) ** 2 + p, 0.0))
    # smaller root as det V / larger root: no subtraction
    nu2 = np.linalg.det(V) / (0.5 * (a + b) + root)
    return float(np.sqrt(max(nu2, 0.0)))


def pt_symplectic_spectrum(V):
    """Symplectic eigenvalues of the partial transpose from ``|eig(i sigma V^T)|``."""
    Vt = PT @ V @ PT
    ev = np.abs(np.linalg.eigvals(1j * SIGMA @ Vt))
    return np.sort(ev)[::2]


def logarithmic_negativity(V, tol=1e-8) -> float:
    V = _check(V, tol)
    if physicality_min_eig(V) < -tol * np.linalg.norm(V, 2):
        raise UnphysicalStateError("V + (i/2) sigma has a negative eigenvalue",
                                   context="logarithmic negativity")
    nu = smallest_pt_symplectic_eigenvalue(V)
    if nu <= 0:
        raise UnphysicalStateError("vanishing symplectic eigenvalue", context="logarithmic negativity")
    return max(0.0, -np.log(2.0 * nu))


def mirror_squeezing(V):
    """Smallest variance of the mirror block and the angle of its direction.

    The angle is measured from the ``q`` axis and lies in ``(-pi/2, pi/2]``;
    a degenerate (isotropic) block reports 0.
    """
    V = _check(V, 0)
    block = V[:2, :2]
    w, U = np.linalg.eigh(block)
    if abs(w[1] - w[0]) <= 1e-12 * max(1.0, abs(w[1])):
        return float(w[0]), 0.0
    vx, vy = U[:, 0]
    ang = np.arctan2(vy, vx)
    if ang <= -np.pi / 2:
        ang += np.pi
    elif ang > np.pi / 2:
        ang -= np.pi
    return float(w[0]), float(ang)


def metrics_sample(V, t=0.0, tol=1e-8) -> MetricsSample:
    V = np.real_if_close(np.asarray(V), tol=1e6).astype(float)
    V = 0.5 * (V + V.T)
    physical = physicality_min_eig(V) >= -tol * np.linalg.norm(V, 2)
    if not physical:
        raise UnphysicalStateError(f"unphysical covariance at t={t:.6g}", t=t,
                                   context="metrics over period")
    en = logarithmic_negativity(V, tol)
    mv, ang = mirror_squeezing(V)
    return MetricsSample(float(t), en, mv, ang, True)


def metrics_over_period(source, samples=64, t=None):
    """Metrics on a uniform grid over one period.

    ``source`` is either a :class:`~optomod.spectral.SpectralComponents`
    (or any object with ``V_at`` and ``Omega``) or a
    :class:`~optomod.covariance.CovarianceSeries`, whose final period is
    used directly. Returns ``(samples, summary)``.
    """
    if hasattr(source, "V_at"):
        tau = 2 * np.pi / source.Omega
        ts = np.arange(samples) * (tau / samples) if t is None else np.asarray(t, dtype=float)
        Vs = source.V_at(ts)
        imag = np.abs(Vs.imag).max()
        if imag > 1e-8 * max(np.abs(Vs.real).max(), 1e-300):
            raise UnphysicalStateError("reconstructed V(t) is not real", context="metrics over period")
        Vs = Vs.real
    else:
        ts, Vs = source.final_period()
    out = [metrics_sample(V, tt) for tt, V in zip(ts, Vs)]
    return out, summarize(out)


def summarize(samples):
    en = np.array([s.E_N for s in samples])
    mv = np.array([s.mirror_min_var for s in samples])
    return {
        "E_N_min": float(en.min()), "E_N_max": float(en.max()), "E_N_mean": float(en.mean()),
        "min_var_min": float(mv.min()), "min_var_max": float(mv.max()), "min_var_mean": float(mv.mean()),
    }
