"""Classical first-moment orbits of the modulated optomechanical system.

Two independent routes are provided:

* :func:`orbit_coefficients` builds the double expansion
  ``<O>(t) = sum_j sum_n O[n, j] exp(i n Omega t) g0**j`` recursively.
* :func:`integrate_mean_field` integrates the noise-free averaged Langevin
  equations directly with a fixed-step RK4 scheme.

The state vector of the mean-field route is ``(q, p, Re a, Im a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (DivergenceError, NotConvergedError, RealityViolationError,
                     ResonantDenominatorError)
from .integrators import rk4_run, steps_per_period
from .params import DerivedConstants


@dataclass(frozen=True)
class ClassicalOrbit:
    """Coefficient tables ``O[j, n + n_max]`` for q, p and a.

    Rows are coupling orders ``j = 0..j_max``; columns are sidebands
    ``n = -n_max..n_max``.
    """

    coeffs_q: np.ndarray
    coeffs_p: np.ndarray
    coeffs_a: np.ndarray
    g0: float
    Omega: float

    @property
    def j_max(self):
        return self.coeffs_q.shape[0] - 1

    @property
    def n_max(self):
        return (self.coeffs_q.shape[1] - 1) // 2

    @property
    def tau(self):
        return 2.0 * np.pi / self.Omega

    @property
    def harmonics(self):
        return np.arange(-self.n_max, self.n_max + 1)

    def summed(self, j_upto=None):
        """Fourier coefficients ``sum_j O[j, n] g0**j`` for (q, p, a)."""
        j_upto = self.j_max if j_upto is None else min(j_upto, self.j_max)
        w = self.g0 ** np.arange(j_upto + 1)
        return tuple(w @ tab[: j_upto + 1] for tab in (self.coeffs_q, self.coeffs_p, self.coeffs_a))

    def truncated(self, j_max=None, n_max=None):
        j_max = self.j_max if j_max is None else j_max
        n_max = self.n_max if n_max is None else n_max
        if j_max > self.j_max or n_max > self.n_max:
            raise ValueError("cannot widen a stored coefficient table")
        lo, hi = self.n_max - n_max, self.n_max + n_max + 1
        return ClassicalOrbit(
            self.coeffs_q[: j_max + 1, lo:hi].copy(),
            self.coeffs_p[: j_max + 1, lo:hi].copy(),
            self.coeffs_a[: j_max + 1, lo:hi].copy(),
            self.g0,
            self.Omega,
        )


@dataclass(frozen=True)
class MeanFieldTrajectory:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    re_a: np.ndarray
    im_a: np.ndarray
    steps_per_period: int
    samples_per_period: int
    converged: bool
    cycle_change: np.ndarray

    def as_array(self):
        return np.column_stack([self.q, self.p, self.re_a, self.im_a])

    def last_cycle(self):
        """Samples of the final full period (endpoint excluded)."""
        m = self.samples_per_period
        return self.t[-m - 1:-1], self.as_array()[-m - 1:-1]


def _corr(x, y, K):
    # sum_m conj(x[m]) y[n+m] for lags n in [-K, K]; both inputs on window [-K, K]
    full = np.correlate(y, x, mode="full")
    mid = len(x) - 1
    return full[mid - K: mid + K + 1]


def _conv(x, y, K):
    full = np.convolve(x, y)
    mid = len(x) - 1
    return full[mid - K: mid + K + 1]


def orbit_coefficients(
    c: DerivedConstants,
    delta0=None,
    Omega=None,
    j_max: int = 3,
    n_max: int = 1,
    resonance_floor: float = 1e-3,
) -> ClassicalOrbit:
    """Recursive coefficients of the double expansion.

    The convolutions are carried out on a sideband window of half-width
    ``(2*j_max + 1)*s + n_max`` (``s`` the largest drive index), which
    contains the full support of every retained order, so the sums over
    ``m`` are exact before the table is cropped to ``|n| <= n_max``.

    Raises
    ------
    ResonantDenominatorError
        If ``|omega_m**2 - (n Omega)**2 + i gamma_m n Omega|`` falls below
        ``resonance_floor * omega_m**2`` for a sideband the recursion uses.
    """
    if j_max < 0 or n_max < 1:
        raise ValueError("need j_max >= 0 and n_max >= 1")
    delta0 = c.detuning if delta0 is None else float(delta0)
    Omega = c.modulation_freq if Omega is None else float(Omega)
    wm, gm, kappa = c.omega_m, c.gamma_m, c.kappa
    s = max((abs(n) for n, e in c.drive.items() if e != 0), default=0)
    K = (2 * j_max + 1) * s + n_max
    n = np.arange(-K, K + 1)

    den_a = kappa + 1j * (delta0 + n * Omega)
    den_q = wm**2 - (n * Omega) ** 2 + 1j * gm * n * Omega
    if j_max >= 1:
        bad = np.abs(den_q) < resonance_floor * wm**2
        if np.any(bad):
            raise ResonantDenominatorError(
                f"resonant denominator at sideband n={int(n[bad][0])}",
                context="mechanical response omega_m^2-(n Omega)^2",
            )

    drive_rev = np.zeros(2 * K + 1, dtype=complex)
    for m, e in c.drive.items():
        if abs(m) <= K:
            drive_rev[K - m] = e          # coefficient of exp(i n Omega t) is E_{-n}
    a_tabs = [drive_rev / den_a]
    q_tabs = [np.zeros(2 * K + 1, dtype=complex)]
    for j in range(1, j_max + 1):
        acc_q = np.zeros(2 * K + 1, dtype=complex)
        acc_a = np.zeros(2 * K + 1, dtype=complex)
        for k in range(j):
            acc_q += _corr(a_tabs[k], a_tabs[j - k - 1], K)
        q_j = wm * acc_q / den_q
        q_tabs.append(q_j)
        for k in range(j):
            acc_a += _conv(a_tabs[k], q_tabs[j - k - 1], K)
        a_tabs.append(1j * acc_a / den_a)

    sl = slice(K - n_max, K + n_max + 1)
    q = np.array([t[sl] for t in q_tabs])
    a = np.array([t[sl] for t in a_tabs])
    p = q * (1j * np.arange(-n_max, n_max + 1) * Omega / wm)
    return ClassicalOrbit(q, p, a, float(c.g0), Omega)


def evaluate_orbit(o: ClassicalOrbit, t, j_upto=None, reality_tol=1e-9):
    """Evaluate ``(<q>, <p>, <a>)`` at time(s) ``t``.

    ``<q>`` and ``<p>`` are returned real; a :class:`RealityViolationError`
    is raised when their discarded imaginary part is larger than
    ``reality_tol`` relative to the orbit scale.
    """
    t = np.asarray(t, dtype=float)
    qn, pn, an = o.summed(j_upto)
    phase = np.exp(1j * np.multiply.outer(t, o.harmonics * o.Omega))
    q = phase @ qn
    p = phase @ pn
    a = phase @ an
    for name, val, coeffs in (("q", q, qn), ("p", p, pn)):
        scale = np.sum(np.abs(coeffs))
        if scale > 0 and np.max(np.abs(np.imag(val))) > reality_tol * scale:
            raise RealityViolationError(
                f"<{name}>(t) has an imaginary part beyond tolerance",
                context="reality of the double expansion",
            )
    return np.real(q), np.real(p), a


def mean_field_step_bound(c: DerivedConstants, delta0=None, Omega=None, per=50):
    delta0 = c.detuning if delta0 is None else delta0
    Omega = c.modulation_freq if Omega is None else Omega
    return 2.0 * np.pi / (per * max(c.omega_m, abs(delta0), c.kappa, Omega))


def steady_state_constant_drive(c: DerivedConstants, delta0, E0):
    """Fixed points for a constant drive ``E0`` (all roots of the cubic in q).

    ``omega_m q = g0 |E0|^2 / (kappa^2 + (delta0 - g0 q)^2)``; returns a list
    of real ``(q, p, a)`` tuples. Serves as an independent oracle for the
    integrator.
    """
    g, wm, k = c.g0, c.omega_m, c.kappa
    E2 = abs(E0) ** 2
    if g == 0:
        return [(0.0, 0.0, E0 / (k + 1j * delta0))]
    # wm*q*(k^2 + (d - g q)^2) - g E2 = 0 in powers of q
    coeffs = [wm * g**2, -2 * wm * g * delta0, wm * (k**2 + delta0**2), -g * E2]
    out = []
    for r in np.roots(coeffs):
        if abs(r.imag) < 1e-9 * max(1.0, abs(r.real)):
            q = r.real
            a = E0 / (k + 1j * (delta0 - g * q))
            out.append((q, 0.0, a))
    return out


def integrate_mean_field(
    c: DerivedConstants,
    delta0=None,
    drive: Mapping[int, complex] | None = None,
    t_end: float | None = None,
    *,
    n_periods: int | None = None,
    steps_per_tau: int | None = None,
    samples_per_period: int | None = None,
    y0=None,
    divergence_cap: float | None = None,
    convergence_threshold: float = 1e-6,
) -> MeanFieldTrajectory:
    """Integrate the averaged nonlinear Langevin equations from rest.

    The step is ``tau/M`` with ``M`` the smallest integer satisfying the
    bound ``h <= 2 pi / (50 max(omega_m, |delta0|, kappa, Omega))``, so each
    modulation period holds a whole number of steps. Either ``t_end``
    (rounded up to whole periods) or ``n_periods`` sets the duration.

    Raises
    ------
    DivergenceError
        If ``|q|``, ``|p|`` or ``|a|`` exceeds the cap (default
        ``1e6 * max(|a_00|, 1)``).
    """
    delta0 = c.detuning if delta0 is None else float(delta0)
    drive = dict(c.drive if drive is None else drive)
    Omega, tau = c.modulation_freq, c.tau
    wm, gm, kappa, g = c.omega_m, c.gamma_m, c.kappa, c.g0
    if n_periods is None:
        if t_end is None or t_end <= 0:
            raise ValueError("t_end must be positive")
        n_periods = int(math.ceil(t_end / tau - 1e-9))
    M = steps_per_tau or steps_per_period(tau, mean_field_step_bound(c, delta0, Omega))
    h = tau / M
    S = samples_per_period or M
    if M % S:
        raise ValueError("samples_per_period must divide the steps per period")
    stride = M // S

    if divergence_cap is None:
        a00 = abs(drive.get(0, 0.0)) / abs(kappa + 1j * delta0)
        divergence_cap = 1e6 * max(a00, 1.0)

    # drive table on the half-step lattice over one period
    ks = np.arange(2 * M)
    table = np.zeros(2 * M, dtype=complex)
    for n, e in drive.items():
        table += e * np.exp(-1j * n * Omega * ks * (h / 2))
    table = table.tolist()
    twoM = 2 * M
    kd = complex(-kappa, -delta0)

    def rhs(k2, y):
        q, p, ar, ai = y[0], y[1], y[2], y[3]
        a = complex(ar, ai)
        da = kd * a + 1j * g * a * q + table[k2 % twoM]
        return np.array([wm * p, -wm * q - gm * p + g * (ar * ar + ai * ai), da.real, da.imag])

    y = np.zeros(4) if y0 is None else np.asarray(y0, dtype=float).copy()
    n_steps = n_periods * M
    samples = np.empty((n_periods * S + 1, 4))
    samples[0] = y

    def record(i, yy):
        if i and i % stride == 0:
            samples[i // stride] = yy
            if not np.all(np.isfinite(yy)) or max(abs(yy[0]), abs(yy[1]), math.hypot(yy[2], yy[3])) > divergence_cap:
                raise DivergenceError(
                    f"mean-field trajectory exceeded {divergence_cap:.3g} at t={i * h:.6g}",
                    context="averaged Langevin equations",
                )
        return False

    rk4_run(rhs, y, n_steps, h, callback=record)
    t = np.arange(n_periods * S + 1) * (tau / S)

    changes = []
    for k in range(1, n_periods):
        prev = samples[(k - 1) * S: k * S]
        cur = samples[k * S: (k + 1) * S]
        scale = np.sqrt(np.mean(np.sum(cur**2, axis=1)))
        diff = np.sqrt(np.mean(np.sum((cur - prev) ** 2, axis=1)))
        changes.append(diff / scale if scale > 0 else diff)
    changes = np.array(changes)
    converged = bool(len(changes) and changes[-1] < convergence_threshold)
    return MeanFieldTrajectory(
        t, samples[:, 0], samples[:, 1], samples[:, 2], samples[:, 3],
        M, S, converged, changes,
    )


def orbit_distance(traj: MeanFieldTrajectory, orbit: ClassicalOrbit):
    """RMS distance between the final simulated cycle and the analytic orbit.

    Returns ``(rms_distance, rms_amplitude)`` over one period, both measured
    on the state vector ``(q, p, Re a, Im a)``.
    """
    t, sim = traj.last_cycle()
    q, p, a = evaluate_orbit(orbit, t)
    ana = np.column_stack([q, p, a.real, a.imag])
    dist = np.sqrt(np.mean(np.sum((sim - ana) ** 2, axis=1)))
    amp = np.sqrt(np.mean(np.sum(ana**2, axis=1)))
    return float(dist), float(amp)


def effective_detuning(c: DerivedConstants, target=None, *, j_max=3, n_max=1,
                       tol=1e-12, max_iter=100, resonance_floor=1e-3):
    """Bare detuning whose orbit-averaged effective detuning equals ``target``.

    The radiation-pressure shift moves the mean of
    ``Delta(t) = delta0 - g0 <q(t)>`` away from ``delta0``; this solves
    ``delta0 - g0 <q>_0 = target`` (default ``omega_m``) by fixed-point
    iteration on the truncated orbit. Returns ``(delta0, orbit)``.
    """
    target = c.omega_m if target is None else float(target)
    delta0 = target
    for _ in range(max_iter):
        orbit = orbit_coefficients(c, delta0, j_max=j_max, n_max=n_max,
                                   resonance_floor=resonance_floor)
        q0 = orbit.summed()[0][orbit.n_max].real
        new = target + orbit.g0 * q0
        if abs(new - delta0) <= tol * abs(target):
            return float(new), orbit_coefficients(c, new, j_max=j_max, n_max=n_max,
                                                  resonance_floor=resonance_floor)
        delta0 = new
    raise NotConvergedError("effective detuning iteration did not converge",
                            context="detuning reference")
