"""Linearized fluctuation dynamics in the time domain.

Quadrature ordering is ``(dq, dp, dx, dy)`` with vacuum variance 1/2. The
drift ``A(t)`` is stored by its Fourier blocks so the same object feeds the
time-domain propagator, the Floquet analysis and the frequency-domain
solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InstabilityError, NonRealDriftError, NotConvergedError, PositivityLossError
from .floquet import FloquetReport, PeriodicMatrixFunction, floquet_analysis, pointwise_stable
from .integrators import steps_per_period
from .orbits import ClassicalOrbit, evaluate_orbit
from .params import DerivedConstants

SIGMA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)


@dataclass(frozen=True)
class DriftSpec:
    """Fourier blocks ``A_n`` of the 4x4 drift with ``A_{-n} = conj(A_n)``."""

    blocks: Mapping[int, np.ndarray]
    Omega: float
    G: Mapping[int, complex]
    Delta: Mapping[int, complex]
    omega_m: float
    gamma_m: float
    kappa: float
    _periodic: PeriodicMatrixFunction = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_periodic", PeriodicMatrixFunction(self.Omega, self.blocks, real=True))

    @property
    def tau(self):
        return 2.0 * np.pi / self.Omega

    @property
    def periodic(self) -> PeriodicMatrixFunction:
        return self._periodic

    def A(self, t):
        return self._periodic(t)

    def block(self, n):
        return self.blocks.get(n, np.zeros((4, 4), dtype=complex))

    @property
    def max_harmonic(self):
        return max(abs(n) for n in self.blocks)

    @property
    def mean_detuning(self):
        return float(np.real(self.Delta.get(0, 0.0)))


@dataclass(frozen=True)
class DiffusionMatrix:
    D: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.shape != (4, 4) or np.any(np.linalg.eigvalsh(D) < -1e-15 * max(1.0, np.abs(D).max())):
            raise ValueError("diffusion matrix must be 4x4 positive semidefinite")
        object.__setattr__(self, "D", D)


@dataclass(frozen=True)
class CovarianceState:
    V: np.ndarray
    t: float = 0.0


@dataclass
class CovarianceSeries:
    t: np.ndarray
    V: np.ndarray                 # (samples, 4, 4)
    physicality_min_eig: np.ndarray
    samples_per_period: int
    steps_per_period: int
    period_defect: np.ndarray     # relative ||V(t+tau)-V(t)|| per period
    converged: bool
    max_asymmetry: float
    Omega: float

    def final_period(self):
        S = self.samples_per_period
        return self.t[-S - 1:-1], self.V[-S - 1:-1]


def physicality_min_eig(V):
    """Smallest eigenvalue of ``V + (i/2) sigma`` (>= 0 for physical states)."""
    return float(np.linalg.eigvalsh(V + 0.5j * SIGMA)[0])


def drift_from_harmonics(G: Mapping[int, complex], Delta: Mapping[int, complex],
                         omega_m, gamma_m, kappa, Omega, reality_tol=1e-9) -> DriftSpec:
    """Assemble ``A_n`` from the harmonics of ``G(t)`` and ``Delta(t)``.

    ``G(t) = Gx + i Gy`` is complex; ``Delta(t)`` must be real, so
    ``Delta_{-n} = conj(Delta_n)`` is checked.
    """
    G = {int(n): complex(v) for n, v in G.items()}
    Delta = {int(n): complex(v) for n, v in Delta.items()}
    scale = max([abs(v) for v in Delta.values()] + [1.0])
    for n, v in Delta.items():
        partner = Delta.get(-n, 0.0)
        if abs(partner - v.conjugate()) > reality_tol * scale:
            raise NonRealDriftError(f"Delta_{-n} != conj(Delta_{n})", context="drift matrix A(t)")
    orders = set(G) | {-n for n in G} | set(Delta) | {-n for n in Delta} | {0}
    blocks = {}
    for n in sorted(orders):
        gp, gm = G.get(n, 0j), G.get(-n, 0j).conjugate()
        gx = (gp + gm) / 2
        gy = (gp - gm) / 2j
        dn = (Delta.get(n, 0j) + Delta.get(-n, 0j).conjugate()) / 2
        A = np.zeros((4, 4), dtype=complex)
        A[1, 2], A[1, 3] = gx, gy
        A[2, 0], A[2, 3] = -gy, dn
        A[3, 0], A[3, 2] = gx, -dn
        if n == 0:
            A[0, 1] = omega_m
            A[1, 0] = -omega_m
            A[1, 1] = -gamma_m
            A[2, 2] = A[3, 3] = -kappa
            A = A.real.astype(complex)
        blocks[n] = A
    for n in list(blocks):
        if n != 0 and not np.any(blocks[n]):
            del blocks[n]
    return DriftSpec(blocks, float(Omega), G, Delta, float(omega_m), float(gamma_m), float(kappa))


def build_drift(orbit: ClassicalOrbit, c: DerivedConstants, delta0=None, n_max=None,
                samples=64) -> DriftSpec:
    """Drift from a classical orbit by Fourier projection over one period.

    ``G(t) = sqrt(2) g0 <a(t)>`` and ``Delta(t) = delta0 - g0 <q(t)>`` are
    sampled on ``samples`` equispaced points and projected onto harmonics
    ``|n| <= n_max`` (default: the orbit's sideband range).
    """
    delta0 = c.detuning if delta0 is None else float(delta0)
    n_max = orbit.n_max if n_max is None else n_max
    if samples <= 2 * n_max:
        raise ValueError("need more samples than harmonics")
    t = np.arange(samples) * (orbit.tau / samples)
    q, _, a = evaluate_orbit(orbit, t)
    Gt = np.sqrt(2.0) * orbit.g0 * a
    Dt = delta0 - orbit.g0 * q
    phase = np.exp(-1j * np.outer(np.arange(-n_max, n_max + 1), orbit.Omega * t)) / samples
    Gn = phase @ Gt
    Dn = phase @ Dt
    G = {n: complex(Gn[n + n_max]) for n in range(-n_max, n_max + 1)}
    Delta = {n: complex(Dn[n + n_max]) for n in range(-n_max, n_max + 1)}
    Delta[0] = complex(Delta[0].real, 0.0)
    return drift_from_harmonics(G, Delta, c.omega_m, c.gamma_m, c.kappa, orbit.Omega)


def build_diffusion(c=None, *, gamma_m=None, kappa=None, nbar=None) -> DiffusionMatrix:
    """``D = diag(0, gamma_m (2 nbar + 1), kappa, kappa)``."""
    if c is not None:
        gamma_m, kappa, nbar = c.gamma_m, c.kappa, c.nbar
    return DiffusionMatrix(np.diag([0.0, gamma_m * (2.0 * nbar + 1.0), kappa, kappa]))


def default_initial_covariance(nbar):
    """Thermal mirror (``nbar + 1/2``) and vacuum light (``1/2``)."""
    return np.diag([nbar + 0.5, nbar + 0.5, 0.5, 0.5])


def covariance_step_bound(drift: DriftSpec, per=100):
    dmax = max(abs(v) for v in drift.Delta.values()) if drift.Delta else 0.0
    dsum = sum(abs(v) for v in drift.Delta.values())
    return 2.0 * np.pi / (per * max(drift.omega_m, dmax, dsum, drift.kappa, drift.Omega))


def check_stability(drift: DriftSpec) -> tuple[FloquetReport, bool]:
    """Floquet verdict (authoritative) and the pointwise-eigenvalue verdict."""
    return floquet_analysis(drift.periodic), pointwise_stable(drift.periodic)


def propagate_covariance(
    drift: DriftSpec,
    D: DiffusionMatrix,
    V0: CovarianceState | np.ndarray | None = None,
    t_end: float | None = None,
    *,
    n_periods: int | None = None,
    steps_per_tau: int | None = None,
    samples_per_period: int | None = None,
    nbar: float = 0.0,
    override_stability: bool = False,
    floquet: FloquetReport | None = None,
    positivity_tol: float = 1e-8,
    convergence_threshold: float = 1e-6,
    stop_when_converged: bool = False,
    max_halvings: int = 4,
) -> CovarianceSeries:
    """Integrate ``V' = A V + V A^T + D`` with fixed-step RK4.

    The step is ``tau/M`` with ``M`` the smallest integer meeting
    ``h <= 2 pi / (100 max(omega_m, |Delta|, kappa, Omega))``. ``V`` is
    symmetrized after every step. If an emitted sample violates
    ``V + (i/2) sigma >= -positivity_tol ||V||`` the run restarts with the
    step halved, up to ``max_halvings`` times.

    With ``stop_when_converged`` the run ends at the first period whose
    periodicity defect falls below ``convergence_threshold``.
    """
    if not override_stability:
        report = floquet if floquet is not None else floquet_analysis(drift.periodic)
        if not report.stable:
            raise InstabilityError(
                f"drift is unstable (max |multiplier| = {np.max(np.abs(report.multipliers)):.6g})",
                context="covariance equation of motion",
            )
    if isinstance(V0, CovarianceState):
        t_start, V0 = V0.t, V0.V
    else:
        t_start = 0.0
    V0 = default_initial_covariance(nbar) if V0 is None else np.asarray(V0, dtype=float)
    tau = drift.tau
    if n_periods is None:
        if t_end is None or t_end <= 0:
            raise ValueError("t_end must be positive")
        n_periods = int(np.ceil(t_end / tau - 1e-9))
    if n_periods < 2:
        raise ValueError("need at least two periods to judge periodicity")
    M = steps_per_tau or steps_per_period(tau, covariance_step_bound(drift))
    slack = intrinsic_uncertainty_slack(drift, D)
    for _ in range(max_halvings + 1):
        try:
            return _propagate(drift, D.D, V0, t_start, n_periods, M, samples_per_period,
                              positivity_tol, slack, convergence_threshold, stop_when_converged)
        except PositivityLossError:
            M *= 2
    raise PositivityLossError(
        "covariance lost physicality after repeated step halving",
        context="covariance equation of motion",
    )


def intrinsic_uncertainty_slack(drift: DriftSpec, D: DiffusionMatrix, samples=16):
    """Physicality slack owed to the model rather than to the integrator.

    Momentum-only mechanical damping is not of Lindblad form: the matrix
    ``D + (i/2)(A sigma + sigma A^T)`` has a negative eigenvalue of order
    ``gamma_m``, so near-vacuum states can dip below the uncertainty bound
    during transients whatever the step size. The slack is that rate times
    the mixing time ``1/omega_m``.
    """
    worst = 0.0
    for t in np.arange(samples) * (drift.tau / samples):
        A = drift.A(t)
        lam = np.linalg.eigvalsh(D.D + 0.5j * (A @ SIGMA + SIGMA @ A.T))[0]
        worst = max(worst, -lam)
    return worst / drift.omega_m


def _propagate(drift, D, V0, t_start, n_periods, M, S, positivity_tol, slack, threshold, stop_early):
    tau = drift.tau
    h = tau / M
    S = S or M
    if M % S:
        S = M
    stride = M // S
    k2 = np.arange(2 * M)
    table = np.array([drift.A(t_start + k * h / 2) for k in k2])
    twoM = 2 * M

    def rhs(k, V):
        AV = table[k % twoM] @ V
        return AV + AV.T + D

    samples = np.empty((n_periods * S + 1, 4, 4))
    min_eigs = np.empty(n_periods * S + 1)
    samples[0] = V0
    min_eigs[0] = physicality_min_eig(V0)
    state = {"asym": 0.0, "defects": [], "last": n_periods * S}

    def record(i, V):
        if i == 0:
            return False
        asym = np.abs(V - V.T).max() / max(np.abs(V).max(), 1e-300)
        state["asym"] = max(state["asym"], asym)
        if i % stride:
            return False
        j = i // stride
        Vs = 0.5 * (V + V.T)
        samples[j] = Vs
        me = physicality_min_eig(Vs)
        min_eigs[j] = me
        if not np.all(np.isfinite(Vs)) or me < -(positivity_tol * np.linalg.norm(Vs, 2) + slack):
            raise PositivityLossError(f"physicality lost at t={t_start + i * h:.6g}")
        if j % S == 0 and j >= 2 * S:
            cur = samples[j - S: j + 1]
            prev = samples[j - 2 * S: j - S + 1]
            d = np.max(np.linalg.norm(cur - prev, axis=(1, 2))) / np.linalg.norm(cur[-1])
            state["defects"].append(d)
            if stop_early and d < threshold:
                state["last"] = j
                return True
        return False

    _rk4_symmetric(rhs, V0.copy(), n_periods * M, h, record)
    last = state["last"]
    t = t_start + np.arange(last + 1) * (tau / S)
    defects = np.array(state["defects"])
    converged = bool(len(defects) and defects[-1] < threshold)
    return CovarianceSeries(t, samples[: last + 1], min_eigs[: last + 1], S, M, defects,
                            converged, state["asym"], drift.Omega)


def _rk4_symmetric(rhs, V, n_steps, h, callback):
    half, sixth = 0.5 * h, h / 6.0
    k2 = 0
    for i in range(1, n_steps + 1):
        s1 = rhs(k2, V)
        s2 = rhs(k2 + 1, V + half * s1)
        s3 = rhs(k2 + 1, V + half * s2)
        s4 = rhs(k2 + 2, V + h * s3)
        V = V + sixth * (s1 + 2.0 * (s2 + s3) + s4)
        stop = callback(i, V)
        V = 0.5 * (V + V.T)
        k2 += 2
        if stop:
            break
    return V


def extract_fourier_components(series: CovarianceSeries, n_max: int, require_converged=True):
    """``V_n = (1/tau) int V(t) exp(-i n Omega t) dt`` over the final period.

    Uses the rectangle rule on the uniform samples, which is exact for
    trigonometric polynomials of degree below the sample count.
    """
    if require_converged and not series.converged:
        last = series.period_defect[-1] if len(series.period_defect) else np.inf
        raise NotConvergedError(
            f"periodicity defect {last:.3g} above threshold",
            context="asymptotic periodicity of V(t)",
        )
    t, V = series.final_period()
    out = {}
    for n in range(-n_max, n_max + 1):
        w = np.exp(-1j * n * series.Omega * t) / len(t)
        out[n] = np.tensordot(w, V, axes=1)
    for n in range(1, n_max + 1):
        avg = 0.5 * (out[n] + out[-n].conj())
        out[n], out[-n] = avg, avg.conj()
    out[0] = out[0].real.astype(complex)
    return out


def vectorized_system(drift: DriftSpec, D: DiffusionMatrix):
    """The covariance equation as ``v' = K(t) v + vec(D)`` in 16 dimensions."""
    eye = np.eye(4)
    blocks = {n: np.kron(A, eye) + np.kron(eye, A) for n, A in drift.blocks.items()}
    return PeriodicMatrixFunction(drift.Omega, blocks, real=True), D.D.ravel()
