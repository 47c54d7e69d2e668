import numpy as np
import pytest
from scipy.integrate import solve_ivp

from optomod.covariance import build_diffusion, build_drift, drift_from_harmonics, vectorized_system
from optomod.orbits import effective_detuning
from optomod.params import derive_constants, system_from_mapping

FIG2_SYSTEM = dict(L_mm=25.0, finesse=1.4e4, omega_m_hz=1e6, Q=1e6, mass_ng=150.0, T_K=0.1,
                    lambda_nm=1064.0, delta0_over_omega_m=1.0, Omega_over_omega_m=2.0)

DESK = dict(omega_m=1.0, gamma_m=0.002, kappa=0.2, Omega=2.0)
DESK_G = {0: 0.08, -1: 0.04, 1: 0.02}

ACCEPTANCE_LINES = []


def fig2_drive(p_side=2.0):
    return [{"n": 0, "P_mW": 10.0}, {"n": 1, "P_mW": p_side}, {"n": -1, "P_mW": p_side}]


def fig2_constants(p_side=2.0, **overrides):
    system = dict(FIG2_SYSTEM, **overrides)
    return derive_constants(system_from_mapping(system, fig2_drive(p_side)))


def desk_drift(G=None, Delta=None):
    return drift_from_harmonics(DESK_G if G is None else G, {0: 1.0} if Delta is None else Delta,
                                DESK["omega_m"], DESK["gamma_m"], DESK["kappa"], DESK["Omega"])


def desk_diffusion(nbar):
    return build_diffusion(gamma_m=DESK["gamma_m"], kappa=DESK["kappa"], nbar=nbar)


def periodic_covariance_oracle(drift, D, samples=32):
    """Exact tau-periodic V(t) from the monodromy of the 16-dim vectorized ODE."""
    K, d = vectorized_system(drift, D)
    tau = drift.tau

    def rhs(t, y):
        Kt = K(t)
        Phi = y[:256].reshape(16, 16)
        return np.concatenate([(Kt @ Phi).ravel(), Kt @ y[256:] + d])

    y0 = np.concatenate([np.eye(16).ravel(), np.zeros(16)])
    sol = solve_ivp(rhs, (0, tau), y0, method="DOP853", rtol=1e-12, atol=1e-12)
    M = sol.y[:256, -1].reshape(16, 16)
    v0 = np.linalg.solve(np.eye(16) - M, sol.y[256:, -1])
    ts = np.arange(samples) * tau / samples
    sol = solve_ivp(lambda t, v: K(t) @ v + d, (0, tau), v0, method="DOP853",
                    rtol=1e-12, atol=1e-12, t_eval=ts)
    return ts, sol.y.T.reshape(-1, 4, 4)


@pytest.fixture(scope="session")
def fig2_setup():
    """Drift and diffusion for the modulated and unmodulated fig2 runs."""
    out = {}
    for label, p in (("mod", 2.0), ("unmod", 0.0)):
        c = fig2_constants(p)
        d0, orbit = effective_detuning(c)
        out[label] = (c, d0, orbit, build_drift(orbit, c, d0), build_diffusion(c))
    return out


@pytest.fixture
def acceptance():
    def report(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def floquet_test_systems():
    """Three stable periodic systems ``(B, g)`` for the periodicity bound."""
    from optomod.floquet import PeriodicMatrixFunction
    scalar = PeriodicMatrixFunction(2 * np.pi, {0: [[-0.3]], 1: [[0.25]], -1: [[0.25]]})
    mathieu = PeriodicMatrixFunction(2.0, {
        0: [[0.0, 1.0], [-1.0, -0.4]],
        1: [[0.0, 0.0], [0.15, 0.0]],
        -1: [[0.0, 0.0], [0.15, 0.0]],
    })
    desk = desk_drift().periodic

    def forcing(B, amp):
        d = B.dim
        return lambda t: amp * np.cos(B.Omega * t) * np.ones(d), amp * np.sqrt(d)

    return [(name, B, *forcing(B, amp)) for name, B, amp in
            (("scalar", scalar, 1.0), ("mathieu", mathieu, 0.5), ("desk", desk, 0.2))]


def measured_defect(B, g, x0, t0, elapsed):
    """``||x(t + tau) - x(t)||`` for ``x' = B(t) x + g(t)`` at ``t = t0 + elapsed``."""
    t = t0 + elapsed
    sol = solve_ivp(lambda s, x: B(s) @ x + g(s), (t0, t + B.tau), np.asarray(x0, float),
                    method="DOP853", rtol=1e-11, atol=1e-13, t_eval=[t, t + B.tau])
    return float(np.linalg.norm(sol.y[:, 1] - sol.y[:, 0]))
