import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.linalg import solve_continuous_lyapunov

from optomod.covariance import drift_from_harmonics, propagate_covariance
from optomod.errors import InstabilityError
from optomod.spectral import GK_NODES, GK_WG, GK_WK, assemble_block_matrix, spectral_covariance, spectrum_slice

from conftest import DESK, desk_diffusion, desk_drift, periodic_covariance_oracle


def test_kronrod_rule_exactness():
    # GK15 integrates polynomials up to degree 22 exactly, G7 up to degree 13
    for deg in (0, 4, 13, 22):
        exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
        assert GK_WK @ GK_NODES**deg == pytest.approx(exact, abs=1e-14)
    assert GK_WG @ GK_NODES**12 == pytest.approx(2 / 13, abs=1e-14)


@pytest.mark.parametrize("nbar", [0.0, 10.0])
def test_unmodulated_equals_lyapunov(nbar):
    dr = desk_drift(G={0: 0.08})
    D = desk_diffusion(nbar)
    sc = spectral_covariance(dr, D, N=2)
    Vl = solve_continuous_lyapunov(dr.block(0).real, -D.D)
    assert np.abs(sc.V[0] - Vl).max() / np.abs(Vl).max() < 1e-9
    for n in (1, 2, 3, 4):
        assert np.abs(sc.V[n]).max() < 1e-9 * np.abs(Vl).max()


@pytest.mark.parametrize("nbar", [0.0, 10.0])
def test_matches_exact_periodic_solution(nbar):
    dr = desk_drift()
    D = desk_diffusion(nbar)
    ts, Vs = periodic_covariance_oracle(dr, D)
    errs = []
    for N in (1, 2, 3):
        V = spectral_covariance(dr, D, N=N).V_at(ts).real
        errs.append(np.abs(V - Vs).max() / np.abs(Vs).max())
    assert errs[1] < 1e-4 and errs[2] < 1e-6
    # truncation error shrinks with N
    assert errs[0] > errs[1] > errs[2]


def test_fig2_parameters_match_exact_periodic_solution(fig2_setup):
    _, _, _, dr, D = fig2_setup["mod"]
    ts, Vs = periodic_covariance_oracle(dr, D, samples=16)
    V = spectral_covariance(dr, D, N=2).V_at(ts).real
    assert np.abs(V - Vs).max() / np.abs(Vs).max() < 1e-3


def test_truncation_monotone_on_V0():
    dr = desk_drift()
    D = desk_diffusion(0.0)
    V0 = [spectral_covariance(dr, D, N=N).V[0] for N in (1, 2, 3)]
    d12 = np.linalg.norm(V0[1] - V0[0])
    d23 = np.linalg.norm(V0[2] - V0[1])
    assert d23 < d12


def test_components_hermitian_and_real_reconstruction():
    sc = spectral_covariance(desk_drift(), desk_diffusion(3.0), N=2)
    for n, Vn in sc.V.items():
        np.testing.assert_array_equal(sc.V[-n], Vn.conj())
        np.testing.assert_array_equal(Vn, Vn.T)
    Vt = sc.V_at(np.linspace(0, np.pi, 7))
    assert np.abs(Vt.imag).max() < 1e-15 * np.abs(Vt).max()
    assert sc.hermiticity_defect < 1e-6


def test_deterministic():
    a = spectral_covariance(desk_drift(), desk_diffusion(0.0), N=2)
    b = spectral_covariance(desk_drift(), desk_diffusion(0.0), N=2)
    for n in a.V:
        np.testing.assert_array_equal(a.V[n], b.V[n])


def test_block_matrix_layout():
    dr = desk_drift()
    N, w = 2, 0.37
    M = assemble_block_matrix(dr, w, N)
    for k in range(-N, N + 1):
        for l in range(-N, N + 1):
            blk = M[4 * (k + N):4 * (k + N) + 4, 4 * (l + N):4 * (l + N) + 4]
            expect = dr.block(k - l) if abs(k - l) <= 1 else np.zeros((4, 4))
            if k == l:
                expect = expect - 1j * (w + k * dr.Omega) * np.eye(4)
            np.testing.assert_allclose(blk, expect)


def test_spectrum_integrates_to_variances():
    dr = desk_drift(G={0: 0.08})
    D = desk_diffusion(1.0)
    sc = spectral_covariance(dr, D, N=0)
    w = np.linspace(-40, 40, 200001)
    S, peaks = spectrum_slice(dr, D, 0, w)
    assert np.all(S >= 0)          # S_pp vanishes at w = 0 since p ~ dq/dt
    # tails beyond |w| = 40 decay like C / w^2 and contribute S(+-40) * 40
    integral = (trapezoid(S, w, axis=0) + 40 * (S[0] + S[-1])) / (2 * np.pi)
    np.testing.assert_allclose(integral, np.diag(sc.V[0]).real, rtol=1e-4)
    # mechanical and optical resonances near +-omega_m
    assert np.min(np.abs(np.abs(peaks[0]) - DESK["omega_m"])) < 0.1


def test_both_solvers_refuse_unstable():
    dr = drift_from_harmonics({-1: 0.5}, {0: -1.0}, DESK["omega_m"], DESK["gamma_m"],
                              DESK["kappa"], DESK["Omega"])
    D = desk_diffusion(0.0)
    with pytest.raises(InstabilityError):
        spectral_covariance(dr, D, N=2)
    with pytest.raises(InstabilityError):
        propagate_covariance(dr, D, n_periods=10)
    with pytest.raises(InstabilityError):
        spectrum_slice(dr, D, 2, [0.0, 1.0])
