"""Acceptance criteria 1-8, one test each, reported as PASS/FAIL lines."""
import time
import warnings

import numpy as np
import pytest
from scipy.linalg import block_diag, solve_continuous_lyapunov

from optomod.config import load_preset, with_value
from optomod.covariance import extract_fourier_components, propagate_covariance
from optomod.floquet import (
    DefectiveMonodromyWarning,
    PeriodicMatrixFunction,
    align_exponents,
    floquet_analysis,
    periodicity_error_bound,
)
from optomod.metrics import logarithmic_negativity, metrics_over_period
from optomod.pipeline import compare_solvers, run_pipeline
from optomod.rwa import (
    RwaParams,
    equivalence_map,
    rwa_drift_diffusion,
    rwa_variances,
    squeezed_env_variances,
)
from optomod.spectral import spectral_covariance

from conftest import desk_diffusion, desk_drift, floquet_test_systems, measured_defect


@pytest.fixture(scope="module")
def fig2_runs(tmp_path_factory):
    out = {}
    for name in ("paper-fig2", "paper-fig2-unmodulated"):
        t0 = time.perf_counter()
        man = run_pipeline(load_preset(name), ("metrics", "rwa"), tmp_path_factory.mktemp(name))
        out[name] = (man, time.perf_counter() - t0)
    return out


def test_criterion_1_squeezing_below_vacuum(fig2_runs, acceptance):
    mod, t_mod = fig2_runs["paper-fig2"]
    unmod, t_unmod = fig2_runs["paper-fig2-unmodulated"]
    m = mod.results["metrics"]["spectral"]
    u = unmod.results["metrics"]["spectral"]
    runtime = max(t_mod, t_unmod)
    ok = m["min_var_max"] < 0.5 and u["min_var_min"] >= 0.5 and runtime < 300
    assert acceptance(1, ok, f"modulated min_var in [{m['min_var_min']:.4f}, {m['min_var_max']:.4f}] < 0.5; "
                             f"unmodulated min {u['min_var_min']:.4f} >= 0.5; runtime {runtime:.1f} s")


def test_criterion_2_rwa_tracking(fig2_runs, acceptance, tmp_path):
    man, _ = fig2_runs["paper-fig2"]
    mean = man.results["metrics"]["spectral"]["min_var_mean"]
    f_minus = man.results["rwa_f_minus"]
    fig2_err = abs(mean - f_minus) / f_minus
    deep = load_preset("deep-rwa")
    deep_errs = []
    for nbar in (0.0, 10.0):
        dm = run_pipeline(with_value(deep, "synthetic.nbar", nbar), ("metrics", "rwa"), tmp_path / f"n{nbar}")
        dmean = dm.results["metrics"]["spectral"]["min_var_mean"]
        deep_errs.append(abs(dmean - dm.results["rwa_f_minus"]) / dm.results["rwa_f_minus"])
    s = deep.synthetic
    regime = s.omega_m / s.kappa >= 50 and s.omega_m / max(abs(g) for g in s.G.values()) >= 50
    ok = fig2_err < 0.25 and max(deep_errs) < 0.10 and regime
    assert acceptance(2, ok, f"fig2 preset {mean:.4f} vs f_minus {f_minus:.4f} ({fig2_err:.1%} < 25%); "
                             f"deep-RWA worst {max(deep_errs):.2%} < 10%")


def test_criterion_3_entanglement_oscillations(fig2_runs, fig2_setup, acceptance):
    m = fig2_runs["paper-fig2"][0].results["metrics"]["spectral"]
    u = fig2_runs["paper-fig2-unmodulated"][0].results["metrics"]["spectral"]
    _, _, _, dr, D = fig2_setup["mod"]
    sc = spectral_covariance(dr, D, N=2)
    t = np.linspace(0, dr.tau, 16, endpoint=False)
    a, _ = metrics_over_period(sc, t=t)
    b, _ = metrics_over_period(sc, t=t + dr.tau)
    period_err = max(abs(x.E_N - y.E_N) for x, y in zip(a, b))
    ok = m["E_N_max"] > 0 and m["E_N_max"] > u["E_N_max"] and period_err < 1e-6
    assert acceptance(3, ok, f"E_N max {m['E_N_max']:.4f} > 0 and > unmodulated {u['E_N_max']:.4f}; "
                             f"|E_N(t) - E_N(t+tau)| <= {period_err:.1e}")


def test_criterion_4_orbit_cross_validation(fig2_runs, acceptance):
    man, runtime = fig2_runs["paper-fig2"]
    mf = man.results["mean_field"]
    ok = mf["converged"] and mf["relative_distance"] < 0.01 and runtime < 600
    assert acceptance(4, ok, f"RMS distance {mf['relative_distance']:.3%} of RMS amplitude < 1%; "
                             f"converged {mf['converged']}; runtime {runtime:.1f} s")


def test_criterion_5_cross_solver(acceptance, tmp_path):
    res = compare_solvers(load_preset("desk-scale"), tmp_path)
    worst = res["worst"]
    dr = desk_drift(G={0: 0.08})
    lyap_errs = []
    for nbar in (0.0, 10.0):
        D = desk_diffusion(nbar)
        Vl = solve_continuous_lyapunov(dr.block(0).real, -D.D)
        Vs = spectral_covariance(dr, D, N=2).V[0]
        ser = propagate_covariance(dr, D, n_periods=2000, nbar=nbar, stop_when_converged=True)
        Vt = extract_fourier_components(ser, 2)[0]
        ref = np.linalg.norm(Vl)
        lyap_errs += [np.linalg.norm(Vs - Vl) / ref, np.linalg.norm(Vt - Vl) / ref]
    ok = worst < 0.05 and max(lyap_errs) < 1e-3
    per_n = ", ".join(f"{n}: {v:.1e}" for n, v in sorted(res["per_n"].items(), key=lambda kv: int(kv[0])))
    assert acceptance(5, ok, f"modulated worst {worst:.1e} < 5% ({per_n}); "
                             f"unmodulated vs Lyapunov worst {max(lyap_errs):.1e} < 1e-3")


def test_criterion_6_floquet(acceptance):
    rng = np.random.default_rng(11)
    const_errs = []
    for _ in range(10):
        # well-conditioned: damped rotations in a random orthogonal basis
        Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        blocks = [np.array([[-d, w], [-w, -d]]) for d, w in rng.uniform([0.05, 0.2], [0.5, 2.0], (2, 2))]
        A = Q @ block_diag(*blocks) @ Q.T
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DefectiveMonodromyWarning)
            rep = floquet_analysis(PeriodicMatrixFunction.constant(A, Omega=rng.uniform(1.0, 4.0)))
        const_errs.append(align_exponents(rep.exponents, np.linalg.eigvals(A), rep.tau))
    alpha, beta, Omega = -0.3, 0.5, 2 * np.pi
    rep = floquet_analysis(PeriodicMatrixFunction(Omega, {0: [[alpha]], 1: [[beta / 2]], -1: [[beta / 2]]}))
    scalar_err = abs(rep.exponents[0].real - alpha)
    margins = []
    for name, B, g, g_max in floquet_test_systems():
        rep = floquet_analysis(B)
        x0 = np.ones(B.dim)
        for k in (2, 5, 10):
            bound = periodicity_error_bound(rep, np.linalg.norm(x0), g_max, k * B.tau)
            margins.append(measured_defect(B, g, x0, 0.0, k * B.tau) / bound)
    ok = max(const_errs) < 1e-10 and scalar_err < 1e-8 and max(margins) <= 1.0
    assert acceptance(6, ok, f"constant exponents err {max(const_errs):.1e} < 1e-10; scalar alpha err "
                             f"{scalar_err:.1e} < 1e-8; max defect/bound {max(margins):.2e} <= 1 "
                             f"over 3 systems x (2, 5, 10) tau")


def test_criterion_7_rwa_algebra(acceptance):
    rng = np.random.default_rng(2024)
    lyap_err = 0.0
    n = 0
    while n < 100:
        gamma, kappa = 10 ** rng.uniform(-4, -1), 10 ** rng.uniform(-2, 0)
        G0 = 10 ** rng.uniform(-2, 0)
        Gm1 = rng.uniform(-1.2, 1.2) * G0
        if Gm1**2 - G0**2 >= 2 * gamma * kappa * 0.99:
            continue
        p = RwaParams(G0, Gm1, gamma, kappa, rng.uniform(0, 50))
        A, D = rwa_drift_diffusion(p)
        V = solve_continuous_lyapunov(A, -D)
        fm, fp = rwa_variances(p)
        lyap_err = max(lyap_err, abs(V[0, 0] - fm) / max(1, fm), abs(V[1, 1] - fp) / max(1, fp),
                       abs(V[0, 1]) / max(1, fp))
        n += 1
    eq_err = 0.0
    for s in (0.25, 0.5, 1.0, 2.0, 4.0):
        G, gamma, kappa, nbar = 0.3, 1e-3, 0.05, 4.0
        G0, Gm1 = equivalence_map(G, s)
        fm, fp = rwa_variances(RwaParams(G0, Gm1, gamma, kappa, nbar))
        sm, sp = squeezed_env_variances(G, s, gamma, kappa, nbar)
        # the mapped coupling exchanges the two quadrature labels
        eq_err = max(eq_err, abs(fm - sp), abs(fp - sm))
    ok = lyap_err < 1e-9 and eq_err < 1e-12
    assert acceptance(7, ok, f"f+- vs Lyapunov over 100 draws {lyap_err:.1e} < 1e-9; "
                             f"equivalence over 5 values of s {eq_err:.1e} < 1e-12")


def test_criterion_8_gaussian_metrics(acceptance):
    r = 0.5
    c, s = np.cosh(2 * r), np.sinh(2 * r)
    Z = np.diag([1.0, -1.0])
    tmsv = 0.5 * np.block([[c * np.eye(2), s * Z], [s * Z, c * np.eye(2)]])
    en = logarithmic_negativity(tmsv)
    products = [logarithmic_negativity(0.5 * np.eye(4)),
                logarithmic_negativity(np.diag([2.5, 2.5, 0.5, 0.5])),
                logarithmic_negativity(np.diag([10.5, 10.5, 3.5, 3.5]))]
    rng = np.random.default_rng(8)

    def rot(t):
        return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])

    V = tmsv + np.diag([0.3, 0.3, 0.0, 0.0])
    base = logarithmic_negativity(V)
    inv_err = 0.0
    for a, b in rng.uniform(-np.pi, np.pi, (100, 2)):
        R = block_diag(rot(a), rot(b))
        inv_err = max(inv_err, abs(logarithmic_negativity(R @ V @ R.T) - base))
    ok = abs(en - 1.0) < 1e-9 and all(p == 0.0 for p in products) and inv_err < 1e-9
    assert acceptance(8, ok, f"TMSV r=0.5 E_N = {en:.12f}; product states {products}; "
                             f"rotation invariance {inv_err:.1e} < 1e-9 over 100 draws")
