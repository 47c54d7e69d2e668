"""Orchestration: orbit, drift, covariance, metrics, and deterministic outputs.

Data files are CSV with one header row and 17 significant digits; the
manifest is JSON. Nothing time-dependent is written into data files, so
identical configurations reproduce identical CSV bodies.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, with_value
from .covariance import (
    build_diffusion,
    build_drift,
    check_stability,
    drift_from_harmonics,
    extract_fourier_components,
    physicality_min_eig,
    propagate_covariance,
)
from .errors import ConfigError, DivergenceError, InstabilityError, RwaUnstableError
from .metrics import metrics_over_period
from .orbits import (
    effective_detuning,
    evaluate_orbit,
    integrate_mean_field,
    orbit_coefficients,
    orbit_distance,
)
from .params import constants_to_dict, derive_constants
from .rwa import RwaParams, rwa_stability, rwa_sweep_rows, rotating_quadrature_variance
from .spectral import spectral_covariance, spectrum_slice

STAGES = ("derive", "orbit", "stability", "covariance", "spectrum", "metrics", "rwa", "compare")
_REQUIRES = {
    "derive": (),
    "orbit": ("derive",),
    "stability": ("orbit",),
    "covariance": ("stability",),
    "spectrum": ("stability",),
    "metrics": ("covariance",),
    "rwa": ("orbit",),
    "compare": ("covariance",),
}

TRAJ_COLS = ("t", "q", "p", "re_a", "im_a")
COV_COLS = ("t",) + tuple(f"V{i + 1}{j + 1}" for i in range(4) for j in range(i, 4)) + ("physicality_min_eig",)
SPEC_COLS = ("omega", "S_qq", "S_pp", "S_xx", "S_yy")
METRIC_COLS = ("t", "E_N", "mirror_min_var", "mirror_angle", "physical")
RWA_COLS = ("G0", "Gm1", "gamma_m", "kappa", "nbar", "f_minus", "f_plus", "stable")
SWEEP_COLS = ("value", "floquet_stable", "E_N_min", "E_N_max", "E_N_mean",
              "min_var_min", "min_var_max", "min_var_mean", "rwa_f_minus")


@dataclass
class RunManifest:
    config: dict
    constants: dict
    verdicts: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def to_dict(self):
        return {"config": self.config, "constants": self.constants, "verdicts": self.verdicts,
                "files": self.files, "timings": self.timings, "results": self.results}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _cov_rows(ts, Vs):
    iu = np.triu_indices(4)
    for t, V in zip(ts, Vs):
        yield (t, *V[iu], physicality_min_eig(V))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _harmonics_json(h):
    return {str(n): [v.real, v.imag] for n, v in sorted(h.items())}


class _Run:
    """Mutable state of one pipeline execution."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.prefix = cfg.output.prefix
        self.man = RunManifest(config=cfg.to_dict(), constants={})
        self.c = None
        self.delta0 = None
        self.orbit = None
        self.drift = None
        self.D = None
        self.nbar = None
        self.floquet = None
        self.spectral = None
        self.series = None
        self.time_components = None

    def path(self, name):
        p = self.out / f"{self.prefix}{name}"
        self.man.files.append(p.name)
        return p

    def timed(self, label, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            self.man.timings[label] = time.perf_counter() - t0

    # stages -------------------------------------------------------------

    def derive(self):
        if self.cfg.is_synthetic:
            s = self.cfg.synthetic
            self.nbar = s.nbar
            self.man.constants = {"omega_m": s.omega_m, "gamma_m": s.gamma_m, "kappa": s.kappa,
                                  "nbar": s.nbar, "Omega": s.Omega, "tau": 2 * np.pi / s.Omega}
            return
        self.c = derive_constants(self.cfg.system_params())
        self.nbar = self.c.nbar
        self.man.constants = constants_to_dict(self.c)

    def orbit_stage(self):
        sv = self.cfg.solver
        if self.cfg.is_synthetic:
            s = self.cfg.synthetic
            self.drift = drift_from_harmonics(s.G, s.Delta, s.omega_m, s.gamma_m, s.kappa, s.Omega)
            self.D = build_diffusion(gamma_m=s.gamma_m, kappa=s.kappa, nbar=s.nbar)
            return
        c = self.c
        if sv.detuning_reference == "effective":
            self.delta0, self.orbit = effective_detuning(
                c, j_max=sv.j_max, n_max=sv.n_max, resonance_floor=sv.resonance_floor)
        else:
            self.delta0 = c.detuning
            self.orbit = orbit_coefficients(c, self.delta0, j_max=sv.j_max, n_max=sv.n_max,
                                            resonance_floor=sv.resonance_floor)
        self.man.results["bare_detuning"] = self.delta0
        S = sv.samples_per_period
        t = np.arange(S + 1) * (c.tau / S)
        q, p, a = evaluate_orbit(self.orbit, t)
        write_csv(self.path("orbit_analytic.csv"), TRAJ_COLS, zip(t, q, p, a.real, a.imag))
        self.man.verdicts["classical_divergence"] = None
        if sv.mean_field_periods:
            try:
                traj = integrate_mean_field(c, self.delta0, n_periods=sv.mean_field_periods,
                                            convergence_threshold=sv.convergence_threshold)
            except DivergenceError:
                self.man.verdicts["classical_divergence"] = True
                raise
            self.man.verdicts["classical_divergence"] = False
            stride = max(1, traj.samples_per_period // S)
            write_csv(self.path("mean_field.csv"), TRAJ_COLS,
                      zip(traj.t[::stride], traj.q[::stride], traj.p[::stride],
                          traj.re_a[::stride], traj.im_a[::stride]))
            dist, amp = orbit_distance(traj, self.orbit)
            self.man.results["mean_field"] = {
                "converged": traj.converged,
                "last_cycle_change": float(traj.cycle_change[-1]) if len(traj.cycle_change) else None,
                "orbit_rms_distance": dist, "orbit_rms_amplitude": amp,
                "relative_distance": dist / amp if amp else None,
            }
        self.drift = build_drift(self.orbit, c, self.delta0, n_max=sv.n_max)
        self.D = build_diffusion(c)

    def stability(self):
        report, pointwise = check_stability(self.drift)
        self.floquet = report
        G0 = abs(self.drift.G.get(0, 0))
        Gm1 = abs(self.drift.G.get(-1, 0))
        self.man.verdicts.update({
            "floquet_stable": report.stable,
            "pointwise_stable": pointwise,
            "rwa_condition": rwa_stability(RwaParams(G0, Gm1, self.drift.gamma_m, self.drift.kappa, self.nbar)),
        })
        self.man.results["floquet"] = _jsonable(report.to_dict())
        self.man.results["drift"] = {"G": _harmonics_json(self.drift.G),
                                     "Delta": _harmonics_json(self.drift.Delta)}

    def covariance(self):
        sv = self.cfg.solver
        if not self.floquet.stable:
            raise InstabilityError("drift is unstable; no steady periodic covariance",
                                   context="covariance equation of motion")
        S = sv.samples_per_period
        tau = self.drift.tau
        ts = np.arange(S) * (tau / S)
        doc = {}
        if sv.mode in ("spectral", "both"):
            self.spectral = self.timed("spectral", lambda: spectral_covariance(
                self.drift, self.D, sv.N, rtol=sv.rtol, max_panels=sv.max_panels,
                floquet=self.floquet))
            Vs = self.spectral.V_at(ts).real
            write_csv(self.path("covariance_spectral.csv"), COV_COLS, _cov_rows(ts, Vs))
            doc["spectral"] = self.spectral.to_dict()
        if sv.mode in ("time_domain", "both"):
            self.series = self.timed("time_domain", lambda: propagate_covariance(
                self.drift, self.D, n_periods=sv.covariance_periods, samples_per_period=S,
                nbar=self.nbar, floquet=self.floquet, positivity_tol=sv.positivity_tol,
                convergence_threshold=sv.convergence_threshold, stop_when_converged=True))
            write_csv(self.path("covariance_time.csv"), COV_COLS,
                      _cov_rows(self.series.t, self.series.V))
            self.time_components = extract_fourier_components(self.series, 2 * sv.N)
            doc["time_domain"] = {
                "converged": self.series.converged,
                "periods": int(round(self.series.t[-1] / tau)),
                "components": {str(n): {"re": V.real.tolist(), "im": V.imag.tolist()}
                               for n, V in sorted(self.time_components.items())},
            }
        with open(self.path("V_n.json"), "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)

    def spectrum(self):
        sv = self.cfg.solver
        wm = self.drift.omega_m
        w = np.linspace(-sv.spectrum_span * wm, sv.spectrum_span * wm, sv.spectrum_points)
        S, peaks = spectrum_slice(self.drift, self.D, sv.N, w, check_stability=False)
        write_csv(self.path("spectrum.csv"), SPEC_COLS, ((wi, *row) for wi, row in zip(w, S)))
        self.man.results["spectrum_peaks"] = {k: p.tolist() for k, p in zip(SPEC_COLS[1:], peaks)}

    def metrics(self):
        S = self.cfg.solver.samples_per_period
        out = {}
        if self.spectral is not None:
            samples, summ = metrics_over_period(self.spectral, S)
            self._write_metrics("metrics_spectral.csv", samples)
            out["spectral"] = summ
        if self.series is not None:
            samples, summ = metrics_over_period(self.series)
            self._write_metrics("metrics_time.csv", samples)
            out["time_domain"] = summ
        self.man.results["metrics"] = out

    def _write_metrics(self, name, samples):
        write_csv(self.path(name), METRIC_COLS,
                  ((s.t, s.E_N, s.mirror_min_var, s.mirror_angle, s.physical) for s in samples))

    def rwa(self):
        dr = self.drift
        G0, Gm1 = abs(dr.G.get(0, 0)), abs(dr.G.get(-1, 0))
        points = [RwaParams(G0, Gm1, dr.gamma_m, dr.kappa, self.nbar)]
        if self.cfg.rwa is not None:
            g = self.cfg.rwa
            points = [RwaParams(*vals) for vals in itertools.product(
                g["G0"], g["Gm1"], g["gamma_m"], g["kappa"], g["nbar"])]
        write_csv(self.path("rwa.csv"), RWA_COLS, rwa_sweep_rows(points))
        try:
            self.man.results["rwa_f_minus"] = rotating_quadrature_variance(
                G0, Gm1, dr.gamma_m, dr.kappa, self.nbar)
        except RwaUnstableError:
            self.man.results["rwa_f_minus"] = None

    def compare(self):
        if self.spectral is None or self.time_components is None:
            raise ConfigError("compare needs mode=both")
        table = comparison_table(self.spectral.V, self.time_components, self.cfg.solver.N)
        write_csv(self.path("compare.csv"), ("n", "rel_frobenius"), table)
        self.man.results["compare"] = {"per_n": {str(int(n)): d for n, d in table},
                                       "worst": max(d for _, d in table)}


def _closure(stages):
    need = set()

    def add(s):
        if s in need:
            return
        for r in _REQUIRES[s]:
            add(r)
        need.add(s)

    for s in stages:
        if s not in _REQUIRES:
            raise ConfigError(f"unknown stage {s!r}")
        add(s)
    return [s for s in STAGES if s in need]


def comparison_table(spectral_V, time_V, n_max=None):
    """Relative Frobenius difference per harmonic present in both solvers.

    With sideband truncation ``N`` only ``|n| <= N`` is resolved by the
    spectral solver, so callers pass ``n_max = N``.
    """
    rows = []
    for n in sorted(spectral_V):
        if n not in time_V or (n_max is not None and abs(n) > n_max):
            continue
        ref = np.linalg.norm(time_V[n])
        diff = np.linalg.norm(spectral_V[n] - time_V[n])
        rows.append((n, diff / ref if ref > 0 else diff))
    return rows


def run_pipeline(cfg: RunConfig, stages=("metrics",), out_dir=None) -> RunManifest:
    """Run ``stages`` (and their prerequisites), write files and the manifest."""
    stages = _closure(stages)
    if "compare" in stages and cfg.solver.mode != "both":
        raise ConfigError("compare needs solver.mode = both")
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    actions = {"derive": run.derive, "orbit": run.orbit_stage, "stability": run.stability,
               "covariance": run.covariance, "spectrum": run.spectrum, "metrics": run.metrics,
               "rwa": run.rwa, "compare": run.compare}
    try:
        for s in stages:
            run.timed(s, actions[s])
    finally:
        run.man.files.append(f"{run.prefix}manifest.json")
        with open(out / f"{run.prefix}manifest.json", "w") as fh:
            json.dump(_jsonable(run.man.to_dict()), fh, indent=1, sort_keys=True)
    return run.man


def compare_solvers(cfg: RunConfig, out_dir=None):
    """Per-harmonic relative Frobenius differences between the two solvers."""
    cfg = replace(cfg, solver=replace(cfg.solver, mode="both"))
    man = run_pipeline(cfg, ("compare",), out_dir)
    return man.results["compare"]


def _sweep_point(args):
    cfg, path, value, out = args
    point = with_value(cfg, path, value)
    man = run_pipeline(point, ("metrics", "rwa"), out)
    m = man.results["metrics"]
    summ = m.get("spectral") or m.get("time_domain")
    return (value, man.verdicts["floquet_stable"], summ["E_N_min"], summ["E_N_max"], summ["E_N_mean"],
            summ["min_var_min"], summ["min_var_max"], summ["min_var_mean"],
            man.results["rwa_f_minus"] if man.results["rwa_f_minus"] is not None else float("nan"))


def run_sweep(cfg: RunConfig, out_dir=None, workers=1):
    """Run the full pipeline at each sweep value in its own directory."""
    if cfg.sweep is None:
        raise ConfigError("configuration has no sweep section")
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, cfg.sweep.path, v, out / f"point_{i:03d}") for i, v in enumerate(cfg.sweep.values)]
    workers = max(1, min(int(workers), len(jobs), os.cpu_count() or 1))
    if workers == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, jobs))
    write_csv(out / f"{cfg.output.prefix}sweep.csv", SWEEP_COLS, rows)
    return rows


__all__ = ["RunManifest", "run_pipeline", "compare_solvers", "run_sweep", "comparison_table",
           "write_csv"]
