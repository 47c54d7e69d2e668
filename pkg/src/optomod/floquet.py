"""Floquet analysis of tau-periodic linear systems ``x' = B(t) x``.

Besides monodromy matrices and exponents this module estimates the
constants of the asymptotic-periodicity bound

    ||x(t+tau) - x(t)|| <= exp(lam (t-t0)) m_X c n (t-t0+tau)**(n-1)
                           * (2 ||x0|| + tau max||g||)

for the inhomogeneous system ``x' = B(t) x + g(t)``. Norms are spectral
(Euclidean-induced) throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from .errors import IntegrationError, InstabilityError

RTOL = 1e-10
ATOL = 1e-13


class DefectiveMonodromyWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PeriodicMatrixFunction:
    """``B(t) = sum_n B_n exp(i n Omega t)`` with finitely many blocks."""

    Omega: float
    blocks: Mapping[int, np.ndarray]
    real: bool = True
    _stack: np.ndarray = field(init=False, repr=False, compare=False)
    _orders: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.Omega > 0 and np.isfinite(self.Omega)):
            raise ValueError("Omega must be positive and finite")
        blocks = {int(n): np.atleast_2d(np.asarray(b, dtype=complex)) for n, b in self.blocks.items()}
        if not blocks:
            raise ValueError("need at least one Fourier block")
        shapes = {b.shape for b in blocks.values()}
        if len(shapes) != 1 or next(iter(shapes))[0] != next(iter(shapes))[1]:
            raise ValueError("Fourier blocks must be square and share a shape")
        if self.real:
            d = next(iter(shapes))[0]
            for n, b in blocks.items():
                partner = blocks.get(-n, np.zeros((d, d)))
                if not np.allclose(partner, b.conj(), rtol=1e-12, atol=1e-12 * (1 + np.abs(b).max())):
                    raise ValueError(f"B_{-n} != conj(B_{n}); B(t) would not be real")
        orders = np.array(sorted(blocks))
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_orders", orders)
        object.__setattr__(self, "_stack", np.array([blocks[n] for n in orders]))

    @property
    def tau(self):
        return 2.0 * np.pi / self.Omega

    @property
    def dim(self):
        return self._stack.shape[1]

    def __call__(self, t):
        w = np.exp(1j * self._orders * self.Omega * t)
        val = np.tensordot(w, self._stack, axes=1)
        return val.real if self.real else val

    @classmethod
    def constant(cls, B, Omega=2 * np.pi):
        B = np.atleast_2d(np.asarray(B))
        return cls(Omega, {0: B}, real=not np.iscomplexobj(B))


@dataclass(frozen=True)
class FloquetReport:
    monodromy: np.ndarray
    multipliers: np.ndarray
    exponents: np.ndarray
    stable: bool
    c: float
    m_X: float
    lambda_max: float
    n: int
    tau: float
    t0: float
    defective: bool = False
    max_condition: float = 1.0

    @property
    def bound_constants(self):
        return (self.c, self.m_X, self.lambda_max, self.n)

    def to_dict(self):
        return {
            "tau": self.tau,
            "t0": self.t0,
            "stable": self.stable,
            "multipliers": [[z.real, z.imag] for z in self.multipliers],
            "exponents": [[z.real, z.imag] for z in self.exponents],
            "monodromy_real": self.monodromy.real.tolist(),
            "monodromy_imag": self.monodromy.imag.tolist(),
            "bound_constants": {"c": self.c, "m_X": self.m_X,
                                "lambda_max": self.lambda_max, "n": self.n},
            "defective": self.defective,
            "max_condition": self.max_condition,
        }


def _integrate(B, t0, t1, dense=False, t_eval=None, rtol=RTOL, atol=ATOL):
    d = B.dim
    dtype = float if B.real else complex
    y0 = np.eye(d, dtype=dtype).ravel()

    def rhs(t, y):
        return (B(t) @ y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=dense, t_eval=t_eval)
    if sol.status < 0:
        t_fail = float(sol.t[-1]) if len(sol.t) else t0
        raise IntegrationError(f"principal matrix integration failed at t={t_fail:.6g}: {sol.message}",
                               t_fail=t_fail, context="principal matrix solution")
    return sol


def principal_matrix(B: PeriodicMatrixFunction, t0, t, rtol=RTOL, atol=ATOL):
    """Principal matrix solution ``P(t, t0)`` with ``P(t0, t0) = I``."""
    if t < t0:
        raise ValueError("principal_matrix requires t >= t0")
    d = B.dim
    if t == t0:
        return np.eye(d)
    sol = _integrate(B, t0, t, rtol=rtol, atol=atol)
    return sol.y[:, -1].reshape(d, d)


def _unit_columns(V):
    return V / np.linalg.norm(V, axis=0, keepdims=True)


def floquet_analysis(
    B: PeriodicMatrixFunction,
    t0: float = 0.0,
    n_c_samples: int = 64,
    n_x_samples: int = 33,
    condition_threshold: float = 1e8,
) -> FloquetReport:
    """Monodromy, multipliers, exponents and the periodicity-bound constants.

    ``c`` is the worst eigenvector conditioning of ``Y(u) = log M(u)/tau``
    over a uniform grid of ``n_c_samples`` phases; ``m_X`` is the largest
    norm of the periodic factor ``X(t, t')`` over an ``n_x_samples``-squared
    grid of one period. When the eigenvector conditioning exceeds
    ``condition_threshold`` the monodromy is treated as defective: a
    :class:`DefectiveMonodromyWarning` is issued and ``c`` falls back to the
    Schur bound ``max(1, ||N||)**(n-1)`` with ``N`` the strictly upper part
    of the Schur form of ``Y``.
    """
    tau = B.tau
    d = B.dim
    sol = _integrate(B, t0, t0 + tau, dense=True)
    M = sol.y[:, -1].reshape(d, d)

    mult, V0 = np.linalg.eig(M)
    with np.errstate(divide="ignore"):
        exps = np.log(mult.astype(complex)) / tau
    stable = bool(np.all(np.abs(mult) < 1.0))
    lam = float(np.max(exps.real))
    Y0 = linalg.logm(M.astype(complex), disp=False)[0] / tau

    def P_at(s):
        if s <= t0:
            return np.eye(d)
        return sol.sol(s).reshape(d, d)

    # c over u in [0, tau): Y(t0 - u) = Y(t0 + tau - u) = P Y0 P^-1
    us = np.arange(n_c_samples) * (tau / n_c_samples)
    conds = []
    Ps_c = [P_at(t0 + tau - u) if u > 0 else M for u in us]
    V0n = _unit_columns(V0)
    for P in Ps_c:
        conds.append(np.linalg.cond(_unit_columns(P @ V0n)))
    max_cond = float(np.max(conds))
    defective = not np.isfinite(max_cond) or max_cond > condition_threshold
    if defective:
        warnings.warn(
            f"near-defective monodromy (eigenvector condition {max_cond:.3g}); "
            "using Schur-based bound constant",
            DefectiveMonodromyWarning,
            stacklevel=2,
        )
        cvals = []
        for P in Ps_c:
            try:
                Y = P @ Y0 @ np.linalg.inv(P)
            except np.linalg.LinAlgError:
                cvals.append(np.inf)       # P numerically singular: no finite constant
                continue
            T, _ = linalg.schur(Y, output="complex")
            nrm = np.linalg.norm(np.triu(T, 1), 2)
            cvals.append(max(1.0, nrm) ** (d - 1))
        c = float(max(cvals))
    else:
        c = max_cond

    ts = np.linspace(t0, t0 + tau, n_x_samples)
    Ps = [P_at(s) for s in ts]
    try:
        Pinv = [np.linalg.inv(P) for P in Ps]
    except np.linalg.LinAlgError:
        Pinv = None
    m_X = 0.0 if Pinv is not None else np.inf
    for i, ti in enumerate(ts if Pinv is not None else ()):
        for j, tj in enumerate(ts):
            X = Ps[i] @ linalg.expm(-(ti - tj) * Y0) @ Pinv[j]
            m_X = max(m_X, np.linalg.norm(X, 2))

    return FloquetReport(
        monodromy=M,
        multipliers=mult,
        exponents=exps,
        stable=stable,
        c=c,
        m_X=float(m_X),
        lambda_max=lam,
        n=d,
        tau=tau,
        t0=float(t0),
        defective=defective,
        max_condition=max_cond,
    )


def periodicity_error_bound(report: FloquetReport, x0_norm, g_max, elapsed):
    """Upper bound on ``||x(t+tau) - x(t)||`` after ``elapsed = t - t0``.

    The lemma behind it needs ``elapsed > 1`` in the caller's time units.
    """
    if not report.stable:
        raise InstabilityError("periodicity bound requires a stable system",
                               context="asymptotic periodicity bound")
    if elapsed <= 1:
        raise ValueError("periodicity bound requires t - t0 > 1")
    n, tau = report.n, report.tau
    return float(
        np.exp(report.lambda_max * elapsed) * report.m_X * report.c * n
        * (elapsed + tau) ** (n - 1) * (2.0 * x0_norm + tau * g_max)
    )


def pointwise_stable(B: PeriodicMatrixFunction, samples=64):
    """Sufficient test: every eigenvalue of B(t) has negative real part."""
    ts = np.arange(samples) * (B.tau / samples)
    return bool(all(np.max(np.linalg.eigvals(B(t)).real) < 0 for t in ts))


def align_exponents(a, b, tau):
    """Distance between two exponent sets modulo the branch ``2 pi i/tau``."""
    a = np.asarray(a, dtype=complex)
    b = list(np.asarray(b, dtype=complex))
    width = 2.0 * np.pi / tau
    worst = 0.0
    for z in a:
        dists = []
        for w in b:
            dim = (z.imag - w.imag) / width
            dim = (dim - np.round(dim)) * width
            dists.append(abs(complex(z.real - w.real, dim)))
        k = int(np.argmin(dists))
        worst = max(worst, dists[k])
        b.pop(k)
    return worst
