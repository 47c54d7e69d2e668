"""Frequency-domain solution of the periodically driven fluctuation dynamics.

The sideband-truncated system ``Abar(w) ubar(w) = nbar(w)`` couples the
frequencies ``w + k Omega`` for ``k = -N..N``; block ``(k, l)`` of
``Abar(w)`` is ``A_{k-l}`` off the diagonal and ``A_0 - i (w + k Omega)``
on it. With ``R(w)`` the central block-row of ``Abar(w)^{-1}``,

    Vt_n(w) = R(w) D_n R(w - n Omega)^H,   V_n = (1/2 pi) int Vt_n(w) dw,

where ``D_n`` carries ``D`` on the n-th block super-diagonal. ``R`` is
obtained by batched LU solves, never by forming an inverse.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .covariance import DiffusionMatrix, DriftSpec
from .errors import InstabilityError, QuadratureError, SingularSystemError
from .floquet import FloquetReport, floquet_analysis

# Gauss-Kronrod 7/15 rule on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
GK_WK = np.concatenate([_WK[:-1], _WK[::-1]])
GK_WG = np.zeros(15)
GK_WG[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])

_FINITE, _RIGHT, _LEFT = 0, 1, 2


@dataclass(frozen=True)
class SpectralComponents:
    V: Mapping[int, np.ndarray]
    errors: Mapping[int, float]
    N: int
    Omega: float
    hermiticity_defect: float
    window: float
    n_panels: int

    def V_at(self, t):
        """Real symmetric ``V(t) = sum_n V_n exp(i n Omega t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        acc = np.zeros((len(t), 4, 4), dtype=complex)
        for n, Vn in self.V.items():
            acc += np.exp(1j * n * self.Omega * t)[:, None, None] * Vn
        return acc

    def to_dict(self):
        return {
            "N": self.N,
            "Omega": self.Omega,
            "hermiticity_defect": self.hermiticity_defect,
            "window": self.window,
            "panels": self.n_panels,
            "components": {
                str(n): {"re": self.V[n].real.tolist(), "im": self.V[n].imag.tolist(),
                         "quadrature_error": self.errors[n]}
                for n in sorted(self.V)
            },
        }


def _base_matrix(drift: DriftSpec, N):
    L = 4 * (2 * N + 1)
    base = np.zeros((L, L), dtype=complex)
    for k in range(-N, N + 1):
        for l in range(-N, N + 1):
            A = drift.blocks.get(k - l)
            if A is not None:
                i, j = 4 * (k + N), 4 * (l + N)
                base[i:i + 4, j:j + 4] = A
    return base


def _diag_shift(N, Omega):
    return np.repeat(np.arange(-N, N + 1) * Omega, 4)


def assemble_block_matrix(drift: DriftSpec, omega, N, Omega=None):
    """``Abar(omega)`` for scalar or array ``omega`` (stacked on axis 0)."""
    Omega = drift.Omega if Omega is None else Omega
    base = _base_matrix(drift, N)
    w = np.asarray(omega, dtype=float)
    diag = _diag_shift(N, Omega)
    idx = np.arange(base.shape[0])
    out = np.broadcast_to(base, w.shape + base.shape).copy()
    out[..., idx, idx] -= 1j * (w[..., None] + diag)
    return out


def _central_rows(base, diag, N, w):
    """R(w): central 4-row block of ``Abar(w)^{-1}`` for a 1-D array ``w``."""
    L = base.shape[0]
    mats = np.broadcast_to(base.T, (len(w), L, L)).copy()
    idx = np.arange(L)
    mats[:, idx, idx] -= 1j * (w[:, None] + diag)
    rhs = np.zeros((L, 4), dtype=complex)
    rhs[4 * N: 4 * N + 4, :] = np.eye(4)
    try:
        X = np.linalg.solve(mats, np.broadcast_to(rhs, (len(w), L, 4)))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"block matrix singular near omega in [{w.min():.6g}, {w.max():.6g}]",
                                  context="truncated sideband system") from exc
    return np.swapaxes(X, 1, 2)        # (nw, 4, L)


class _Integrand:
    """Evaluates all ``Vt_n(w)``, ``|n| <= 2N``, on a batch of frequencies."""

    def __init__(self, drift: DriftSpec, D: np.ndarray, N: int):
        self.N = N
        self.Omega = drift.Omega
        self.base = _base_matrix(drift, N)
        self.diag = _diag_shift(N, drift.Omega)
        self.D = D
        self.orders = np.arange(-2 * N, 2 * N + 1)

    def __call__(self, w):
        N, Om = self.N, self.Omega
        nb = 2 * N + 1
        shifts = w[None, :] - self.orders[:, None] * Om      # (n_orders, nw)
        R = _central_rows(self.base, self.diag, N, shifts.ravel())
        R = R.reshape(len(self.orders), len(w), 4, nb, 4)
        R0 = R[2 * N]                                        # R(w), shift n=0
        RD = np.einsum("wikb,bc->wikc", R0, self.D)          # blockwise R_k D
        out = np.zeros((len(self.orders), len(w), 4, 4), dtype=complex)
        for i, n in enumerate(self.orders):
            Rn = R[i]
            lo, hi = max(0, -n), min(nb, nb - n)            # block k pairs with k+n
            if lo >= hi:
                continue
            out[i] = np.einsum("wika,wjka->wij", RD[:, :, lo:hi, :], Rn[:, :, lo + n:hi + n, :].conj())
        return out


def _panel_eval(f, a, b, kind, W):
    """Kronrod and Gauss estimates for a batch of panels."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    s = mid[:, None] + half[:, None] * GK_NODES[None, :]      # (P, 15)
    jac = np.broadcast_to(half[:, None], s.shape).copy()
    w = s.copy()
    tail = kind != _FINITE
    if np.any(tail):
        st = s[tail]
        sign = np.where(kind[tail] == _RIGHT, 1.0, -1.0)[:, None]
        w[tail] = sign * W / st
        jac[tail] = jac[tail] * W / st**2
    vals = f(w.ravel()).reshape((-1,) + s.shape + (4, 4))    # (orders, P, 15, 4, 4)
    K = np.einsum("opqij,pq->opij", vals, jac * GK_WK[None, :])
    G = np.einsum("opqij,pq->opij", vals, jac * GK_WG[None, :])
    return K, G


def _peak_grid(drift: DriftSpec, N, report: FloquetReport | None):
    lams = list(np.linalg.eigvals(drift.block(0).real))
    if report is not None:
        lams += list(report.exponents)
    centers, widths = [], []
    Om = drift.Omega
    for lam in lams:
        width = max(abs(lam.real), 1e-300)
        for k in range(-3 * N - 1, 3 * N + 2):
            # poles of R(w) sit at w = Im(lam) + k Omega; spectra are even in w
            for c in (lam.imag + k * Om, -lam.imag + k * Om):
                centers.append(c)
                widths.append(width)
    return np.array(centers), np.array(widths), max(abs(l.real) for l in lams)


def spectral_covariance(
    drift: DriftSpec,
    D: DiffusionMatrix,
    N: int = 2,
    *,
    rtol: float = 1e-8,
    max_panels: int = 40000,
    check_stability: bool = True,
    floquet: FloquetReport | None = None,
    hermiticity_tol: float = 1e-6,
) -> SpectralComponents:
    """Covariance Fourier components ``V_n`` (``|n| <= 2N``) by adaptive quadrature.

    The real line is split into ``[-W, W]`` plus two tails mapped onto
    ``(0, 1]`` by ``w = +-W/s``; panels are pre-split at the expected
    spectral peaks ``Im(lambda) + k Omega`` and refined with a global
    Gauss-Kronrod 7/15 error estimate until the summed error is below
    ``rtol * max|V_0|``.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if check_stability:
        report = floquet if floquet is not None else floquet_analysis(drift.periodic)
        if not report.stable:
            raise InstabilityError("drift is unstable; spectra diverge",
                                   context="frequency-domain covariance")
    else:
        report = floquet
    Dm = D.D if isinstance(D, DiffusionMatrix) else np.asarray(D, dtype=float)
    f = _Integrand(drift, Dm, N)

    centers, widths, wmax = _peak_grid(drift, N, report)
    W = max(abs(drift.mean_detuning), drift.omega_m) + (2 * N + 2) * drift.Omega + 40 * max(drift.kappa, wmax)
    pts = [-W, W]
    for c, g in zip(centers, widths):
        for m in (0.0, -1.0, 1.0, -4.0, 4.0, -20.0, 20.0):
            x = c + m * g
            if -W < x < W:
                pts.append(x)
    pts = np.unique(np.array(pts))
    pts = pts[np.concatenate([[True], np.diff(pts) > 1e-12 * W])]
    a = np.concatenate([pts[:-1], [0.0, 0.0]])
    b = np.concatenate([pts[1:], [1.0, 1.0]])
    kind = np.concatenate([np.full(len(pts) - 1, _FINITE), [_RIGHT, _LEFT]])

    K, G = _panel_eval(f, a, b, kind, W)
    while True:
        err = np.abs(K - G).max(axis=(0, 2, 3))
        total = K.sum(axis=1)
        scale = max(np.abs(total[2 * N]).max(), 1e-300)
        if err.sum() <= rtol * scale:
            break
        if len(a) > max_panels:
            raise QuadratureError(
                f"quadrature not converged: error {err.sum() / scale:.3g} relative with {len(a)} panels",
                context="V_n = (1/2pi) int Vt_n(w) dw",
            )
        share = rtol * scale / len(a)
        split = err > share
        cap = np.argsort(-err)[: max(1, min(int(split.sum()), 4000))]
        mask = np.zeros(len(a), dtype=bool)
        mask[cap] = True
        mid = 0.5 * (a[mask] + b[mask])
        na = np.concatenate([a[mask], mid])
        nb_ = np.concatenate([mid, b[mask]])
        nk = np.concatenate([kind[mask], kind[mask]])
        K2, G2 = _panel_eval(f, na, nb_, nk, W)
        keep = ~mask
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb_])
        kind = np.concatenate([kind[keep], nk])
        K = np.concatenate([K[:, keep], K2], axis=1)
        G = np.concatenate([G[:, keep], G2], axis=1)

    # deterministic reduction order: (kind, left endpoint)
    order = np.lexsort((a, kind))
    K, G = K[:, order], G[:, order]
    Vraw = K.sum(axis=1) / (2 * np.pi)
    errs = np.abs(K - G).sum(axis=1).max(axis=(1, 2)) / (2 * np.pi)

    orders = list(range(-2 * N, 2 * N + 1))
    V = {n: Vraw[i] for i, n in enumerate(orders)}
    scale = np.abs(V[0]).max()
    defect = 0.0
    for n in orders:
        defect = max(defect, np.abs(V[-n] - V[n].conj()).max(), np.abs(V[n] - V[n].T).max())
    defect /= max(scale, 1e-300)
    if defect > hermiticity_tol:
        raise QuadratureError(
            f"reality defect {defect:.3g} of V_n exceeds {hermiticity_tol:g}",
            context="V_{-n} = conj(V_n)",
        )
    sym = {}
    for n in orders:
        Vn = 0.5 * (V[n] + V[-n].conj())
        sym[n] = 0.5 * (Vn + Vn.T)
    sym[0] = sym[0].real.astype(complex)
    return SpectralComponents(
        V=sym,
        errors={n: float(errs[i]) for i, n in enumerate(orders)},
        N=N,
        Omega=drift.Omega,
        hermiticity_defect=float(defect),
        window=float(W),
        n_panels=len(a),
    )


def spectrum_slice(drift: DriftSpec, D: DiffusionMatrix, N: int, omegas, check_stability=True):
    """Diagonal of ``Vt_0(w)`` on ``omegas`` and the local maxima of each column.

    Returns ``(S, peaks)`` with ``S`` of shape ``(len(omegas), 4)`` ordered
    ``(S_qq, S_pp, S_xx, S_yy)`` and ``peaks`` a list of four arrays of peak
    frequencies.
    """
    if check_stability and not floquet_analysis(drift.periodic).stable:
        raise InstabilityError("drift is unstable; spectra diverge", context="spectrum slice")
    Dm = D.D if isinstance(D, DiffusionMatrix) else np.asarray(D, dtype=float)
    f = _Integrand(drift, Dm, N)
    w = np.asarray(omegas, dtype=float)
    out = []
    for chunk in np.array_split(w, max(1, len(w) // 2000)):
        vals = f(chunk)[2 * N]
        out.append(np.real(np.einsum("wii->wi", vals)))
    S = np.concatenate(out)
    peaks = []
    for col in S.T:
        idx = np.where((col[1:-1] > col[:-2]) & (col[1:-1] >= col[2:]))[0] + 1
        peaks.append(w[idx])
    return S, peaks
