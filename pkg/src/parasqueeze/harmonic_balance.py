"""Harmonic-balance analysis: stationary response, saddle-node and Hopf lines.

The stationary response to a signal at ``omega`` is sought as
``x = (A e^{-i w t} + c.c.) / 2``; the filter output then carries a DC part and
a ``2w`` ripple. At a Hopf point the ansatz is the sideband pair
``x = (A e^{-i(w-D)t} + B e^{-i(w+D)t} + c.c.) / 2``, ``z = (C e^{-iDt} + c.c.) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NoRealRoot, NotOnHopfLine, SingularThreshold
from .model import DriveSignal, ResonatorParams, susceptibility
from .slowflow import threshold_avg

DET_TOL = 1e-12  # relative to |bracket|^2


@dataclass(frozen=True)
class HbmResponse:
    A_x: complex
    detM: float
    A_x_conj_row: complex  # second row of the solve, should equal conj(A_x)


@dataclass(frozen=True)
class HopfPoint:
    Fp: float
    Delta: float
    residual: float
    iterations: int = 0


@dataclass(frozen=True)
class HopfModeShape:
    A: complex
    B: complex
    C: complex
    det: float


def feedback_bracket(params: ResonatorParams, omega: float | None = None) -> complex:
    """``1 - eta chi(w) w tau / (1 - 2 i w tau)``, the diagonal HBM entry."""
    w = params.omega if omega is None else omega
    chi = susceptibility(params, w)
    return 1.0 - params.eta * chi * w * params.tau / (1.0 - 2j * w * params.tau)


def detM(params: ResonatorParams, omega: float | None = None) -> float:
    """Characteristic value of the 2x2 harmonic-balance system; zero on threshold."""
    w = params.omega if omega is None else omega
    chi = susceptibility(params, w)
    m = feedback_bracket(params, w)
    return abs(m) ** 2 - abs(chi) ** 2 * (params.Fp + params.eta) ** 2 / 4.0


def hbm_matrix(params: ResonatorParams) -> np.ndarray:
    p = params
    chi = susceptibility(p, p.omega)
    m = feedback_bracket(p)
    P = p.Fp + p.eta
    return np.array([[m, -0.5j * chi * P], [0.5j * np.conj(chi) * P, np.conj(m)]])


def hbm_response(params: ResonatorParams, drive: DriveSignal) -> HbmResponse:
    """Complex amplitude of the ``e^{-i w t}`` component for a signal at ``w``.

    ``drive.omega_s`` is taken to equal ``params.omega``; only ``Fs`` and
    ``phi0`` are used.
    """
    p = params
    chi = susceptibility(p, p.omega)
    m = feedback_bracket(p)
    P = p.Fp + p.eta
    d = abs(m) ** 2 - abs(chi) ** 2 * P ** 2 / 4.0
    if abs(d) < DET_TOL * abs(m) ** 2:
        raise SingularThreshold(f"detM={d:.3e} on the instability line")
    e = np.exp(-1j * drive.phi0)
    rhs = drive.Fs * np.array([chi * e, np.conj(chi) * np.conj(e)])
    adj = np.array([[np.conj(m), 0.5j * chi * P], [-0.5j * np.conj(chi) * P, m]])
    A, A_conj = adj @ rhs / d
    return HbmResponse(A_x=complex(A), detM=float(d), A_x_conj_row=complex(A_conj))


def gain_hbm(params: ResonatorParams, phi0):
    """``|A_x| / (|chi(w)| Fs)`` for scalar or array ``phi0``."""
    p = params
    chi = susceptibility(p, p.omega)
    m = feedback_bracket(p)
    P = p.Fp + p.eta
    d = abs(m) ** 2 - abs(chi) ** 2 * P ** 2 / 4.0
    if abs(d) < DET_TOL * abs(m) ** 2:
        raise SingularThreshold(f"detM={d:.3e} on the instability line")
    phi0 = np.asarray(phi0, dtype=float)
    A = chi * (np.conj(m) * np.exp(-1j * phi0)
               + 0.5j * np.conj(chi) * P * np.exp(1j * phi0)) / d
    G = np.abs(A) / abs(chi)
    return G if G.ndim else float(G)


def gain_extrema_hbm(params: ResonatorParams):
    """``(Gmin, Gmax)``; ``Gmax`` is ``inf`` exactly on the threshold."""
    p = params
    chi = abs(susceptibility(p, p.omega))
    m = abs(feedback_bracket(p))
    c = 0.5 * chi * abs(p.Fp + p.eta)
    gap = abs(m - c)
    return 1.0 / (m + c), (math.inf if gap < DET_TOL * m else 1.0 / gap)


def threshold_hbm(params: ResonatorParams, omega: float | None = None):
    """Pump amplitudes where ``detM`` vanishes, sorted ascending.

    ``detM`` is quadratic in ``Fp`` with an Fp-free feedback bracket, so the
    roots are ``-eta -/+ 2 |bracket| / |chi|``.
    """
    w = params.omega if omega is None else omega
    chi = abs(susceptibility(params, w))
    m = abs(feedback_bracket(params, w))
    # (Fp + eta)^2 = 4 m^2 / chi^2
    disc = 4.0 * m * m / (chi * chi)
    if not math.isfinite(disc) or disc < 0.0:
        raise NoRealRoot(f"no real threshold at omega={w}")
    r = math.sqrt(disc)
    return -params.eta - r, -params.eta + r


# --- Hopf line -------------------------------------------------------------

def _inv_chi_products(p: ResonatorParams, Delta: float):
    """Real and imaginary parts of ``1 / (chi(w - D) chi*(w + D))``.

    The imaginary part is returned divided by ``Delta``; the quotient is an
    exact polynomial so no small-Delta limit is needed.
    """
    w, g = p.omega, p.gamma
    a = p.omega0 ** 2 - (w - Delta) ** 2
    b = p.omega0 ** 2 - (w + Delta) ** 2
    re = a * b + g * g * (w - Delta) * (w + Delta)
    im_over_delta = g * (4.0 * w * w + a + b)
    return re, im_over_delta


def hopf_residual(params: ResonatorParams, Fp: float, Delta: float) -> np.ndarray:
    """Real and imaginary parts of the simplified characteristic equation."""
    p = params
    eta, w, g, tau = p.eta, p.omega, p.gamma, p.tau
    re, im_d = _inv_chi_products(p, Delta)
    reW, imW = 4.0 * re, 4.0 * im_d * Delta
    e1 = Fp * Fp + 2 * eta * Fp - 4 * eta * w * g - reW + tau * Delta * imW
    e2 = Fp * Fp - 8 * eta * w / tau - 4.0 * im_d / tau - reW
    return np.array([e1, e2])


def characteristic_product(params: ResonatorParams, Fp: float, Delta: float) -> complex:
    """Unsimplified determinant of the sideband system for (A, B*)."""
    M = sideband_matrix(params, Fp, Delta)
    return complex(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])


def sideband_matrix(params: ResonatorParams, Fp: float, Delta: float) -> np.ndarray:
    p = params
    s = 1.0 + 1j * p.tau * Delta
    chi_m = susceptibility(p, p.omega - Delta)
    chi_pc = np.conj(susceptibility(p, p.omega + Delta))
    P = Fp + p.eta / s
    return np.array([
        [1.0 - 0.5j * p.eta * chi_m / s, -0.5j * chi_m * P],
        [0.5j * chi_pc * P, 1.0 + 0.5j * p.eta * chi_pc / s],
    ])


def _newton(params, Fp, Delta, tol, max_iter, rel_step):
    x = np.array([Fp, Delta], dtype=float)
    f = hopf_residual(params, *x)
    norm = float(np.linalg.norm(f))
    for it in range(max_iter):
        if norm < tol:
            return x, norm, it
        J = np.empty((2, 2))
        for k in range(2):
            h = rel_step * max(abs(x[k]), 1e-6)
            xp = x.copy()
            xp[k] += h
            J[:, k] = (hopf_residual(params, *xp) - f) / h
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(21):
            trial = x + lam * step
            ft = hopf_residual(params, *trial)
            nt = float(np.linalg.norm(ft))
            if np.isfinite(nt) and nt < norm:
                break
            lam *= 0.5
        else:
            break
        x, f, norm = trial, ft, nt
    if norm < tol:
        return x, norm, max_iter
    raise NoConvergence(f"Hopf Newton stalled at residual {norm:.3e}")


def default_hopf_guesses(params: ResonatorParams):
    low, _ = threshold_avg(params)
    for scale in (0.02, 0.01, 0.05):
        for d in np.logspace(-3, -1, 9):
            yield low * scale, d * params.omega


def hopf_line(params: ResonatorParams, guess=None, tol: float = 1e-10,
              max_iter: int = 100, rel_step: float = 1e-7) -> HopfPoint:
    """Solve the two real Hopf conditions for ``(Fp, Delta)``.

    ``params.Fp`` is ignored. With ``guess=None`` a coarse grid of starting
    points is tried and the first converged solution with ``Delta > 0`` is
    returned.
    """
    guesses = [guess] if guess is not None else default_hopf_guesses(params)
    last = None
    for g0 in guesses:
        Fp0, D0 = g0
        if not (math.isfinite(Fp0) and math.isfinite(D0)) or D0 <= 0:
            raise ValueError("guess must be finite with Delta > 0")
        try:
            x, res, it = _newton(params, Fp0, D0, tol, max_iter, rel_step)
        except NoConvergence as exc:
            last = exc
            continue
        if x[1] == 0.0:
            continue
        return HopfPoint(Fp=float(x[0]), Delta=abs(float(x[1])), residual=res, iterations=it)
    raise NoConvergence(str(last) if last else "no starting point converged")


def hopf_mode_shape(params: ResonatorParams, point: HopfPoint, tol: float = 1e-8) -> HopfModeShape:
    """Null vector (A, B, C) of the sideband system at a Hopf point, with |A| = 1."""
    M = sideband_matrix(params, point.Fp, point.Delta)
    det = abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if det > tol:
        raise NotOnHopfLine(f"sideband determinant {det:.3e} exceeds {tol:.1e}")
    row = M[0] if np.abs(M[0]).sum() >= np.abs(M[1]).sum() else M[1]
    A, Bc = -row[1], row[0]
    scale = abs(A)
    if scale == 0.0:
        A, Bc = 0.0 + 0j, 1.0 + 0j
    else:
        A, Bc = A / scale, Bc / scale
    B = np.conj(Bc)
    C = (np.conj(A) + B) / (2.0 * (1.0 - 1j * params.tau * point.Delta))
    return HopfModeShape(A=complex(A), B=complex(B), C=complex(C), det=float(det))
