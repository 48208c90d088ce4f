"""Averaging-method (slow-flow) analysis of the feedback parametric amplifier.

With ``x = u cos(wt) - v sin(wt)`` and the filter state ``z`` left untouched,
first-order averaging gives an autonomous system in (u, v, z) whenever the
signal is at ``omega_s = omega``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DetunedInput, NoSignChange, NonFinite, SingularThreshold
from .model import DriveSignal, ResonatorParams, TWO_PI, susceptibility

SINGULAR_TOL = 1e-12
DETUNING_TOL = 1e-9


@dataclass(frozen=True)
class SlowState:
    u: float = 0.0
    v: float = 0.0
    z: float = 0.0

    @property
    def r(self) -> float:
        return math.hypot(self.u, self.v)

    def to_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.z])


@dataclass
class SlowFlowSeries:
    """Output of :func:`integrate_slowflow`."""

    t: np.ndarray
    states: np.ndarray  # (N, 3) columns u, v, z

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.states[:, 0], self.states[:, 1])

    def envelope(self):
        r = self.r
        return r, -r


def _rhs(p: ResonatorParams, Fs, delta, phi0, u, v, z, t):
    w = p.omega
    phi = delta * t + phi0
    du = -((0.5 * p.Fp + p.gamma * w) * u + 2.0 * p.eta * z + p.Omega * v
           - Fs * math.sin(phi)) / (2.0 * w)
    dv = (p.Omega * u + (0.5 * p.Fp - p.gamma * w) * v - Fs * math.cos(phi)) / (2.0 * w)
    dz = (0.5 * u - z) / p.tau
    return du, dv, dz


def averaged_rhs(params: ResonatorParams, drive: DriveSignal, state: SlowState,
                 t: float = 0.0) -> SlowState:
    """Time derivative of the averaged (u, v, z) system.

    The signal phase advances as ``phi(t) = delta t + phi0`` with
    ``delta = omega_s - omega``.
    """
    du, dv, dz = _rhs(params, drive.Fs, drive.delta(params), drive.phi0,
                      state.u, state.v, state.z, t)
    return SlowState(du, dv, dz)


def _denominator(p: ResonatorParams) -> float:
    w = p.omega
    return (0.5 * p.Fp + p.gamma * w + p.eta) * (0.5 * p.Fp - p.gamma * w) - p.Omega ** 2


def fixed_point(params: ResonatorParams, Fs: float, phi0: float) -> SlowState:
    """Stationary slow amplitudes for a signal exactly at ``omega``."""
    p = params
    w = p.omega
    det = _denominator(p)
    if abs(det) < SINGULAR_TOL:
        raise SingularThreshold(f"averaged denominator {det:.3e} vanishes")
    a = 0.5 * p.Fp + p.gamma * w + p.eta
    b = 0.5 * p.Fp - p.gamma * w
    s, c = math.sin(phi0), math.cos(phi0)
    u = Fs * (b * s - p.Omega * c) / det
    v = Fs * (-p.Omega * s + a * c) / det
    return SlowState(u, v, 0.5 * u)


def gain_avg(params: ResonatorParams, phi0):
    """Phase-dependent gain ``r / |chi(omega) Fs|`` in the averaging approximation.

    Accepts scalar or array ``phi0``. Raises :class:`SingularThreshold` on the
    averaged instability line.
    """
    p = params
    w, g, eta, Fp, Om = p.omega, p.gamma, p.eta, p.Fp, p.Omega
    det = _denominator(p)
    if abs(det) < SINGULAR_TOL:
        raise SingularThreshold(f"averaged denominator {det:.3e} vanishes")
    phi0 = np.asarray(phi0, dtype=float)
    num = (Om ** 2 + Fp ** 2 / 4 + g ** 2 * w ** 2 + eta ** 2 / 2
           + eta * (Fp / 2 + g * w)
           + (Fp * g * w + eta / 2 * (eta + Fp + 2 * g * w)) * np.cos(2 * phi0)
           - Om * (Fp + eta) * np.sin(2 * phi0))
    # num is a sum of squares; clip round-off below zero
    G = np.sqrt(np.maximum(num, 0.0)) / (abs(det) * abs(susceptibility(p, w)))
    return G if G.ndim else float(G)


def threshold_avg(params: ResonatorParams):
    """Both pump amplitudes at which the averaged fixed point loses existence.

    ``params.Fp`` is ignored. Returns ``(low, high)``.
    """
    p = params
    root = math.sqrt(4 * p.Omega ** 2 + (p.eta + 2 * p.gamma * p.omega) ** 2)
    return -p.eta - root, -p.eta + root


def gain_extrema_avg(params: ResonatorParams):
    """Minimum and maximum averaged gain at zero detuning.

    On the threshold the diverging extremum is returned as ``inf``.
    """
    p = params
    if abs(p.Omega) > DETUNING_TOL * p.omega0 ** 2:
        raise DetunedInput(f"Omega={p.Omega:.3e}; extrema formula holds only at omega=omega0")
    gw = p.gamma * p.omega
    g1 = _ratio(gw, abs(0.5 * p.Fp + gw + p.eta))
    g2 = _ratio(gw, abs(0.5 * p.Fp - gw))
    return min(g1, g2), max(g1, g2)


def _ratio(num, den):
    return math.inf if den < SINGULAR_TOL else num / den


def averaged_matrix(params: ResonatorParams) -> np.ndarray:
    """Linear part of the averaged flow acting on (u, v, z)."""
    p = params
    w = p.omega
    return np.array([
        [-(0.5 * p.Fp + p.gamma * w) / (2 * w), -p.Omega / (2 * w), -p.eta / w],
        [p.Omega / (2 * w), (0.5 * p.Fp - p.gamma * w) / (2 * w), 0.0],
        [0.5 / p.tau, 0.0, -1.0 / p.tau],
    ])


def spectral_abscissa(params: ResonatorParams) -> float:
    """Largest real part among the averaged-flow eigenvalues."""
    return float(np.linalg.eigvals(averaged_matrix(params)).real.max())


def hopf_avg(params: ResonatorParams, bracket) -> float:
    """Pump amplitude in ``bracket`` where the averaged flow loses stability.

    Found by Brent's method on the spectral abscissa; at ``omega = omega0``
    the result is ``-2 gamma omega - 4 omega / tau``.
    """
    def f(Fp):
        return spectral_abscissa(params.with_(Fp=Fp))

    lo, hi = map(float, bracket)
    if f(lo) * f(hi) > 0:
        raise NoSignChange(f"averaged flow keeps its stability over [{lo}, {hi}]")
    return brentq(f, lo, hi, xtol=1e-13, rtol=1e-12)


def integrate_slowflow(params: ResonatorParams, drive: DriveSignal,
                       initial: SlowState, t_span, dt: float) -> SlowFlowSeries:
    """Fixed-step RK4 integration of the averaged system.

    Parameters
    ----------
    t_span : (float, float)
        Start and end time.
    dt : float
        Step size; must resolve the fastest slow rate (50 steps per
        ``2 pi / rate``).

    Raises
    ------
    NonFinite
        If the state overflows, which happens above threshold.
    """
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise ValueError("t_span must be a finite increasing pair")
    rate = max(np.abs(np.linalg.eigvals(averaged_matrix(params))).max(),
               abs(drive.delta(params)))
    if rate > 0 and dt > TWO_PI / (50.0 * rate):
        raise ValueError(f"dt={dt} too coarse for slow rate {rate:.3e}")
    n = int(math.ceil((t1 - t0) / dt - 1e-9))
    p, Fs, delta, phi0 = params, drive.Fs, drive.delta(params), drive.phi0
    out = np.empty((n + 1, 3))
    u, v, z = initial.u, initial.v, initial.z
    out[0] = u, v, z
    t = t0
    h = dt
    for i in range(1, n + 1):
        k1 = _rhs(p, Fs, delta, phi0, u, v, z, t)
        k2 = _rhs(p, Fs, delta, phi0, u + 0.5 * h * k1[0], v + 0.5 * h * k1[1],
                  z + 0.5 * h * k1[2], t + 0.5 * h)
        k3 = _rhs(p, Fs, delta, phi0, u + 0.5 * h * k2[0], v + 0.5 * h * k2[1],
                  z + 0.5 * h * k2[2], t + 0.5 * h)
        k4 = _rhs(p, Fs, delta, phi0, u + h * k3[0], v + h * k3[1], z + h * k3[2], t + h)
        u += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        z += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t = t0 + i * h
        if not (math.isfinite(u) and math.isfinite(v) and math.isfinite(z)):
            raise NonFinite(i)
        out[i] = u, v, z
    return SlowFlowSeries(t=t0 + h * np.arange(n + 1), states=out)
