"""Shared fixtures and independent reference computations.

The oracles here integrate the model with scipy's adaptive DOP853 solver,
written out from the equations of motion rather than through the package,
so they share no code with the numba kernels or the lattice solver.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from parasqueeze.model import ResonatorParams


@pytest.fixture(scope="session")
def nominal():
    return ResonatorParams(omega0=1.0, gamma=1e-3, omega=1.0, eta=1.0, tau=100.0)


def _rhs(p, Fs=0.0, omega_s=1.0, phi0=0.0):
    w2, g, Fp, w, eta, tau = p.omega0 ** 2, p.gamma, p.Fp, p.omega, p.eta, p.tau

    def f(t, y):
        x, v, z = y
        acc = (-w2 * x - g * v + Fp * math.sin(2 * w * t) * x
               + 2 * eta * math.sin(w * t) * z + Fs * math.cos(omega_s * t + phi0))
        return [v, acc, (math.cos(w * t) * x - z) / tau]

    return f


def _rhs_matrix(p):
    w2, g, Fp, w, eta, tau = p.omega0 ** 2, p.gamma, p.Fp, p.omega, p.eta, p.tau

    def f(t, y):
        Y = y.reshape(3, 3)
        s, c = math.sin(w * t), math.cos(w * t)
        A = np.array([[0, 1, 0], [-w2 + Fp * math.sin(2 * w * t), -g, 2 * eta * s],
                      [c / tau, 0, -1 / tau]])
        return (A @ Y).ravel()

    return f


def scipy_monodromy(p, rtol=1e-12):
    T = 2 * math.pi / p.omega
    sol = solve_ivp(_rhs_matrix(p), (0, T), np.eye(3).ravel(), method="DOP853",
                    rtol=rtol, atol=1e-14)
    return sol.y[:, -1].reshape(3, 3)


def periodic_response(p, Fs, phi0, samples=512):
    """Steady periodic orbit under a drive at ``omega``; returns the complex
    amplitude of its ``omega`` Fourier component in ``x``."""
    T = 2 * math.pi / p.omega
    M = scipy_monodromy(p)
    part = solve_ivp(_rhs(p, Fs, p.omega, phi0), (0, T), np.zeros(3), method="DOP853",
                     rtol=1e-12, atol=1e-16).y[:, -1]
    y0 = np.linalg.solve(np.eye(3) - M, part)
    t = np.arange(samples) * T / samples
    sol = solve_ivp(_rhs(p, Fs, p.omega, phi0), (0, T), y0, method="DOP853", t_eval=t,
                    rtol=1e-12, atol=1e-16)
    x = sol.y[0]
    return 2.0 * np.mean(x * np.exp(-1j * p.omega * t))


def commensurate_response(p, n, m, Fs=1.0, samples_per_period=64):
    """Periodic orbit under a drive at ``nu = omega n / m``; the response repeats
    every ``m`` pump periods. Returns ``(freqs, complex line amplitudes)``."""
    T = 2 * math.pi / p.omega
    nu = p.omega * n / m
    rhs = _rhs(p, Fs, nu, 0.0)
    M = np.linalg.matrix_power(scipy_monodromy(p), m)
    part = solve_ivp(rhs, (0, m * T), np.zeros(3), method="DOP853", rtol=1e-12,
                     atol=1e-16).y[:, -1]
    y0 = np.linalg.solve(np.eye(3) - M, part)
    N = m * samples_per_period
    t = np.arange(N) * m * T / N
    x = solve_ivp(rhs, (0, m * T), y0, method="DOP853", t_eval=t, rtol=1e-12, atol=1e-16).y[0]
    X = 2.0 * np.fft.rfft(x) / N
    return 2 * math.pi * np.fft.rfftfreq(N, t[1]), X


# --- expensive runs shared by module tests and the acceptance suite ---------

COOLING_D = 3.08e-8


@pytest.fixture(scope="session")
def cooling_run(nominal):
    from parasqueeze import timedomain
    from parasqueeze.model import NoiseSpec

    p = nominal.with_(Fp=-0.02)
    t = time.perf_counter()
    ratio, spec, ref = timedomain.stochastic_temperature_ratio(p, NoiseSpec(COOLING_D, 1))
    return p, ratio, spec, ref, time.perf_counter() - t


@pytest.fixture(scope="session")
def hopf_transient(nominal):
    from parasqueeze import timedomain
    from parasqueeze.model import StateVector

    p = nominal.with_(Fp=-0.042)
    t = time.perf_counter()
    ts = timedomain.integrate_deterministic(p, None, StateVector(1, 0, 0), (0, 70000),
                                            dt=p.period / 200, record_every=10)
    return p, ts, time.perf_counter() - t
