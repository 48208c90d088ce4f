"""Compiled inner loops. All functions take plain floats and arrays."""
import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def fill_A(A, omega0, gamma, Fp, omega, eta, tau, t):
    s1 = math.sin(omega * t)
    A[0, 0] = 0.0
    A[0, 1] = 1.0
    A[0, 2] = 0.0
    A[1, 0] = -omega0 * omega0 + Fp * math.sin(2.0 * omega * t)
    A[1, 1] = -gamma
    A[1, 2] = 2.0 * eta * s1
    A[2, 0] = math.cos(omega * t) / tau
    A[2, 1] = 0.0
    A[2, 2] = -1.0 / tau


@njit(cache=True, nogil=True)
def matmul3(out, A, B):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=True, nogil=True)
def rk4_step_matrix(S, omega0, gamma, Fp, omega, eta, tau, t, h):
    """One RK4 step of X' = A(t) X written as X_{n+1} = S X_n."""
    A1 = np.empty((3, 3))
    A2 = np.empty((3, 3))
    A3 = np.empty((3, 3))
    fill_A(A1, omega0, gamma, Fp, omega, eta, tau, t)
    fill_A(A2, omega0, gamma, Fp, omega, eta, tau, t + 0.5 * h)
    fill_A(A3, omega0, gamma, Fp, omega, eta, tau, t + h)
    k1 = A1.copy()
    tmp = np.empty((3, 3))
    k2 = np.empty((3, 3))
    k3 = np.empty((3, 3))
    k4 = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            tmp[i, j] = 0.5 * h * k1[i, j] + (1.0 if i == j else 0.0)
    matmul3(k2, A2, tmp)
    for i in range(3):
        for j in range(3):
            tmp[i, j] = 0.5 * h * k2[i, j] + (1.0 if i == j else 0.0)
    matmul3(k3, A2, tmp)
    for i in range(3):
        for j in range(3):
            tmp[i, j] = h * k3[i, j] + (1.0 if i == j else 0.0)
    matmul3(k4, A3, tmp)
    for i in range(3):
        for j in range(3):
            S[i, j] = (1.0 if i == j else 0.0) + h / 6.0 * (
                k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])


@njit(cache=True, nogil=True)
def monodromy(omega0, gamma, Fp, omega, eta, tau, n):
    T = 2.0 * math.pi / omega
    h = T / n
    P = np.eye(3)
    S = np.empty((3, 3))
    out = np.empty((3, 3))
    for i in range(n):
        rk4_step_matrix(S, omega0, gamma, Fp, omega, eta, tau, i * h, h)
        matmul3(out, S, P)
        P[:, :] = out
    return P


@njit(cache=True, nogil=True)
def _rhs(y, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0, t, out):
    x, v, z = y[0], y[1], y[2]
    out[0] = v
    out[1] = (-gamma * v - omega0 * omega0 * x + Fp * math.sin(2.0 * omega * t) * x
              + 2.0 * eta * math.sin(omega * t) * z + Fs * math.cos(omega_s * t + phi0))
    out[2] = (math.cos(omega * t) * x - z) / tau


@njit(cache=True, nogil=True)
def integrate_rk4(y0, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0,
                  t0, dt, n, every, limit):
    """Fixed-step RK4 of the driven system.

    Returns the recorded samples (every ``every`` steps) and the index of the
    first step whose state norm exceeded ``limit`` (-1 if none). Integration
    stops at divergence; later rows are left as NaN.
    """
    n_rec = n // every + 1
    rec = np.full((n_rec, 3), np.nan)
    y = y0.copy()
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    rec[0, :] = y
    diverged = -1
    for i in range(n):
        t = t0 + i * dt
        _rhs(y, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0, t, k1)
        for j in range(3):
            tmp[j] = y[j] + 0.5 * dt * k1[j]
        _rhs(tmp, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0, t + 0.5 * dt, k2)
        for j in range(3):
            tmp[j] = y[j] + 0.5 * dt * k2[j]
        _rhs(tmp, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0, t + 0.5 * dt, k3)
        for j in range(3):
            tmp[j] = y[j] + dt * k3[j]
        _rhs(tmp, omega0, gamma, Fp, omega, eta, tau, Fs, omega_s, phi0, t + dt, k4)
        norm = 0.0
        for j in range(3):
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            norm += y[j] * y[j]
        if not (math.sqrt(norm) <= limit):
            diverged = i + 1
            break
        if (i + 1) % every == 0:
            rec[(i + 1) // every, :] = y
    return rec, diverged


@njit(cache=True, nogil=True)
def step_table(omega0, gamma, Fp, omega, eta, tau, t0, dt, step0, nsteps, omega_m):
    """Per-step RK4 propagators and lock-in references for one chunk."""
    S = np.empty((nsteps, 3, 3))
    ref = np.empty((nsteps, 2))
    for k in range(nsteps):
        t = t0 + (step0 + k) * dt
        rk4_step_matrix(S[k], omega0, gamma, Fp, omega, eta, tau, t, dt)
        ref[k, 0] = math.cos(omega_m * (t + dt))
        ref[k, 1] = math.sin(omega_m * (t + dt))
    return S, ref


@njit(cache=True, nogil=True)
def stochastic_chunk(X, filt, S, ref, step0, noise, sigma, every, rec, rec_offset,
                     a, div, limit):
    """Advance an ensemble by ``noise.shape[1]`` steps.

    X : (M, 3) states, updated in place.
    filt : (M, stages, 2) cascaded RC lock-in states (cosine, sine), updated
        in place with gain ``a = dt / tau_m``; ``stages == 0`` disables
        demodulation.
    S, ref : output of :func:`step_table` for the same steps.
    noise : (M, nsteps) standard normal draws.
    rec : (M, n_rec, 3) recording buffer or an (M, 0, 3) dummy.
    div : (M,) int64, set to the first step whose state norm exceeds ``limit``.
    """
    M = X.shape[0]
    nsteps = noise.shape[1]
    stages = filt.shape[1]
    n_rec = rec.shape[1]
    for m in range(M):
        y0, y1, y2 = X[m, 0], X[m, 1], X[m, 2]
        d = div[m]
        for k in range(nsteps):
            Sk = S[k]
            x0, x1, x2 = y0, y1, y2
            y0 = Sk[0, 0] * x0 + Sk[0, 1] * x1 + Sk[0, 2] * x2
            y1 = Sk[1, 0] * x0 + Sk[1, 1] * x1 + Sk[1, 2] * x2 + sigma * noise[m, k]
            y2 = Sk[2, 0] * x0 + Sk[2, 1] * x1 + Sk[2, 2] * x2
            i = step0 + k
            if d < 0 and not (y0 * y0 + y1 * y1 + y2 * y2 <= limit * limit):
                d = i + 1
            if stages > 0:
                inc = ref[k, 0] * y0
                ins = ref[k, 1] * y0
                for q in range(stages):
                    filt[m, q, 0] += a * (inc - filt[m, q, 0])
                    filt[m, q, 1] += a * (ins - filt[m, q, 1])
                    inc = filt[m, q, 0]
                    ins = filt[m, q, 1]
            if n_rec > 0 and (i + 1) % every == 0:
                r = (i + 1) // every - rec_offset
                if 0 <= r < n_rec:
                    rec[m, r, 0] = y0
                    rec[m, r, 1] = y1
                    rec[m, r, 2] = y2
        X[m, 0] = y0
        X[m, 1] = y1
        X[m, 2] = y2
        div[m] = d


@njit(cache=True, nogil=True)
def rc_filter(u, a, y0):
    """Explicit first-order RC update y <- y + a (u - y), starting from ``y0``."""
    y = np.empty_like(u)
    acc = y0
    y[0] = y0
    for i in range(1, u.shape[0]):
        acc += a * (u[i - 1] - acc)
        y[i] = acc
    return y


@njit(cache=True, nogil=True)
def lockin_hermite(x, v, t0, dt, omega, tau, z0, use_sin):
    """RK4 integration of z' = (ref(t) x(t) - z) / tau.

    Midpoint values of x come from the cubic Hermite interpolant built on
    (x, v) at the two ends of each step.
    """
    n = x.shape[0]
    z = np.empty(n)
    z[0] = z0
    acc = z0
    for i in range(n - 1):
        t = t0 + i * dt
        xm = 0.5 * (x[i] + x[i + 1]) + dt * (v[i] - v[i + 1]) / 8.0
        if use_sin:
            u0 = math.sin(omega * t) * x[i]
            um = math.sin(omega * (t + 0.5 * dt)) * xm
            u1 = math.sin(omega * (t + dt)) * x[i + 1]
        else:
            u0 = math.cos(omega * t) * x[i]
            um = math.cos(omega * (t + 0.5 * dt)) * xm
            u1 = math.cos(omega * (t + dt)) * x[i + 1]
        k1 = (u0 - acc) / tau
        k2 = (um - (acc + 0.5 * dt * k1)) / tau
        k3 = (um - (acc + 0.5 * dt * k2)) / tau
        k4 = (u1 - (acc + dt * k3)) / tau
        acc += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z[i + 1] = acc
    return z
