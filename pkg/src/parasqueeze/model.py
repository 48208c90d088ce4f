"""Parameter sets and linear building blocks of the feedback resonator.

The resonator obeys::

    x'' + gamma x' + omega0^2 x - Fp sin(2 omega t) x = 2 eta sin(omega t) z + f(t)
    z'  = (cos(omega t) x - z) / tau

where ``z`` is the output of a single-stage RC filter on the cosine channel of
a lock-in amplifier referenced at ``omega``. Mass is normalized to one and all
quantities are dimensionless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ResonatorParams:
    """Physical and feedback parameters shared by every method.

    Parameters
    ----------
    omega0 : float
        Natural angular frequency (> 0).
    gamma : float
        Dissipation coefficient (> 0).
    Fp : float
        Pump amplitude; negative values are allowed.
    omega : float
        Half the pump angular frequency, also the lock-in reference (> 0).
    eta : float
        Feedback constant, any sign.
    tau : float
        Lock-in RC time constant (> 0).
    """

    omega0: float = 1.0
    gamma: float = 1e-3
    Fp: float = 0.0
    omega: float = 1.0
    eta: float = 0.0
    tau: float = 100.0

    def __post_init__(self):
        for name in ("omega0", "gamma", "Fp", "omega", "eta", "tau"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite(omega0=self.omega0, gamma=self.gamma, Fp=self.Fp,
                      omega=self.omega, eta=self.eta, tau=self.tau)
        for name in ("omega0", "gamma", "omega", "tau"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    @property
    def Omega(self) -> float:
        """Detuning omega0**2 - omega**2."""
        return self.omega0 ** 2 - self.omega ** 2

    @property
    def period(self) -> float:
        return TWO_PI / self.omega

    def with_(self, **changes) -> "ResonatorParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {"omega0": self.omega0, "gamma": self.gamma, "Fp": self.Fp,
                "omega": self.omega, "eta": self.eta, "tau": self.tau}


@dataclass(frozen=True)
class DriveSignal:
    """AC force ``Fs cos(omega_s t + phi0)`` added to the velocity equation."""

    Fs: float = 0.0
    omega_s: float = 1.0
    phi0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "Fs", float(self.Fs))
        object.__setattr__(self, "omega_s", float(self.omega_s))
        _check_finite(Fs=self.Fs, omega_s=self.omega_s, phi0=float(self.phi0))
        if self.Fs < 0.0:
            raise ValueError("Fs must be non-negative")
        object.__setattr__(self, "phi0", float(self.phi0) % TWO_PI)

    def delta(self, params: ResonatorParams) -> float:
        """Signal detuning from half the pump frequency."""
        return self.omega_s - params.omega

    def idler(self, params: ResonatorParams) -> float:
        return params.omega - self.delta(params)

    def as_dict(self) -> dict:
        return {"Fs": self.Fs, "omega_s": self.omega_s, "phi0": self.phi0}


@dataclass(frozen=True)
class NoiseSpec:
    """White force noise with <r(t) r(t')> = 2 D delta(t - t')."""

    D: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "D", float(self.D))
        if not math.isfinite(self.D) or self.D < 0.0:
            raise ValueError("D must be finite and non-negative")
        seed = int(self.seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        object.__setattr__(self, "seed", seed)

    def as_dict(self) -> dict:
        return {"D": self.D, "seed": self.seed}


@dataclass(frozen=True)
class StateVector:
    x: float = 0.0
    xdot: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        _check_finite(x=float(self.x), xdot=float(self.xdot), z=float(self.z))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.xdot, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateVector":
        return cls(float(a[0]), float(a[1]), float(a[2]))


def susceptibility(params: ResonatorParams, nu):
    """Bare oscillator response ``1 / (omega0**2 - nu**2 - i gamma nu)``.

    Works elementwise on arrays.
    """
    nu = np.asarray(nu, dtype=float)
    out = 1.0 / (params.omega0 ** 2 - nu * nu - 1j * params.gamma * nu)
    return out if out.ndim else complex(out)


def system_matrix(params: ResonatorParams, t: float) -> np.ndarray:
    """Homogeneous state matrix A(t) acting on (x, xdot, z)."""
    w = params.omega
    return np.array([
        [0.0, 1.0, 0.0],
        [-params.omega0 ** 2 + params.Fp * math.sin(2.0 * w * t), -params.gamma,
         2.0 * params.eta * math.sin(w * t)],
        [math.cos(w * t) / params.tau, 0.0, -1.0 / params.tau],
    ])


def db(ratio):
    """Power ratio in decibels."""
    return 10.0 * np.log10(ratio)


def amp_db(ratio):
    """Amplitude ratio in decibels."""
    return 20.0 * np.log10(ratio)
