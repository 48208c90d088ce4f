"""Frequency-domain gain and noise analysis.

Eliminating the filter state turns the model into an exact three-term
recursion between the sidebands ``x(nu + 2 k omega)``::

    alpha(nu_k) x_k + conj(beta(-nu_k)) x_{k-1} + beta(nu_k) x_{k+1} = chi(nu_k) r_k

with ``nu_k = nu + 2 k omega``. Truncating at ``|k| <= K`` and inverting gives
transfer functions that converge quickly in ``K``; ``K = 1`` is the classic
perturbative closed form.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import SingularThreshold
from .model import DriveSignal, ResonatorParams, amp_db, db, susceptibility

PIVOT_FLOOR = 1e-300
LATTICE_RTOL = 1e-10
K_MAX = 60


def _chi(p: ResonatorParams, nu):
    return 1.0 / (p.omega0 ** 2 - nu * nu - 1j * p.gamma * nu)


def _alpha(p: ResonatorParams, nu):
    w, tau = p.omega, p.tau
    return 1.0 + 0.5j * p.eta * _chi(p, nu) * (
        1.0 / (1.0 - 1j * (nu + w) * tau) - 1.0 / (1.0 - 1j * (nu - w) * tau))


def _beta(p: ResonatorParams, nu):
    return 0.5j * _chi(p, nu) * (p.Fp + p.eta / (1.0 - 1j * (nu + p.omega) * p.tau))


def alpha_beta(params: ResonatorParams, nu):
    """Coefficients of the sideband recursion at ``nu`` (scalar or array)."""
    nu = np.asarray(nu, dtype=float)
    a, b = _alpha(params, nu), _beta(params, nu)
    if a.ndim == 0:
        return complex(a), complex(b)
    return a, b


@dataclass
class GreensTriplet:
    """Transfer functions from the forces at ``nu``, ``nu - 2w`` and ``nu + 2w`` to ``x(nu)``.

    ``row`` holds every lattice entry ``G_j`` for ``j = -K..K`` (last axis),
    so ``row[..., K] == g0``, ``row[..., K - 1] == gplus`` and
    ``row[..., K + 1] == gminus``.
    """

    g0: complex | np.ndarray
    gplus: complex | np.ndarray
    gminus: complex | np.ndarray
    order: int
    row: np.ndarray | None = field(default=None, repr=False)

    def power(self, three_term: bool = False):
        """``sum |G_j|^2`` over all lattice orders, or over the three main terms."""
        if three_term or self.row is None:
            return np.abs(self.g0) ** 2 + np.abs(self.gplus) ** 2 + np.abs(self.gminus) ** 2
        return (np.abs(self.row) ** 2).sum(axis=-1)


def _scalarize(x):
    return complex(x) if np.ndim(x) == 0 else x


def greens_perturbative(params: ResonatorParams, nu) -> GreensTriplet:
    p = params
    nu = np.asarray(nu, dtype=float)
    w2 = 2.0 * p.omega
    a0 = _alpha(p, nu)
    am, ap = _alpha(p, nu - w2), _alpha(p, nu + w2)
    bc = np.conj(_beta(p, -nu))
    b0 = _beta(p, nu)
    den = a0 - bc * _beta(p, nu - w2) / am - b0 * np.conj(_beta(p, -nu - w2)) / ap
    if np.any(np.abs(den) < PIVOT_FLOOR) or not np.all(np.isfinite(den)):
        raise SingularThreshold("perturbative denominator vanishes")
    g0 = _chi(p, nu) / den
    gp = -bc * _chi(p, nu - w2) / (am * den)
    gm = -b0 * _chi(p, nu + w2) / (ap * den)
    return GreensTriplet(_scalarize(g0), _scalarize(gp), _scalarize(gm), order=1)


def _lattice_row(p: ResonatorParams, nu: np.ndarray, K: int) -> np.ndarray:
    """Row ``k = 0`` of the inverse lattice operator times ``chi(nu_j)``.

    Solves ``M^T y = e_0`` by Thomas elimination vectorized over ``nu``.
    Returns shape ``nu.shape + (2K + 1,)``.
    """
    ks = np.arange(-K, K + 1)
    nuk = nu[..., None] + 2.0 * p.omega * ks
    n = ks.size
    diag = _alpha(p, nuk)
    # M[k, k-1] = conj(beta(-nu_k)),  M[k, k+1] = beta(nu_k)
    lower_M = np.conj(_beta(p, -nuk))
    upper_M = _beta(p, nuk)
    # transpose: sub-diagonal of M^T is M[k-1, k] = upper_M[k-1]
    sub = upper_M[..., :-1]
    sup = lower_M[..., 1:]
    rhs = np.zeros_like(diag)
    rhs[..., K] = 1.0
    c = np.empty_like(diag)
    d = np.empty_like(diag)
    piv = diag[..., 0]
    _check_pivot(piv)
    c[..., 0] = sup[..., 0] / piv if n > 1 else 0.0
    d[..., 0] = rhs[..., 0] / piv
    for i in range(1, n):
        piv = diag[..., i] - sub[..., i - 1] * c[..., i - 1]
        _check_pivot(piv)
        if i < n - 1:
            c[..., i] = sup[..., i] / piv
        d[..., i] = (rhs[..., i] - sub[..., i - 1] * d[..., i - 1]) / piv
    y = np.empty_like(diag)
    y[..., -1] = d[..., -1]
    for i in range(n - 2, -1, -1):
        y[..., i] = d[..., i] - c[..., i] * y[..., i + 1]
    return y * _chi(p, nuk)


def _check_pivot(piv):
    if np.any(~(np.abs(piv) >= PIVOT_FLOOR)):
        raise SingularThreshold("lattice elimination hit a vanishing pivot")


def _triplet(row, K):
    return (_scalarize(row[..., K]), _scalarize(row[..., K - 1]), _scalarize(row[..., K + 1]))


def greens_lattice(params: ResonatorParams, nu, K: int | None = None) -> GreensTriplet:
    """Exact Green's functions by lattice inversion.

    With ``K=None`` the truncation grows in steps of two until every returned
    entry changes by less than ``1e-10`` relative; ``order`` reports the
    ``K`` used. A fixed ``K >= 1`` is used as given.
    """
    nu_arr = np.asarray(nu, dtype=float)
    if K is not None:
        if K < 1:
            raise ValueError("K must be at least 1")
        row = _lattice_row(params, nu_arr, int(K))
        return GreensTriplet(*_triplet(row, K), order=int(K), row=row)
    k = 2
    row = _lattice_row(params, nu_arr, k)
    while True:
        k2 = k + 2
        row2 = _lattice_row(params, nu_arr, k2)
        old = np.stack(_triplet_arr(row, k), axis=-1)
        new = np.stack(_triplet_arr(row2, k2), axis=-1)
        scale = np.maximum(np.abs(new), 1e-12 * np.abs(new[..., :1]))
        change = np.abs(new - old)
        if np.all(change <= LATTICE_RTOL * scale) or k2 >= K_MAX:
            return GreensTriplet(*_triplet(row2, k2), order=k2, row=row2)
        k, row = k2, row2


def _triplet_arr(row, K):
    return row[..., K], row[..., K - 1], row[..., K + 1]


def greens(params: ResonatorParams, nu, method: str = "lattice") -> GreensTriplet:
    if method == "lattice":
        return greens_lattice(params, nu)
    if method == "perturbative":
        return greens_perturbative(params, nu)
    raise ValueError(f"unknown method {method!r}")


def nsd(params: ResonatorParams, D: float, nu, method: str = "lattice",
        three_term: bool = False):
    """Displacement noise spectral density ``S_N(nu)``.

    The lattice method sums every converged order unless ``three_term`` is
    set; the perturbative method always has three terms.
    """
    G = greens(params, nu, method)
    S = 2.0 * D * G.power(three_term)
    return float(S) if np.ndim(S) == 0 else S


def nsd_lockin(params: ResonatorParams, D: float, nu, method: str = "lattice"):
    """Spectral densities ``(S_XL, S_YL)`` of the two filtered lock-in outputs."""
    p = params
    nu = np.asarray(nu, dtype=float)
    w = p.omega
    Gm = greens(p, nu - w, method)
    Gp = greens(p, nu + w, method)
    filt = 1.0 + (p.tau * nu) ** 2
    a1, a2 = Gm.g0, Gp.gplus
    b1, b2 = Gp.g0, Gm.gminus
    SX = 0.5 * D * (np.abs(a1 + a2) ** 2 + np.abs(b1 + b2) ** 2) / filt
    SY = 0.5 * D * (np.abs(a1 - a2) ** 2 + np.abs(b1 - b2) ** 2) / filt
    if SX.ndim == 0:
        return float(SX), float(SY)
    return SX, SY


@dataclass(frozen=True)
class QuadratureStats:
    sigma_c2: float
    sigma_s2: float
    sigma_cs: float
    sigma_plus2: float
    sigma_minus2: float
    angle: float
    sigma0_2: float = math.nan  # zero-pump, zero-feedback reference

    @classmethod
    def from_covariance(cls, c2, s2, cs, sigma0_2=math.nan) -> "QuadratureStats":
        mean = 0.5 * (c2 + s2)
        rad = math.hypot(0.5 * (c2 - s2), cs)
        return cls(float(c2), float(s2), float(cs), mean + rad, mean - rad,
                   0.5 * math.atan2(2.0 * cs, c2 - s2), float(sigma0_2))

    @property
    def determinant(self) -> float:
        return self.sigma_c2 * self.sigma_s2 - self.sigma_cs ** 2

    def db(self, convention: str = "variance"):
        """``(plus, minus)`` relative to ``sigma0_2`` in decibels.

        ``variance``: 10 log10 of the variance ratio. ``amplitude``: 20 log10
        of the standard-deviation ratio (numerically identical).
        ``std10``: 10 log10 of the standard-deviation ratio.
        """
        rp, rm = self.sigma_plus2 / self.sigma0_2, self.sigma_minus2 / self.sigma0_2
        if convention == "variance":
            return float(db(rp)), float(db(rm))
        if convention == "amplitude":
            return float(amp_db(math.sqrt(rp))), float(amp_db(math.sqrt(rm)))
        if convention == "std10":
            return float(db(math.sqrt(rp))), float(db(math.sqrt(rm)))
        raise ValueError(f"unknown convention {convention!r}")


def _simplified_pair(p: ResonatorParams):
    w = p.omega
    chi = _chi(p, w)
    a = _alpha(p, w)
    bm = _beta(p, -w)
    den = abs(a) ** 2 - abs(bm) ** 2
    if abs(den) < PIVOT_FLOOR:
        raise SingularThreshold("simplified denominator vanishes")
    return np.conj(a) * chi / den, -np.conj(bm) * np.conj(chi) / den


def quadrature_covariance(params: ResonatorParams, D: float,
                          method: str = "lattice") -> QuadratureStats:
    """Cosine/sine quadrature statistics of ``x`` at ``omega``.

    ``method`` is ``lattice``, ``perturbative`` or ``simplified`` (the
    single-site forms that drop the ``nu -/+ 2 omega`` corrections).
    """
    p = params
    w = p.omega
    if method == "simplified":
        g0, gp = _simplified_pair(p)
    else:
        G = greens(p, w, method)
        g0, gp = G.g0, G.gplus
    base = abs(g0) ** 2 + abs(gp) ** 2
    cross = g0 * gp
    c2 = 2.0 * math.pi * D * (base + 2.0 * cross.real)
    s2 = 2.0 * math.pi * D * (base - 2.0 * cross.real)
    cs = 4.0 * math.pi * D * cross.imag
    s0 = 2.0 * math.pi * D * abs(_chi(p, w)) ** 2
    return QuadratureStats.from_covariance(c2, s2, cs, s0)


def simplification_gap(params: ResonatorParams, D: float = 1.0) -> tuple[float, float]:
    """Difference in dB (simplified minus lattice) for ``sigma_plus2`` and ``sigma_minus2``."""
    a = quadrature_covariance(params, D, "simplified")
    b = quadrature_covariance(params, D, "lattice")
    return (float(db(a.sigma_plus2 / b.sigma_plus2)), float(db(a.sigma_minus2 / b.sigma_minus2)))


def gain_ft(params: ResonatorParams, phi0, method: str = "lattice"):
    """Phase-dependent gain ``|G0(w) + G+(w) e^{2 i phi0}| / |chi(w)|``."""
    p = params
    G = greens(p, p.omega, method)
    phi0 = np.asarray(phi0, dtype=float)
    g = np.abs(G.g0 + G.gplus * np.exp(2j * phi0)) / abs(_chi(p, p.omega))
    return g if g.ndim else float(g)


def gain_extrema_ft(params: ResonatorParams, method: str = "lattice"):
    p = params
    G = greens(p, p.omega, method)
    c = abs(_chi(p, p.omega))
    a, b = abs(G.g0), abs(G.gplus)
    return abs(a - b) / c, (a + b) / c


def envelope(params: ResonatorParams, drive: DriveSignal, t, method: str = "lattice"):
    """Upper and lower envelopes of the steady response to a detuned signal."""
    p = params
    t = np.asarray(t, dtype=float)
    d = drive.delta(p)
    g0 = greens(p, drive.omega_s, method).g0
    gp = greens(p, drive.idler(p), method).gplus
    e = np.exp(1j * (drive.phi0 + d * t))
    amp = drive.Fs * np.abs(g0 / e + gp * e)
    return amp, -amp


def _ratio_points(p: ResonatorParams):
    w = p.omega
    pts = {p.omega0, w, 2 * w + p.omega0, 2 * w - p.omega0}
    for off in (1e-3, 3e-3, 1e-2, 3e-2, 5e-2, 7e-2, 0.1, 0.2):
        pts.update({w - off, w + off})
    return sorted(x for x in pts if 0.0 < x < 4.0 * w)


def effective_temperature_ratio(params: ResonatorParams, D: float = 1.0,
                                method: str = "lattice", epsrel: float = 1e-6) -> float:
    """Integrated ``S_N`` over ``[0, 4 omega]`` relative to the bare oscillator."""
    p = params
    ref = p.with_(Fp=0.0, eta=0.0)
    K = None
    if method == "lattice":
        probe = np.array([0.0, p.omega - 0.07, p.omega, p.omega + 0.07, 4.0 * p.omega])
        K = greens_lattice(p, probe).order

    def s(nu):
        if K is None:
            G = greens_perturbative(p, nu)
        else:
            G = greens_lattice(p, nu, K)
        return 2.0 * D * float(G.power())

    pts = _ratio_points(p)
    b = 4.0 * p.omega
    num = quad(s, 0.0, b, points=pts, limit=4000, epsabs=0.0, epsrel=epsrel)[0]
    den = quad(lambda nu: 2.0 * D * abs(_chi(ref, nu)) ** 2, 0.0, b, points=pts,
               limit=4000, epsabs=0.0, epsrel=epsrel)[0]
    return num / den


@dataclass
class SpectrumSeries:
    nu_grid: np.ndarray
    values: dict

    def __post_init__(self):
        self.nu_grid = np.asarray(self.nu_grid, dtype=float)
        if self.nu_grid.ndim != 1 or np.any(np.diff(self.nu_grid) <= 0):
            raise ValueError("nu_grid must be strictly increasing")
        for name, v in self.values.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.nu_grid.shape or np.any(v < 0):
                raise ValueError(f"channel {name} must be non-negative on the grid")
            self.values[name] = v


def spectrum(params: ResonatorParams, D: float, nu_grid, method: str = "lattice",
             three_term: bool = False, threads: int = 1, chunk: int = 512) -> SpectrumSeries:
    """``S_N``, ``S_XL`` and ``S_YL`` on a grid, evaluated in chunks.

    Chunks may run on a thread pool; results are assembled in grid order.
    """
    nu = np.asarray(nu_grid, dtype=float)
    pieces = [nu[i:i + chunk] for i in range(0, nu.size, chunk)]

    def one(part):
        SN = nsd(params, D, part, method, three_term)
        SX, SY = nsd_lockin(params, D, part, method)
        return np.atleast_1d(SN), np.atleast_1d(SX), np.atleast_1d(SY)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one, pieces))
    else:
        parts = [one(x) for x in pieces]
    cols = [np.concatenate([q[i] for q in parts]) if parts else np.array([]) for i in range(3)]
    return SpectrumSeries(nu, {"S_N": cols[0], "S_XL": cols[1], "S_YL": cols[2]})
