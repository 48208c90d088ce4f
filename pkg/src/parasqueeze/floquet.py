"""Floquet stability of the three-dimensional periodic system.

The monodromy matrix is built by RK4 over one period ``T = 2 pi / omega``; its
eigenvalues (the Floquet multipliers) come from the characteristic cubic.
Because ``trace A(t) = -gamma - 1/tau`` is constant, the multipliers always
multiply to ``exp(-(gamma + 1/tau) T)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NoSignChange, ParasqueezeError
from .model import ResonatorParams, TWO_PI

CLASSIFY_TOL = 1e-3
BISECT_TOL = 1e-7
DEFAULT_STEPS = 2048


@dataclass(frozen=True)
class MonodromyResult:
    monodromy: np.ndarray
    multipliers: np.ndarray  # real root first, then the remaining pair
    max_modulus: float
    classification: str

    @property
    def product(self) -> complex:
        return complex(np.prod(self.multipliers))


def liouville_product(params: ResonatorParams) -> float:
    """Exact multiplier product ``exp(-2 pi (gamma + 1/tau) / omega)``."""
    return math.exp(-TWO_PI * (params.gamma + 1.0 / params.tau) / params.omega)


def _polish_real(c2, c1, c0, x):
    # Newton on x^3 - c2 x^2 + c1 x - c0; steps that do not shrink |f| are
    # rejected, since f' vanishes at a double root
    def f(y):
        return ((y - c2) * y + c1) * y - c0

    fx = f(x)
    for _ in range(3):
        df = (3 * x - 2 * c2) * x + c1
        if df == 0.0 or fx == 0.0:
            break
        y = x - fx / df
        fy = f(y)
        if abs(fy) >= abs(fx):
            break
        x, fx = y, fy
    return x


def cubic_multipliers(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of a real 3x3 matrix from its characteristic cubic.

    One real root is located by Cardano's formula (or the trigonometric form
    when all roots are real), polished by Newton, and deflated; the remaining
    pair solves a quadratic whose sum and product are fixed by the trace and
    determinant. Returns ``[real_root, r2, r3]`` with ``r3 = conj(r2)`` when
    the pair is complex.
    """
    M = np.asarray(M, dtype=float)
    c2 = float(np.trace(M))
    c1 = float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
               + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
               + M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
    c0 = float(np.linalg.det(M))
    # x = y + c2/3 gives y^3 + p y + q = 0
    p = c1 - c2 * c2 / 3.0
    q = -2.0 * c2 ** 3 / 27.0 + c2 * c1 / 3.0 - c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    shift = c2 / 3.0
    if disc > 0.0:
        sq = math.sqrt(disc)
        y = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        roots = [y + shift]
    elif p >= 0.0 or p * math.sqrt(-p) == 0.0:  # underflowed coefficients
        roots = [shift]
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [m * math.cos(theta - TWO_PI * k / 3.0) + shift for k in range(3)]
    r = max(roots, key=abs)
    r = _polish_real(c2, c1, c0, r)
    S = c2 - r
    # c0 / r is better conditioned only when r dominates the pair
    P = c1 - r * S
    if r * r > abs(P):
        P = c0 / r
    d = S * S / 4.0 - P
    if d >= 0.0:
        sq = math.sqrt(d)
        big = S / 2.0 + math.copysign(sq, S) if S != 0.0 else sq
        other = P / big if big != 0.0 else 0.0
        pair = [complex(big), complex(other)]
    else:
        sq = math.sqrt(-d)
        pair = [complex(S / 2.0, sq), complex(S / 2.0, -sq)]
    return np.array([complex(r)] + pair)


def classify(multipliers, tol: float = CLASSIFY_TOL) -> str:
    """Name the multiplier family sitting on the unit circle.

    A complex pair counts as Hopf only when it is off the real axis by more
    than ``tol`` in angle; otherwise it is treated as a real multiplier.
    Simultaneous crossings are reported joined by ``+``. Points beyond every
    crossing are ``unstable``.
    """
    mu = np.asarray(multipliers, dtype=complex)
    labels = []
    for z in mu:
        if abs(abs(z) - 1.0) >= tol:
            continue
        ang = abs(math.atan2(z.imag, z.real))
        if ang < tol:
            lab = "saddle-node"
        elif abs(ang - math.pi) < tol:
            lab = "period-doubling"
        else:
            lab = "hopf"
        if lab not in labels:
            labels.append(lab)
    if labels:
        order = ["saddle-node", "period-doubling", "hopf"]
        return "+".join(sorted(labels, key=order.index))
    if np.abs(mu).max() > 1.0:
        return "unstable"
    return "stable"


def monodromy(params: ResonatorParams, steps_per_period: int = DEFAULT_STEPS) -> MonodromyResult:
    """Fundamental matrix over one period and its Floquet multipliers."""
    if steps_per_period < 256:
        raise ValueError("steps_per_period must be at least 256")
    p = params
    Phi = _kernels.monodromy(p.omega0, p.gamma, p.Fp, p.omega, p.eta, p.tau,
                             int(steps_per_period))
    mu = cubic_multipliers(Phi)
    mod = float(np.abs(mu).max())
    return MonodromyResult(monodromy=Phi, multipliers=mu, max_modulus=mod,
                           classification=classify(mu))


@dataclass(frozen=True)
class ThresholdResult:
    omega: float
    Fp: float
    classification: str
    multipliers: np.ndarray = field(repr=False)
    error: str = ""


def threshold_ft(params: ResonatorParams, bracket, omega: float | None = None,
                 steps_per_period: int = DEFAULT_STEPS, tol: float = BISECT_TOL) -> ThresholdResult:
    """Bisect ``max|mu| - 1`` over a pump-amplitude bracket.

    ``params.Fp`` is ignored. Raises :class:`NoSignChange` when the bracket
    does not straddle a crossing.
    """
    p = params if omega is None else params.with_(omega=omega)
    lo, hi = map(float, bracket)

    def f(Fp):
        return monodromy(p.with_(Fp=Fp), steps_per_period).max_modulus - 1.0

    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        hi = lo
    elif fhi == 0.0:
        lo = hi
    elif (flo > 0) == (fhi > 0):
        raise NoSignChange(f"max|mu|-1 has the same sign at {lo} and {hi}")
    while abs(hi - lo) >= tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    Fp = 0.5 * (lo + hi)
    res = monodromy(p.with_(Fp=Fp), steps_per_period)
    return ThresholdResult(omega=p.omega, Fp=Fp, classification=res.classification,
                           multipliers=res.multipliers)


def threshold_scan(params: ResonatorParams, omega_grid, Fp_brackets,
                   steps_per_period: int = DEFAULT_STEPS, threads: int = 1):
    """Run :func:`threshold_ft` across a sorted grid of ``omega``.

    ``Fp_brackets`` is one ``(lo, hi)`` pair for every point, a sequence of
    pairs aligned with the grid, or a callable ``omega -> (lo, hi)``. Points
    without a sign change are kept with ``Fp = nan`` and the error name.
    """
    grid = np.asarray(omega_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("omega_grid must be sorted")
    if callable(Fp_brackets):
        brackets = [Fp_brackets(w) for w in grid]
    else:
        arr = np.asarray(Fp_brackets, dtype=float)
        brackets = [tuple(arr)] * len(grid) if arr.ndim == 1 else [tuple(b) for b in arr]
        if len(brackets) != len(grid):
            raise ValueError("one bracket per grid point required")

    def one(i):
        w = float(grid[i])
        try:
            return threshold_ft(params, brackets[i], omega=w, steps_per_period=steps_per_period)
        except ParasqueezeError as exc:
            return ThresholdResult(omega=w, Fp=math.nan, classification="",
                                   multipliers=np.full(3, np.nan + 0j),
                                   error=type(exc).__name__)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, range(len(grid))))
    return [one(i) for i in range(len(grid))]


def multiplier_path(params: ResonatorParams, Fp_values, steps_per_period: int = DEFAULT_STEPS):
    """Multipliers along a sequence of pump amplitudes, shape (n, 3).

    Columns are matched to the previous row by nearest neighbour so each
    column traces one continuous branch.
    """
    out = []
    prev = None
    for Fp in Fp_values:
        mu = monodromy(params.with_(Fp=float(Fp)), steps_per_period).multipliers
        if prev is not None:
            mu = _match(prev, mu)
        out.append(mu)
        prev = mu
    return np.array(out)


def _match(prev, cur):
    from itertools import permutations
    best = min(permutations(range(3)),
               key=lambda perm: sum(abs(prev[i] - cur[perm[i]]) for i in range(3)))
    return cur[list(best)]
