"""Fast self-checks of the numerical invariants, run by ``parasqueeze validate``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels, floquet, freqdomain, harmonic_balance, slowflow, timedomain
from .model import DriveSignal, NoiseSpec, ResonatorParams, StateVector, susceptibility

NOMINAL = ResonatorParams(omega0=1.0, gamma=1e-3, omega=1.0, eta=1.0, tau=100.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def random_params(rng, n):
    """Draws over gamma in [1e-4, 1e-2], tau in [10, 1000], omega in [0.8, 1.2],
    Fp in [-0.05, 0.05] and eta in [0, 2]."""
    for _ in range(n):
        yield ResonatorParams(gamma=rng.uniform(1e-4, 1e-2), tau=rng.uniform(10, 1000),
                              omega=rng.uniform(0.8, 1.2), Fp=rng.uniform(-0.05, 0.05),
                              eta=rng.uniform(0, 2))


def subthreshold_params(rng, n):
    """Random parameter sets inside a conservative stable ``Fp`` window."""
    out = []
    while len(out) < n:
        p = ResonatorParams(gamma=10 ** rng.uniform(-3.5, -2), tau=10 ** rng.uniform(1, 3),
                            omega=1.0 + rng.uniform(-2e-3, 2e-3), eta=rng.uniform(0, 2))
        lo, hi = threshold_window(p)
        p = p.with_(Fp=rng.uniform(0.9 * lo, 0.9 * hi))
        out.append(p)
    return out


def threshold_window(p: ResonatorParams):
    """Conservative stable ``Fp`` interval from the HBM saddle-node root and the
    averaged Hopf condition at the same ``omega``."""
    hi = harmonic_balance.threshold_hbm(p)[1]
    lo = -2.0 * p.gamma * p.omega - 4.0 * p.omega / p.tau if p.eta > 0 else -hi
    return min(lo, 0.0), max(hi, 0.0)


def check_liouville(n=100, seed=3, rtol=1e-7):
    """Multiplier product against the trace formula over random draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in random_params(rng, n):
        r = floquet.monodromy(p, 2048)
        exact = floquet.liouville_product(p)
        worst = max(worst, abs(r.product.real - exact) / exact, abs(r.product.imag) / exact)
    return worst < rtol, f"max relative error {worst:.2e} over {n} draws"


def check_classical_limit(tol=1e-6):
    p = ResonatorParams(eta=0.0)
    p = p.with_(Fp=2 * p.gamma * p.omega)
    g_avg = slowflow.gain_extrema_avg(p)[0]
    g_hbm = harmonic_balance.gain_extrema_hbm(p)[0]
    ok = abs(g_avg - 0.5) < tol and abs(g_hbm - 0.5) < tol
    return ok, f"G_min averaging {g_avg:.12f}, HBM {g_hbm:.12f}"


def check_squeezing_baseline():
    p = NOMINAL.with_(Fp=0.0, eta=0.0)
    D = 3.08e-8
    s0 = 2 * math.pi * D * abs(susceptibility(p, p.omega)) ** 2
    out = []
    for method in ("lattice", "perturbative", "simplified"):
        q = freqdomain.quadrature_covariance(p, D, method)
        out.append(max(abs(q.sigma_c2 / s0 - 1), abs(q.sigma_s2 / s0 - 1)) < 1e-14
                   and q.sigma_cs == 0.0)
    return all(out), "sigma_c2 = sigma_s2 = 2 pi D |chi|^2, sigma_cs = 0"


def check_determinant(n=1000, seed=11):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in subthreshold_params(rng, n):
        q = freqdomain.quadrature_covariance(p, 1.0, "perturbative")
        det = q.determinant
        worst = max(worst, abs(q.sigma_plus2 * q.sigma_minus2 - det) / (q.sigma_plus2 ** 2))
    return worst < 1e-12, f"max |s+ s- - det| / s+^2 = {worst:.2e} over {n} draws"


def check_lattice_k1():
    p = NOMINAL.with_(Fp=-0.02)
    nu = np.linspace(0.2, 1.8, 401)
    a = freqdomain.greens_lattice(p, nu, 1)
    b = freqdomain.greens_perturbative(p, nu)
    err = max(np.max(np.abs(a.g0 / b.g0 - 1)), np.max(np.abs(a.gplus / b.gplus - 1)),
              np.max(np.abs(a.gminus / b.gminus - 1)))
    return err < 1e-12, f"K=1 vs closed form {err:.1e}"


def check_reality_pairing():
    p = NOMINAL.with_(Fp=0.001)
    nu = np.random.default_rng(5).uniform(-3, 3, 1000)
    a, b = freqdomain.greens_lattice(p, nu), freqdomain.greens_lattice(p, -nu)
    e1 = np.max(np.abs(b.g0 - np.conj(a.g0)) / np.abs(a.g0))
    e2 = np.max(np.abs(a.gplus - np.conj(b.gminus)) / np.abs(a.g0))
    return max(e1, e2) < 1e-10, f"pairing residual {max(e1, e2):.1e}"


def check_lattice_convergence():
    worst = 0
    for Fp in (-0.04, -0.02, 0.0, 0.0015):
        g = freqdomain.greens_lattice(NOMINAL.with_(Fp=Fp), np.linspace(0.5, 1.5, 101))
        worst = max(worst, g.order)
    return worst <= 12, f"largest converged K = {worst}"


def check_lockin_zero_frequency():
    p = NOMINAL.with_(Fp=-0.02)
    q = freqdomain.quadrature_covariance(p, 1.0)
    SX, SY = freqdomain.nsd_lockin(p, 1.0, 0.0)
    err = max(abs(SX / (q.sigma_c2 / (2 * math.pi)) - 1), abs(SY / (q.sigma_s2 / (2 * math.pi)) - 1))
    return err < 1e-12, f"S_XL(0), S_YL(0) vs sigma/(2 pi): {err:.1e}"


def check_hbm_thresholds():
    p = NOMINAL
    lo, hi = harmonic_balance.threshold_hbm(p)
    r = max(abs(harmonic_balance.detM(p.with_(Fp=lo))), abs(harmonic_balance.detM(p.with_(Fp=hi))))
    p0 = p.with_(eta=0.0, omega=1.002)
    diff = max(abs(a - b) for a, b in zip(harmonic_balance.threshold_hbm(p0), slowflow.threshold_avg(p0)))
    return r < 1e-6 and diff < 1e-12, f"detM at roots {r:.1e}, eta=0 avg/HBM gap {diff:.1e}"


def check_hopf_point():
    h = harmonic_balance.hopf_line(NOMINAL)
    shape = harmonic_balance.hopf_mode_shape(NOMINAL, h)
    det = abs(harmonic_balance.characteristic_product(NOMINAL, h.Fp, h.Delta))
    return det < 1e-8 and shape.det < 1e-8, f"Fp={h.Fp:.6f}, Delta={h.Delta:.6f}, |det|={det:.1e}"


def check_slowflow_fixed_point():
    p = NOMINAL.with_(Fp=0.001)
    fp = slowflow.fixed_point(p, 1.0, 0.7)
    d = slowflow.averaged_rhs(p, DriveSignal(1.0, p.omega, 0.7), fp)
    g = slowflow.gain_avg(p, 0.7)
    chi = abs(susceptibility(p, p.omega))
    return (max(abs(d.u), abs(d.v), abs(d.z)) < 1e-12 and abs(fp.r / chi - g) < 1e-9 * g,
            "averaged fixed point is stationary and matches the gain formula")


def check_stochastic_determinism():
    p = NOMINAL.with_(Fp=-0.02)
    a = timedomain.integrate_stochastic(p, NoiseSpec(1e-6, 42), (0, 200))
    b = timedomain.integrate_stochastic(p, NoiseSpec(1e-6, 42), (0, 200))
    c = timedomain.integrate_stochastic(p, NoiseSpec(0.0, 42), (0, 200), initial=StateVector(1, 0, 0))
    d = timedomain.integrate_deterministic(p, None, StateVector(1, 0, 0), (0, 200), dt=p.period / 1000)
    same = np.array_equal(a.states, b.states)
    gap = float(np.max(np.abs(c.states - d.states)))
    return same and gap < 1e-10, f"equal seeds identical: {same}; D=0 vs RK4 {gap:.1e}"


def check_lockin_identity():
    p = NOMINAL.with_(Fp=-0.03)
    ts = timedomain.integrate_deterministic(p, DriveSignal(1e-3, 1.0002, 0.3), StateVector(1, 0, 0),
                                            (0, 2000))
    q = timedomain.software_lockin(ts, p.omega, p.tau, "rk4")
    rms = float(np.sqrt(np.mean((q.XL - ts.states[:, 2]) ** 2)))
    return rms < 1e-6, f"filter state vs software lock-in RMS {rms:.1e}"


def check_rk4_order():
    p = NOMINAL.with_(Fp=-0.042)
    T = p.period
    ends = []
    for n in (400, 800, 1600):
        rec, _ = _kernels.integrate_rk4(np.array([1.0, 0.0, 0.0]), p.omega0, p.gamma, p.Fp,
                                        p.omega, p.eta, p.tau, 0.0, 1.0, 0.0, 0.0, T / n,
                                        n * 5, n * 5, 1e12)
        ends.append(rec[-1])
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    return abs(ratio - 16) <= 2, f"step-halving error ratio {ratio:.2f}"


def check_floquet_classes():
    sn = floquet.threshold_ft(NOMINAL, (0.0, 0.004))
    hb = floquet.threshold_ft(NOMINAL, (-0.06, 0.0))
    ok = sn.classification == "saddle-node" and hb.classification == "hopf"
    return ok, f"saddle-node at {sn.Fp:.7f}, hopf at {hb.Fp:.7f}"


CHECKS = [
    ("liouville product", check_liouville),
    ("-6 dB classical limit", check_classical_limit),
    ("squeezing baseline", check_squeezing_baseline),
    ("determinant identity", check_determinant),
    ("lattice K=1 equals closed form", check_lattice_k1),
    ("reality pairing", check_reality_pairing),
    ("lattice convergence K<=12", check_lattice_convergence),
    ("lock-in spectra at zero frequency", check_lockin_zero_frequency),
    ("HBM thresholds", check_hbm_thresholds),
    ("Hopf point and mode shape", check_hopf_point),
    ("averaged fixed point", check_slowflow_fixed_point),
    ("Floquet classification", check_floquet_classes),
    ("stochastic determinism", check_stochastic_determinism),
    ("filter state vs lock-in", check_lockin_identity),
    ("RK4 fourth order", check_rk4_order),
]


def run_all(checks=None) -> list[CheckResult]:
    results = []
    for name, fn in checks or CHECKS:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed report
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time(s)  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  "
                     f"{r.seconds:7.2f}  {r.detail}")
    return "\n".join(lines)
