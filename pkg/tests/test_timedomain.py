import math

import numpy as np
import pytest

from conftest import COOLING_D
from parasqueeze import _kernels, freqdomain as fd, harmonic_balance as hb, timedomain as td
from parasqueeze.errors import NonFinite, TooShort
from parasqueeze.model import DriveSignal, NoiseSpec, ResonatorParams, StateVector


def test_free_decay_matches_closed_form():
    p = ResonatorParams(gamma=2e-3)
    ts = td.integrate_deterministic(p, None, StateVector(1, 0, 0), (0, 500), record_every=4)
    wd = math.sqrt(1 - p.gamma ** 2 / 4)
    t = ts.t
    exact = np.exp(-p.gamma * t / 2) * (np.cos(wd * t) + p.gamma / (2 * wd) * np.sin(wd * t))
    # RK4 phase error at T/400 over ~80 periods
    assert np.max(np.abs(ts.x - exact)) < 5e-7
    assert ts.dt == pytest.approx(4 * ts.step)


def test_rk4_is_fourth_order(nominal):
    p = nominal.with_(Fp=-0.042)
    ends = []
    for n in (400, 800, 1600):
        ts = td.integrate_deterministic(p, None, StateVector(1, 0, 0), (0, 5 * p.period),
                                        dt=p.period / n)
        ends.append(ts.states[-1])
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert ratio == pytest.approx(16, abs=2)


def test_step_limits(nominal):
    with pytest.raises(ValueError):
        td.integrate_deterministic(nominal, dt=nominal.period / 100)
    with pytest.raises(ValueError):
        td.integrate_stochastic(nominal, NoiseSpec(1e-6, 0), dt=nominal.period / 100)
    with pytest.raises(ValueError):
        td.integrate_deterministic(nominal, t_span=(10, 5))


def test_divergence_is_flagged(nominal):
    ts = td.integrate_deterministic(nominal.with_(Fp=0.05), None, StateVector(1, 0, 0), (0, 2e4))
    assert ts.diverged is not None
    assert np.isnan(ts.states[-1]).all()
    assert len(ts.samples) < len(ts)


def test_envelope_bounds_driven_response(nominal):
    p = nominal.with_(Fp=0.001033)
    d = DriveSignal(1e-3, 1.00024, 0.0)
    ts = td.integrate_deterministic(p, d, None, (0, 74000), dt=p.period / 200)
    w = ts.window(60000)
    n = (len(w) - 1) // 200
    x = w.x[: n * 200].reshape(n, 200)
    tc = w.t[: n * 200].reshape(n, 200).mean(axis=1)
    up, _ = fd.envelope(p, d, tc)
    peak = np.abs(x).max(axis=1)
    assert np.max(np.abs(peak - up)) < 0.02 * up.max()
    big = up > 0.1 * up.max()
    assert np.max(np.abs(peak[big] / up[big] - 1)) < 0.02


def test_filter_state_equals_software_lockin(nominal):
    p = nominal.with_(Fp=-0.03)
    ts = td.integrate_deterministic(p, DriveSignal(1e-3, 1.0002, 0.3), StateVector(1, 0, 0),
                                    (0, 2000))
    q = td.software_lockin(ts, p.omega, p.tau, "rk4")
    assert np.sqrt(np.mean((q.XL - ts.states[:, 2]) ** 2)) < 1e-6
    # the first-order filter is only a consistent discretization
    e = td.software_lockin(ts, p.omega, p.tau, "euler")
    assert np.sqrt(np.mean((e.XL - ts.states[:, 2]) ** 2)) < 1e-3


@pytest.mark.parametrize("fn, expect", [(np.cos, (0.5, 0.0)), (np.sin, (0.0, 0.5))])
def test_lockin_quadratures(fn, expect):
    dt = 2 * math.pi / 400
    t = np.arange(200000) * dt
    x = fn(t)
    ts = td.TimeSeries(0.0, dt, np.column_stack([x, np.gradient(x, dt), 0 * x]))
    for method in ("euler", "rk4"):
        q = td.software_lockin(ts, 1.0, 100.0, method)
        # average out the 2 omega ripple of size 1/(4 omega tau)
        assert q.XL[-200:].mean() == pytest.approx(expect[0], abs=2e-3)
        assert q.YL[-200:].mean() == pytest.approx(expect[1], abs=2e-3)
    with pytest.raises(ValueError):
        td.software_lockin(ts, 1.0, 5 * dt)


def test_stochastic_reproducibility(nominal):
    p = nominal.with_(Fp=-0.02)
    a = td.integrate_stochastic(p, NoiseSpec(1e-6, 42), (0, 300))
    b = td.integrate_stochastic(p, NoiseSpec(1e-6, 42), (0, 300))
    c = td.integrate_stochastic(p, NoiseSpec(1e-6, 43), (0, 300))
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    # a realization is the same whether run alone or inside an ensemble
    many = td.integrate_stochastic(p, NoiseSpec(1e-6, 42), (0, 300), realizations=3, threads=2)
    assert np.array_equal(many[0].states, a.states)


def test_zero_noise_is_deterministic(nominal):
    p = nominal.with_(Fp=-0.02)
    s = td.integrate_stochastic(p, NoiseSpec(0.0, 1), (0, 200), initial=StateVector(1, 0, 0))
    d = td.integrate_deterministic(p, None, StateVector(1, 0, 0), (0, 200), dt=p.period / 1000)
    assert np.max(np.abs(s.states - d.states)) < 1e-10


@pytest.fixture(scope="module")
def oscillator_runs():
    p = ResonatorParams()
    D = 1e-6
    runs = td.integrate_stochastic(p, NoiseSpec(D, 5), (0, 220000), dt=p.period / 500,
                                   record_every=50, record_from=20000, realizations=16)
    return p, D, runs


@pytest.mark.slow
def test_equipartition(oscillator_runs):
    p, D, runs = oscillator_runs
    m = np.array([np.mean(r.x ** 2) for r in runs])
    exact = D / (p.gamma * p.omega0 ** 2)
    se = m.std(ddof=1) / math.sqrt(len(m))
    assert abs(m.mean() - exact) < 3 * se
    assert m.mean() == pytest.approx(exact, rel=0.03)


@pytest.mark.slow
def test_oscillator_spectrum_peak(oscillator_runs):
    # segments of 50/gamma resolve the 1/gamma line without window smoothing
    p, D, runs = oscillator_runs
    spec = td.welch_nsd(runs, int(50 / p.gamma / runs[0].dt))
    near = np.abs(spec.nu_grid - p.omega0) <= 0.5 * p.gamma
    ratio = spec.values["S_N"][near] / fd.nsd(p, D, spec.nu_grid[near])
    assert ratio.mean() == pytest.approx(1.0, rel=0.1)
    assert fd.nsd(p, D, p.omega0) == pytest.approx(2 * D / p.gamma ** 2, rel=1e-12)


def test_white_noise_density():
    D, dt = 2.5e-3, 0.01
    x = np.random.default_rng(0).normal(0, math.sqrt(2 * D / dt), 2 ** 18)
    nu, S = td.welch_density(x, dt, 1024)
    assert np.mean(S) == pytest.approx(2 * D, rel=0.02)
    assert np.max(np.abs(S / (2 * D) - 1)) < 0.1 * 3
    assert np.trapezoid(S, nu) / (2 * math.pi) == pytest.approx(np.var(x), rel=0.02)


def test_welch_too_short():
    with pytest.raises(TooShort):
        td.welch_density(np.zeros(100), 0.1, 200)


@pytest.mark.slow
def test_subthreshold_welch_matches_analytic(cooling_run):
    p, ratio, spec, *_ = cooling_run
    near = np.abs(spec.nu_grid - p.omega) <= 20 * p.gamma
    S = fd.nsd(p, COOLING_D, spec.nu_grid[near])
    err = spec.values["S_N"][near] / S - 1
    assert np.max(np.abs(err)) < 0.1


def test_hopf_sidebands_in_welch(nominal):
    p = nominal.with_(Fp=-0.0415)
    h = hb.hopf_line(nominal)
    rs = td.integrate_stochastic(p, NoiseSpec(1e-6, 3), (0, 120000), dt=p.period / 500,
                                 record_every=50, record_from=20000, realizations=4)
    spec = td.welch_nsd(rs, int(10 / p.gamma / rs[0].dt))
    nu, S = spec.nu_grid, spec.values["S_N"]
    for side in (-1, 1):
        centre = p.omega + side * h.Delta
        m = np.abs(nu - centre) < 0.01
        assert abs(nu[m][np.argmax(S[m])] - centre) <= nu[1] - nu[0]


def test_fft_peaks_on_two_tones():
    dt = 0.05
    t = np.arange(2 ** 16) * dt
    x = np.cos(0.93 * t) + 0.8 * np.cos(1.07 * t) + 0.001 * np.cos(2.0 * t)
    ts = td.TimeSeries(0.0, dt, np.column_stack([x, x, x]))
    nu, A, peaks = td.fft_peaks(ts)
    assert len(peaks) == 2
    np.testing.assert_allclose(peaks, [0.93, 1.07], atol=nu[1])


def test_quasi_periodic_sidebands(hopf_transient):
    p, ts, _ = hopf_transient
    assert ts.diverged is None
    nu, A, peaks = td.fft_peaks(ts, discard=20000)
    h = hb.hopf_line(p)
    assert len(peaks) == 2
    np.testing.assert_allclose(np.sort(peaks), [p.omega - h.Delta, p.omega + h.Delta],
                               atol=nu[1])
    # mode-shape sideband ratio against the measured line heights
    s = hb.hopf_mode_shape(p, h)
    lo, hi = (A[np.argmin(np.abs(nu - f))] for f in np.sort(peaks))
    assert hi / lo == pytest.approx(abs(s.B) / abs(s.A), rel=0.2)


def test_flat_gain_without_pump():
    # detuning gamma/20 keeps |chi(omega_s)| / |chi(omega)| within 0.05 dB
    p = ResonatorParams()
    c = td.extract_gain_phase(p, DriveSignal(1e-3, 1.00005, 0.0))
    g = c.gain_db()
    assert np.all(np.abs(g) < 0.1)
    assert c.phi.min() >= 0 and c.phi.max() < math.pi


def test_attenuation_at_every_phase(nominal):
    c = td.extract_gain_phase(nominal.with_(Fp=-0.04), DriveSignal(1e-3, 1.00024, 0.0))
    assert np.all(c.gain_db() < 0)
    assert c.gain_db().max() == pytest.approx(20 * math.log10(
        fd.gain_extrema_ft(nominal.with_(Fp=-0.04))[1]), abs=0.5)


def test_gain_sweep_preconditions(nominal):
    with pytest.raises(ValueError):
        td.extract_gain_phase(nominal, DriveSignal(1e-3, 1.0, 0.0))
    with pytest.raises(ValueError):
        td.extract_gain_phase(nominal, DriveSignal(1e-3, 1.01, 0.0))
    with pytest.raises(NonFinite):
        td.extract_gain_phase(nominal.with_(Fp=0.01), DriveSignal(1e-3, 1.0002, 0.0))


@pytest.mark.slow
def test_ensemble_cooling_near_hopf(nominal):
    r = td.ensemble_quadrature_stats(nominal.with_(Fp=-0.04), NoiseSpec(COOLING_D, 9), runs=200)
    plus, minus = r.db()
    assert plus < 0 and minus < 0
    ref = r.reference
    assert ref.db() == pytest.approx((0.0, 0.0), abs=1.0)
    with pytest.raises(ValueError):
        td.ensemble_quadrature_stats(nominal, NoiseSpec(1e-6, 0), runs=10)


def test_kernel_rc_filter_is_explicit_euler():
    u = np.random.default_rng(1).normal(size=50)
    y = _kernels.rc_filter(u, 0.1, 0.5)
    acc, out = 0.5, [0.5]
    for v in u[:-1]:
        acc += 0.1 * (v - acc)
        out.append(acc)
    np.testing.assert_allclose(y, out, rtol=1e-14)
