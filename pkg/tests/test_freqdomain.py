import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import commensurate_response, periodic_response
from parasqueeze import freqdomain as fd, harmonic_balance as hb
from parasqueeze.errors import SingularThreshold
from parasqueeze.model import DriveSignal, ResonatorParams, susceptibility


def test_alpha_beta_without_feedback():
    p = ResonatorParams(Fp=0.003)
    nu = np.linspace(0.1, 2.5, 9)
    a, b = fd.alpha_beta(p, nu)
    np.testing.assert_allclose(a, 1.0)
    np.testing.assert_allclose(b, 0.5j * susceptibility(p, nu) * p.Fp, rtol=1e-14)


def test_alpha_at_omega(nominal):
    chi = susceptibility(nominal, 1.0)
    a, _ = fd.alpha_beta(nominal, 1.0)
    assert a == pytest.approx(1 - 1.0 * 100 * chi / (1 - 200j), rel=1e-12)
    assert a == pytest.approx(500.99 - 2.50j, abs=5e-3)


def test_beta_at_minus_omega(nominal):
    p = nominal.with_(Fp=0.0013)
    _, b = fd.alpha_beta(p, -1.0)
    chi = susceptibility(p, 1.0)
    assert np.conj(b) == pytest.approx(-0.5j * chi * (p.Fp + p.eta), rel=1e-13)


@pytest.mark.parametrize("method", ["perturbative", "lattice"])
def test_oscillator_limit(method):
    p = ResonatorParams(omega=1.0002)
    nu = np.linspace(0.3, 1.7, 51)
    G = fd.greens(p, nu, method)
    np.testing.assert_allclose(G.g0, susceptibility(p, nu), rtol=1e-14)
    assert not np.any(G.gplus) and not np.any(G.gminus)
    S = fd.nsd(p, 2.0, nu, method)
    np.testing.assert_allclose(S, 4.0 * np.abs(susceptibility(p, nu)) ** 2, rtol=1e-14)
    assert fd.nsd(ResonatorParams(), 1.0, 1.0) == pytest.approx(2.0 / 1e-6, rel=1e-12)


def test_lattice_first_order_is_closed_form(nominal):
    p = nominal.with_(Fp=-0.02)
    nu = np.linspace(0.2, 1.8, 201)
    a, b = fd.greens_lattice(p, nu, 1), fd.greens_perturbative(p, nu)
    for x, y in ((a.g0, b.g0), (a.gplus, b.gplus), (a.gminus, b.gminus)):
        np.testing.assert_allclose(x, y, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(Fp=st.floats(-0.04, 0.0018), nu=st.lists(st.floats(-3, 3), min_size=1, max_size=20))
def test_reality_pairing(nominal, Fp, nu):
    p = nominal.with_(Fp=Fp)
    nu = np.asarray(nu)
    a, b = fd.greens_lattice(p, nu), fd.greens_lattice(p, -nu)
    scale = np.abs(a.g0)
    assert np.all(np.abs(b.g0 - np.conj(a.g0)) <= 1e-10 * scale)
    assert np.all(np.abs(a.gplus - np.conj(b.gminus)) <= 1e-10 * scale)


@pytest.mark.parametrize("Fp", [0.001, -0.02, -0.04])
def test_gain_matches_periodic_orbit(nominal, Fp):
    # independent oracle: steady periodic orbit from an adaptive integrator
    p = nominal.with_(Fp=Fp)
    chi = abs(susceptibility(p, p.omega))
    for phi in (0.0, 0.7, 2.0):
        X = periodic_response(p, 1.0, phi)
        assert abs(X) / chi == pytest.approx(fd.gain_ft(p, phi), rel=1e-8)


@pytest.mark.parametrize("Fp", [0.001, -0.02])
def test_greens_match_commensurate_orbit(nominal, Fp):
    p = nominal.with_(Fp=Fp)
    f, X = commensurate_response(p, 21, 20)
    line = {nu: abs(X[np.argmin(np.abs(f - nu))]) for nu in (1.05, 3.05)}
    assert line[1.05] == pytest.approx(abs(fd.greens_lattice(p, 1.05).g0), rel=1e-8)
    assert line[3.05] == pytest.approx(abs(fd.greens_lattice(p, 3.05).gplus), rel=1e-6)


def test_lattice_converges_quickly(nominal):
    for Fp in (-0.04, -0.02, 0.0, 0.0015):
        g = fd.greens_lattice(nominal.with_(Fp=Fp), np.linspace(0.5, 1.5, 101))
        assert g.order <= 12
        assert g.row.shape == (101, 2 * g.order + 1)
    with pytest.raises(ValueError):
        fd.greens_lattice(nominal, 1.0, K=0)


def test_perturbative_close_to_lattice_off_peaks(nominal):
    p = nominal.with_(Fp=-0.02)
    h = hb.hopf_line(p)
    nu = np.linspace(0.9, 1.1, 801)
    away = np.abs(np.abs(nu - p.omega) - h.Delta) > 0.01
    a, b = fd.greens_lattice(p, nu[away]), fd.greens_perturbative(p, nu[away])
    assert np.max(np.abs(np.abs(b.g0) / np.abs(a.g0) - 1)) < 0.01


def test_three_term_and_full_sum_agree_in_db(nominal):
    p = nominal.with_(Fp=-0.02)
    nu = np.linspace(0.85, 1.15, 301)
    full = fd.nsd(p, 1.0, nu)
    pert = fd.nsd(p, 1.0, nu, "perturbative")
    assert np.max(np.abs(10 * np.log10(full / pert))) < 0.5


def test_sideband_peaks_near_hopf(nominal):
    p = nominal.with_(Fp=-0.0415)
    h = hb.hopf_line(nominal)
    nu = np.linspace(0.9, 1.1, 20001)
    S = fd.nsd(p, 1.0, nu)
    for side in (-1, 1):
        m = np.abs(nu - (p.omega + side * h.Delta)) < 0.01
        peak = nu[m][np.argmax(S[m])]
        assert peak == pytest.approx(p.omega + side * h.Delta, abs=2e-4)


def test_lockin_spectra(nominal):
    p = ResonatorParams()
    SX, SY = fd.nsd_lockin(p, 3.0, 0.0)
    assert SX == pytest.approx(3.0 * abs(susceptibility(p, 1.0)) ** 2, rel=1e-12)
    assert SY == pytest.approx(SX, rel=1e-12)
    q = fd.quadrature_covariance(nominal.with_(Fp=-0.02), 1.0)
    SX, SY = fd.nsd_lockin(nominal.with_(Fp=-0.02), 1.0, 0.0)
    assert SX == pytest.approx(q.sigma_c2 / (2 * math.pi), rel=1e-12)
    assert 10 * math.log10(SX / SY) == pytest.approx(10 * math.log10(q.sigma_c2 / q.sigma_s2),
                                                     abs=0.1)


@pytest.mark.parametrize("method", ["lattice", "perturbative", "simplified"])
def test_squeezing_baseline(method):
    p = ResonatorParams()
    q = fd.quadrature_covariance(p, 3.08e-8, method)
    s0 = 2 * math.pi * 3.08e-8 * abs(susceptibility(p, 1.0)) ** 2
    assert q.sigma_c2 == pytest.approx(s0, rel=1e-14)
    assert q.sigma_s2 == pytest.approx(s0, rel=1e-14)
    assert q.sigma_cs == 0.0
    assert q.db() == pytest.approx((0.0, 0.0), abs=1e-12)


def _subthreshold(eta, gamma, tau, omega, frac):
    p = ResonatorParams(eta=eta, gamma=gamma, tau=tau, omega=omega)
    hi = hb.threshold_hbm(p)[1]
    lo = -2 * gamma * omega - 4 * omega / tau if eta > 0 else -hi
    return p.with_(Fp=frac * (hi if frac > 0 else -lo))


subthreshold = st.builds(_subthreshold, eta=st.floats(0, 2), gamma=st.floats(3e-4, 1e-2),
                         tau=st.floats(10, 1000), omega=st.floats(0.998, 1.002),
                         frac=st.floats(-0.9, 0.9))


@settings(max_examples=200, deadline=None)
@given(subthreshold)
def test_determinant_identity(p):
    q = fd.quadrature_covariance(p, 1.0, "perturbative")
    assert abs(q.sigma_plus2 * q.sigma_minus2 - q.determinant) <= 1e-12 * q.sigma_plus2 ** 2
    assert q.sigma_plus2 >= q.sigma_minus2 > 0


@settings(max_examples=60, deadline=None)
@given(eta=st.floats(0, 2), frac=st.floats(-0.5, 0.5))
def test_lattice_and_perturbative_variances_agree(nominal, eta, frac):
    p = nominal.with_(eta=eta)
    hi = hb.threshold_hbm(p)[1]
    p = p.with_(Fp=frac * hi)
    a = fd.quadrature_covariance(p, 1.0, "lattice").db()
    b = fd.quadrature_covariance(p, 1.0, "perturbative").db()
    assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) < 0.5


def test_db_conventions():
    q = fd.QuadratureStats.from_covariance(4.0, 0.25, 0.0, 1.0)
    assert q.db("variance") == pytest.approx((10 * math.log10(4), 10 * math.log10(0.25)))
    assert q.db("amplitude") == pytest.approx(q.db("variance"))
    assert q.db("std10") == pytest.approx((10 * math.log10(2), 10 * math.log10(0.5)))
    with pytest.raises(ValueError):
        q.db("power")


def test_squeeze_curve_shape(nominal):
    # anti-squeezed quadrature diverges toward the saddle-node; the squeezed one stays flat
    Fp = np.linspace(0.0, 0.00195, 20)
    rows = [fd.quadrature_covariance(nominal.with_(Fp=f), 3.08e-8).db() for f in Fp]
    plus = np.array([r[0] for r in rows])
    minus = np.array([r[1] for r in rows])
    assert np.all(np.diff(plus) > 0) and plus[-1] > 20
    assert np.ptp(minus) < 0.1


def test_cooling_near_hopf(nominal):
    plus, minus = fd.quadrature_covariance(nominal.with_(Fp=-0.041), 3.08e-8).db()
    assert plus < 0 and minus < 0


def test_gain_values(nominal):
    phi = np.linspace(0, math.pi, 31)
    np.testing.assert_allclose(fd.gain_ft(ResonatorParams(), phi), 1.0, rtol=1e-14)
    lo, hi = fd.gain_extrema_ft(nominal.with_(Fp=0.001033))
    assert 20 * math.log10(lo) == pytest.approx(-60.0, abs=1.0)
    assert np.all(fd.gain_ft(nominal.with_(Fp=-0.04), phi) < 1.0)


def test_envelope_brackets_gain(nominal):
    p = nominal.with_(Fp=0.001033)
    d = DriveSignal(1e-3, 1.00024, 0.0)
    up, low = fd.envelope(p, d, np.linspace(0, 2 * math.pi / 2.4e-4, 500))
    np.testing.assert_allclose(low, -up)
    assert up.min() > 0 and up.max() / up.min() > 100


def test_temperature_ratio(nominal):
    assert fd.effective_temperature_ratio(ResonatorParams()) == pytest.approx(1.0, rel=1e-9)
    r = fd.effective_temperature_ratio(nominal.with_(Fp=-0.02))
    assert r == pytest.approx(0.08, rel=0.25)
    # independent trapezoid quadrature on a dense grid
    nu = np.concatenate([np.linspace(0, 0.8, 4001), np.linspace(0.8, 1.2, 400001)[1:],
                         np.linspace(1.2, 4, 14001)[1:]])
    p = nominal.with_(Fp=-0.02)
    ratio = np.trapezoid(fd.nsd(p, 1.0, nu), nu) / np.trapezoid(
        fd.nsd(ResonatorParams(), 1.0, nu), nu)
    assert r == pytest.approx(ratio, rel=1e-4)


def test_temperature_rises_again_near_hopf(nominal):
    r = [fd.effective_temperature_ratio(nominal.with_(Fp=f)) for f in (-0.01, -0.025, -0.0415)]
    assert r[1] < r[0] and r[2] > r[1]


def test_spectrum_threads_and_validation(nominal):
    p = nominal.with_(Fp=-0.02)
    nu = np.linspace(0.9, 1.1, 1500)
    a = fd.spectrum(p, 1.0, nu, chunk=100)
    b = fd.spectrum(p, 1.0, nu, chunk=100, threads=4)
    for k in ("S_N", "S_XL", "S_YL"):
        assert np.array_equal(a.values[k], b.values[k])
    with pytest.raises(ValueError):
        fd.SpectrumSeries(np.array([1.0, 0.5]), {"S_N": np.ones(2)})


def test_singular_denominator():
    # classic threshold without feedback: the simplified pair blows up
    p = ResonatorParams(Fp=2e-3)
    with pytest.raises(SingularThreshold):
        fd.quadrature_covariance(p, 1.0, "simplified")
