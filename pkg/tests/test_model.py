import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasqueeze.model import (DriveSignal, NoiseSpec, ResonatorParams, StateVector, amp_db, db,
                               susceptibility, system_matrix)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("field", ["omega0", "gamma", "omega", "tau"])
def test_nonpositive_scales_rejected(field):
    with pytest.raises(ValueError):
        ResonatorParams(**{field: 0.0})


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        ResonatorParams(Fp=math.inf)
    with pytest.raises(ValueError):
        DriveSignal(Fs=math.nan)
    with pytest.raises(ValueError):
        NoiseSpec(D=-1.0)


def test_susceptibility_on_resonance():
    p = ResonatorParams(gamma=2e-3)
    assert susceptibility(p, 1.0) == pytest.approx(1j / 2e-3, rel=1e-15)
    assert susceptibility(p, [0.0, 1.0]).shape == (2,)


def test_period_and_detuning():
    p = ResonatorParams(omega0=1.0, omega=1.001)
    assert p.period == pytest.approx(2 * math.pi / 1.001)
    assert p.Omega == pytest.approx(1.0 - 1.001 ** 2)


def test_drive_idler_and_phase_wrap():
    p = ResonatorParams()
    d = DriveSignal(Fs=1.0, omega_s=1.0002, phi0=7.0)
    assert d.delta(p) == pytest.approx(2e-4)
    assert d.idler(p) == pytest.approx(0.9998)
    assert d.phi0 == pytest.approx(7.0 - 2 * math.pi)


def test_system_matrix_trace():
    p = ResonatorParams(gamma=0.01, tau=50.0, eta=1.3, Fp=0.02)
    for t in (0.0, 0.3, 2.1):
        assert np.trace(system_matrix(p, t)) == pytest.approx(-0.01 - 1 / 50.0)


@given(st.floats(1e-6, 1e6))
def test_amplitude_db_is_power_db_of_square(r):
    assert amp_db(r) == pytest.approx(db(r * r), abs=1e-9)


@given(finite, finite, finite)
def test_state_vector_round_trip(x, v, z):
    s = StateVector(x, v, z)
    assert StateVector.from_array(s.to_array()) == s


def test_with_revalidates():
    p = ResonatorParams()
    with pytest.raises(ValueError):
        p.with_(gamma=-1.0)
    assert p.with_(Fp=0.01).Fp == 0.01
