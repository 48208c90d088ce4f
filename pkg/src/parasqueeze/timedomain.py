"""Direct time integration: deterministic runs, Langevin ensembles, lock-in
demodulation, spectral estimation and phase-sweep gain extraction.

The stochastic integrator advances the drift with the same RK4 propagator as
the deterministic one and then adds the Euler-Maruyama kick
``sqrt(2 D dt) n`` to the velocity. One propagator per step is shared by every
run of an ensemble, and every run owns its generator seeded by
``SeedSequence([seed, run_index])``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import _kernels
from .errors import NonFinite, TooShort
from .freqdomain import QuadratureStats, SpectrumSeries
from .model import DriveSignal, NoiseSpec, ResonatorParams, StateVector, TWO_PI, susceptibility

DIVERGENCE_LIMIT = 1e12
NOISE_BLOCK = 2 ** 22  # normals generated per chunk across the ensemble
MAX_SWEEP_DETUNING = 0.5  # in units of gamma


@dataclass
class TimeSeries:
    """Uniformly sampled trajectory of (x, xdot, z).

    ``dt`` is the sample spacing and ``step`` the integrator step; they differ
    when only every n-th step is recorded. ``diverged`` is the integrator step
    at which the state norm first exceeded the divergence limit; samples from
    then on are NaN.
    """

    t0: float
    dt: float
    states: np.ndarray
    kind: str = "deterministic"
    seed: int | None = None
    diverged: int | None = None
    step: float | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 3 or len(self.states) < 2:
            raise ValueError("states must have shape (N >= 2, 3)")
        if self.kind not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if (self.seed is None) == (self.kind == "stochastic"):
            raise ValueError("seed must be given exactly for stochastic series")
        if self.step is None:
            self.step = self.dt

    def __len__(self):
        return len(self.states)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def samples(self) -> list[StateVector]:
        ok = np.all(np.isfinite(self.states), axis=1)
        return [StateVector.from_array(s) for s in self.states[ok]]

    def window(self, t_start: float) -> "TimeSeries":
        """Samples from ``t_start`` on."""
        i = max(0, int(math.ceil((t_start - self.t0) / self.dt - 1e-9)))
        return TimeSeries(self.t0 + i * self.dt, self.dt, self.states[i:], self.kind,
                          self.seed, self.diverged, self.step)


@dataclass
class QuadratureSamples:
    XL: np.ndarray
    YL: np.ndarray
    t_grid: np.ndarray

    def __post_init__(self):
        if not (len(self.XL) == len(self.YL) == len(self.t_grid)):
            raise ValueError("channels and time grid must have the same length")


def _steps(t_span, dt):
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise ValueError("t_span must be a finite increasing pair")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return t0, int(math.ceil((t1 - t0) / dt - 1e-9))


def integrate_deterministic(params: ResonatorParams, drive: DriveSignal | None = None,
                            initial: StateVector | None = None, t_span=(0.0, 1000.0),
                            dt: float | None = None, record_every: int = 1) -> TimeSeries:
    """Fixed-step RK4 of the full periodic system with an optional signal."""
    p = params
    drive = drive or DriveSignal()
    initial = initial or StateVector()
    dt = p.period / 400.0 if dt is None else float(dt)
    if dt > p.period / 200.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds 2 pi / (200 omega)")
    t0, n = _steps(t_span, dt)
    every = int(record_every)
    rec, div = _kernels.integrate_rk4(initial.to_array(), p.omega0, p.gamma, p.Fp, p.omega,
                                      p.eta, p.tau, drive.Fs, drive.omega_s, drive.phi0,
                                      t0, dt, n, every, DIVERGENCE_LIMIT)
    return TimeSeries(t0, dt * every, rec, "deterministic",
                      diverged=None if div < 0 else int(div), step=dt)


# --- stochastic ensembles ----------------------------------------------------

@dataclass
class _Track:
    params: ResonatorParams
    X: np.ndarray
    filt: np.ndarray
    rec: np.ndarray
    div: np.ndarray


def _simulate(params_list, D, seed, runs, t0, dt, n_steps, initial=None,
              record_every=0, record_start=0, lockin=None, threads=1):
    """Advance ``runs`` realizations for every parameter set with shared noise.

    ``lockin`` is ``(omega_m, tau_m, stages)`` or ``None``. Samples are
    recorded every ``record_every`` steps from step ``record_start`` on.
    """
    sigma = math.sqrt(2.0 * D * dt)
    stages = 0 if lockin is None else int(lockin[2])
    omega_m, tau_m = (0.0, 0.0) if lockin is None else (float(lockin[0]), float(lockin[1]))
    x0 = np.zeros(3) if initial is None else initial.to_array()
    if record_every > 0:
        every = int(record_every)
        offset = -(-int(record_start) // every)
        n_rec = n_steps // every - offset + 1
    else:
        every, offset, n_rec = 1, 0, 0
    tracks = []
    for p in params_list:
        rec = np.full((runs, max(n_rec, 0), 3), np.nan)
        if n_rec > 0 and offset == 0:
            rec[:, 0, :] = x0
        tracks.append(_Track(p, np.tile(x0, (runs, 1)), np.zeros((runs, stages, 2)), rec,
                             np.full(runs, -1, dtype=np.int64)))
    rngs = [np.random.default_rng(np.random.SeedSequence([seed, i])) for i in range(runs)]
    chunk = max(256, min(2 ** 16, NOISE_BLOCK // runs))
    noise = np.empty((runs, chunk))
    blocks = np.array_split(np.arange(runs), max(1, min(threads, runs)))
    blocks = [(b[0], b[-1] + 1) for b in blocks if b.size]
    pool = ThreadPoolExecutor(max_workers=len(blocks)) if len(blocks) > 1 else None

    a = dt / tau_m if tau_m > 0.0 else 0.0

    def advance(tr, S, ref, lo, hi, step0, nz):
        _kernels.stochastic_chunk(tr.X[lo:hi], tr.filt[lo:hi], S, ref, step0, nz[lo:hi],
                                  sigma, every, tr.rec[lo:hi], offset, a, tr.div[lo:hi],
                                  DIVERGENCE_LIMIT)

    try:
        step0 = 0
        while step0 < n_steps:
            nc = min(chunk, n_steps - step0)
            nz = noise[:, :nc]
            for m in range(runs):
                if D > 0:
                    rngs[m].standard_normal(out=nz[m])
                else:
                    nz[m] = 0.0
            for tr in tracks:
                p = tr.params
                S, ref = _kernels.step_table(p.omega0, p.gamma, p.Fp, p.omega, p.eta, p.tau,
                                             t0, dt, step0, nc, omega_m)
                if pool is None:
                    advance(tr, S, ref, 0, runs, step0, nz)
                else:
                    list(pool.map(lambda b: advance(tr, S, ref, b[0], b[1], step0, nz), blocks))
            step0 += nc
    finally:
        if pool is not None:
            pool.shutdown()
    return tracks, every, offset


def integrate_stochastic(params: ResonatorParams, noise: NoiseSpec, t_span=(0.0, 1000.0),
                         dt: float | None = None, initial: StateVector | None = None,
                         record_every: int = 1, record_from: float | None = None,
                         realizations: int = 1, threads: int = 1):
    """Langevin integration with white force noise on the velocity.

    Returns one :class:`TimeSeries`, or a list when ``realizations > 1``
    (run ``i`` uses the generator seeded by ``[noise.seed, i]``).
    ``record_from`` drops samples before that time to save memory.
    """
    p = params
    dt = p.period / 1000.0 if dt is None else float(dt)
    if dt > p.period / 500.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds 2 pi / (500 omega)")
    t0, n = _steps(t_span, dt)
    every = int(record_every)
    start = 0 if record_from is None else max(0, int(math.ceil((record_from - t0) / dt - 1e-9)))
    tracks, every, offset = _simulate([p], noise.D, noise.seed, realizations, t0, dt, n,
                                      initial=initial, record_every=every,
                                      record_start=start, threads=threads)
    tr = tracks[0]
    out = []
    for m in range(realizations):
        states = tr.rec[m]
        div = int(tr.div[m])
        if div >= 0:
            states[max(0, div // every - offset):] = np.nan
        out.append(TimeSeries(t0 + offset * every * dt, every * dt, states, "stochastic",
                              seed=noise.seed, diverged=None if div < 0 else div, step=dt))
    return out[0] if realizations == 1 else out


# --- lock-in and spectra -----------------------------------------------------

def software_lockin(series: TimeSeries, omega: float, tau: float, method: str = "euler",
                    initial=(0.0, 0.0), stages: int = 1) -> QuadratureSamples:
    """Demodulate ``x`` at ``omega`` through an RC low-pass of time constant ``tau``.

    ``euler`` applies ``X <- X + (dt/tau)(cos(w t) x - X)`` sample by sample,
    optionally cascaded ``stages`` times. ``rk4`` integrates the same filter
    ODE with RK4 and Hermite midpoints from (x, xdot), which reproduces the
    filter state of :func:`integrate_deterministic` when ``series`` holds
    every integrator step.
    """
    dt = series.dt
    if tau < 10.0 * dt:
        raise ValueError("tau must be at least 10 sample spacings")
    x = np.ascontiguousarray(series.states[:, 0])
    t = series.t
    if method == "euler":
        a = dt / tau
        X, Y = np.cos(omega * t) * x, np.sin(omega * t) * x
        for q in range(int(stages)):
            X = _kernels.rc_filter(X, a, float(initial[0]) if q == 0 else 0.0)
            Y = _kernels.rc_filter(Y, a, float(initial[1]) if q == 0 else 0.0)
    elif method == "rk4":
        if stages != 1:
            raise ValueError("rk4 lock-in supports a single stage")
        v = np.ascontiguousarray(series.states[:, 1])
        X = _kernels.lockin_hermite(x, v, series.t0, dt, omega, tau, float(initial[0]), False)
        Y = _kernels.lockin_hermite(x, v, series.t0, dt, omega, tau, float(initial[1]), True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return QuadratureSamples(XL=X, YL=Y, t_grid=t)


def welch_density(x, dt: float, segment_length: int, overlap_fraction: float = 0.5):
    """Two-sided angular-frequency density of one or more equal-rate records.

    The normalization makes ``integral S(nu) dnu / (2 pi)`` equal the variance,
    which is numerically scipy's two-sided per-hertz density evaluated at
    ``f = nu / 2 pi``.
    """
    records = [np.asarray(r, dtype=float) for r in (x if isinstance(x, (list, tuple)) else [x])]
    nper = int(segment_length)
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    if nper < 2 or any(len(r) < nper for r in records):
        raise TooShort(f"segment_length {nper} exceeds the record length")
    nover = int(round(overlap_fraction * nper))
    acc = None
    for r in records:
        f, P = signal.welch(r, fs=1.0 / dt, window="hann", nperseg=nper, noverlap=nover,
                            detrend=False, return_onesided=False, scaling="density")
        acc = P if acc is None else acc + P
    order = np.argsort(f)
    return TWO_PI * f[order], acc[order] / len(records)


def welch_nsd(series, segment_length: int, overlap_fraction: float = 0.5,
              channel: int = 0) -> SpectrumSeries:
    """Welch estimate of ``S_N`` from a series or a list of independent series."""
    items = series if isinstance(series, (list, tuple)) else [series]
    dts = {s.dt for s in items}
    if len(dts) != 1:
        raise ValueError("all series must share one sample spacing")
    nu, S = welch_density([s.states[:, channel] for s in items], dts.pop(),
                          segment_length, overlap_fraction)
    return SpectrumSeries(nu, {"S_N": S})


def band_integral(spec: SpectrumSeries, lo: float, hi: float, channel: str = "S_N") -> float:
    """Trapezoidal integral of one channel over ``lo <= nu <= hi``."""
    nu = spec.nu_grid
    m = (nu >= lo) & (nu <= hi)
    return float(np.trapezoid(spec.values[channel][m], nu[m]))


def stochastic_temperature_ratio(params: ResonatorParams, noise: NoiseSpec,
                                 duration: float | None = None, realizations: int = 16,
                                 burn_in: float | None = None, dt: float | None = None,
                                 record_every: int = 100, segment_time: float | None = None,
                                 threads: int = 1):
    """Band-integrated Welch NSD over ``[0, 4 omega]`` relative to the bare oscillator.

    The feedback run and the ``Fp = eta = 0`` reference share their noise.
    Returns ``(ratio, spectrum, reference_spectrum)``.
    """
    p = params
    duration = 200.0 / p.gamma if duration is None else float(duration)
    burn = max(20.0 / p.gamma, 20.0 * p.tau) if burn_in is None else float(burn_in)
    dt = p.period / 1000.0 if dt is None else float(dt)
    segment_time = 10.0 / p.gamma if segment_time is None else float(segment_time)
    _, n = _steps((0.0, burn + duration), dt)
    start = int(math.ceil(burn / dt))
    ref = p.with_(Fp=0.0, eta=0.0)
    tracks, every, _ = _simulate([p, ref], noise.D, noise.seed, realizations, 0.0, dt, n,
                                 record_every=record_every, record_start=start, threads=threads)
    nper = int(segment_time / (every * dt))
    specs = []
    for tr in tracks:
        nu, S = welch_density([r[:, 0] for r in tr.rec], every * dt, nper, 0.5)
        specs.append(SpectrumSeries(nu, {"S_N": S}))
    band = (0.0, 4.0 * p.omega)
    ratio = band_integral(specs[0], *band) / band_integral(specs[1], *band)
    return ratio, specs[0], specs[1]


# --- ensemble quadratures ----------------------------------------------------

@dataclass
class EnsembleQuadrature:
    params: ResonatorParams
    stats: QuadratureStats
    reference: QuadratureStats
    samples: QuadratureSamples = field(repr=False)
    reference_samples: QuadratureSamples = field(repr=False)

    def db(self, convention: str = "variance"):
        return self.stats.db(convention)

    @property
    def correlation(self) -> float:
        s = self.stats
        return s.sigma_cs / math.sqrt(s.sigma_c2 * s.sigma_s2)


def _sample_stats(X, Y, s0=math.nan):
    C = np.cov(np.vstack([X, Y]))
    return QuadratureStats.from_covariance(C[0, 0], C[1, 1], C[0, 1], s0)


def ensemble_quadrature_stats(params, noise: NoiseSpec, runs: int = 1000,
                              t_end: float | None = None, dt: float | None = None,
                              tau_m: float | None = None, stages: int = 4,
                              threads: int = 1):
    """Sample quadrature covariance at the end of an ensemble of Langevin runs.

    Every run is demodulated at ``omega`` by a cascade of ``stages`` RC
    filters with time constant ``tau_m`` (default ``4/gamma``), independent of
    the feedback filter. The ``Fp = eta = 0`` reference ensemble reuses the
    same seeds. ``params`` may be one parameter set or a list sharing
    ``omega0``, ``gamma`` and ``omega``; a list gives a list of results.
    """
    single = isinstance(params, ResonatorParams)
    plist = [params] if single else list(params)
    if runs < 100:
        raise ValueError("at least 100 runs are required")
    base = plist[0]
    if any((q.omega0, q.gamma, q.omega) != (base.omega0, base.gamma, base.omega) for q in plist):
        raise ValueError("parameter sets must share omega0, gamma and omega")
    tau_m = 4.0 / base.gamma if tau_m is None else float(tau_m)
    t_end = 15.0 * tau_m if t_end is None else float(t_end)
    dt = base.period / 500.0 if dt is None else float(dt)
    if dt > base.period / 500.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds 2 pi / (500 omega)")
    _, n = _steps((0.0, t_end), dt)
    ref = base.with_(Fp=0.0, eta=0.0)
    tracks, _, _ = _simulate(plist + [ref], noise.D, noise.seed, runs, 0.0, dt, n,
                             lockin=(base.omega, tau_m, stages), threads=threads)
    t_grid = np.full(runs, n * dt)

    def quad_samples(tr):
        return QuadratureSamples(tr.filt[:, -1, 0].copy(), tr.filt[:, -1, 1].copy(), t_grid)

    rs = quad_samples(tracks[-1])
    rstats = _sample_stats(rs.XL, rs.YL)
    s0 = 0.5 * (rstats.sigma_c2 + rstats.sigma_s2)
    rstats = QuadratureStats.from_covariance(rstats.sigma_c2, rstats.sigma_s2,
                                             rstats.sigma_cs, s0)
    out = []
    for q, tr in zip(plist, tracks[:-1]):
        qs = quad_samples(tr)
        out.append(EnsembleQuadrature(q, _sample_stats(qs.XL, qs.YL, s0), rstats, qs, rs))
    return out[0] if single else out


# --- deterministic post-processing ------------------------------------------

@dataclass
class GainPhaseCurve:
    phi: np.ndarray
    gain: np.ndarray
    t: np.ndarray

    def gain_db(self):
        return 20.0 * np.log10(self.gain)


def extract_gain_phase(params: ResonatorParams, drive: DriveSignal, t_span=None,
                       discard: float | None = None, steps_per_period: int = 200,
                       amplitude: str = "fit") -> GainPhaseCurve:
    """Gain versus signal phase from one slowly detuned run.

    The first ``discard`` time units (default ``60/gamma``) are dropped; the
    sweep then covers one phase interval of ``pi`` unless ``t_span`` is
    given. Every oscillation period yields one amplitude, normalized by
    ``|chi(omega) Fs|`` and assigned the phase ``(delta t + phi0) mod pi`` at
    the period centre.

    ``amplitude="fit"`` projects the period onto ``cos`` and ``sin`` at
    ``omega``, which estimates the amplitude at the period centre even where
    the envelope changes within one period. ``"peak"`` uses half the
    peak-to-peak excursion.
    """
    p = params
    delta = drive.delta(p)
    if not 0.0 < abs(delta) <= MAX_SWEEP_DETUNING * p.gamma * (1 + 1e-12):
        raise ValueError(f"signal detuning must satisfy 0 < |delta| <= {MAX_SWEEP_DETUNING} gamma")
    if drive.Fs <= 0.0:
        raise ValueError("Fs must be positive")
    discard = 60.0 / p.gamma if discard is None else float(discard)
    if t_span is None:
        t_span = (0.0, discard + math.pi / abs(delta) + p.period)
    spp = int(steps_per_period)
    ts = integrate_deterministic(p, drive, StateVector(), t_span, dt=p.period / spp)
    if ts.diverged is not None:
        raise NonFinite(ts.diverged, f"trajectory diverged at step {ts.diverged}")
    w = ts.window(t_span[0] + discard)
    nper = (len(w) - 1) // spp
    if nper < 1:
        raise TooShort("no complete period after the discarded transient")
    x = w.x[: nper * spp].reshape(nper, spp)
    if amplitude == "fit":
        t = w.t[: nper * spp].reshape(nper, spp)
        a = 2.0 / spp * (x * np.cos(p.omega * t)).sum(axis=1)
        b = 2.0 / spp * (x * np.sin(p.omega * t)).sum(axis=1)
        amp = np.hypot(a, b)
    elif amplitude == "peak":
        amp = 0.5 * (x.max(axis=1) - x.min(axis=1))
    else:
        raise ValueError(f"unknown amplitude estimator {amplitude!r}")
    tc = w.t0 + (np.arange(nper) + 0.5) * spp * w.dt
    phi = np.mod(delta * tc + drive.phi0, math.pi)
    gain = amp / (abs(susceptibility(p, p.omega)) * drive.Fs)
    return GainPhaseCurve(phi=phi, gain=gain, t=tc)


def fft_peaks(series: TimeSeries, discard: float = 0.0, rel_db: float = -20.0,
              channel: int = 0):
    """Dominant positive-frequency peaks of a Hann-windowed FFT.

    Returns ``(nu, amplitude, peaks)`` where ``peaks`` are the angular
    frequencies of local maxima within ``rel_db`` of the largest one, in
    descending order of height.
    """
    w = series.window(series.t0 + discard)
    x = w.states[:, channel]
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite samples")
    win = np.hanning(len(x))
    A = np.abs(np.fft.rfft(x * win))
    nu = TWO_PI * np.fft.rfftfreq(len(x), w.dt)
    idx, _ = signal.find_peaks(A, height=A.max() * 10.0 ** (rel_db / 20.0))
    idx = idx[np.argsort(A[idx])[::-1]]
    return nu, A, nu[idx]
