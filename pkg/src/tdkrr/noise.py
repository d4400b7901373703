"""Measurement noise models and sweep-based impulse response measurement

Four models are provided. Additive white noise is added directly to the
impulse responses. For the other three, the interference is added to the
microphone recordings of a periodic perfect sweep, and the impulse responses are
recovered by deconvolution:

- localized white: white Gaussian noise radiated from a point source
- localized pink: the same with a 1/sqrt(f) spectral shaping
- wind: an independent, low-frequency, non-stationary signal per microphone

The target SNR is the pooled power ratio of the clean recordings to the
interference over all microphones. Noise is scaled, never the signal.
"""
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from tdkrr import acoustics

MODELS = ("additive_white", "localized_white", "localized_pink", "wind")

WIND_CUTOFF = 30.0
WIND_ORDER = 2
WIND_CORRELATION_TIME = 0.5


@dataclass(frozen=True)
class NoiseConfig:
    """Noise model, SNR in dB, optional point source position and seed"""
    model: str
    snr_db: float
    noise_source: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown noise model {self.model!r}")
        if self.model.startswith("localized") and self.noise_source is None:
            raise ValueError(f"{self.model} noise requires a noise source position")


@dataclass(frozen=True)
class SweepSignal:
    """One period of a periodic excitation

    Attributes
    ----------
    samples : ndarray of shape (P,)
    flat : bool
        True if the DFT magnitude is the same in every bin
    """
    samples: np.ndarray
    flat: bool = True

    @property
    def period(self):
        return self.samples.shape[0]


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10)


def perfect_sweep(L, seed=0):
    """Periodic chirp with a flat spectrum, one period of length L

    Every DFT bin has magnitude sqrt(L), so the signal has unit power and its
    circular autocorrelation is L times a unit impulse. The phase is quadratic in
    frequency. DC and Nyquist bins are real. The seed selects a circular shift.
    """
    if L < 2:
        raise ValueError("sweep length must be at least 2")
    l = np.arange(L // 2 + 1)
    spec = np.sqrt(L) * np.exp(-1j * np.pi * l**2 / L)
    spec[0] = np.sqrt(L)
    if L % 2 == 0:
        spec[-1] = np.sqrt(L)
    x = np.fft.irfft(spec, n=L)
    shift = int(np.random.default_rng(seed).integers(L))
    return SweepSignal(np.roll(x, shift), True)


def circular_autocorrelation(x):
    X = np.fft.rfft(x)
    return np.fft.irfft(np.abs(X) ** 2, n=len(x))


def recording_length(L, periods=2):
    return periods * L


def _recordings(truth, sweep, n_samples):
    """Microphone signals for the sweep repeated from time zero, without noise"""
    P = sweep.period
    reps = int(np.ceil(n_samples / P))
    excitation = np.tile(sweep.samples, reps)[:n_samples]
    M, L = truth.shape
    out = np.empty((M, n_samples))
    for m in range(M):
        out[m] = sps.fftconvolve(excitation, truth[m])[:n_samples]
    return out


def clean_recordings(truth, sweep, n_samples):
    """Noise-free microphone recordings of the sweep, shape (M, n_samples)"""
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if truth.shape[1] > sweep.period:
        raise ValueError("impulse responses must not be longer than the sweep period")
    return _recordings(truth, sweep, n_samples)


def deconvolve(recordings, sweep):
    """Average whole periods after the first, then divide by the sweep spectrum

    Parameters
    ----------
    recordings : ndarray of shape (M, N), N a multiple of the period, at least 2 periods

    Returns
    -------
    ndarray of shape (M, P)
    """
    recordings = np.atleast_2d(np.asarray(recordings, dtype=float))
    P = sweep.period
    N = recordings.shape[1]
    if N % P != 0 or N // P < 2:
        raise ValueError(f"recording of {N} samples must span a whole number >= 2 of {P}-sample periods")
    periods = recordings[:, P:].reshape(recordings.shape[0], -1, P)
    avg = periods.mean(axis=1)
    S = np.fft.rfft(sweep.samples)
    return np.fft.irfft(np.fft.rfft(avg, axis=-1) / S, n=P, axis=-1)


def measure_and_deconvolve(truth, sweep, interference):
    """Simulated sweep measurement of each impulse response with additive interference

    Parameters
    ----------
    truth : RirData
        impulse responses of length L equal to the sweep period
    sweep : SweepSignal
    interference : ndarray of shape (M, N)
        added to the recordings, N a whole number >= 2 of sweep periods

    Returns
    -------
    RirData
        deconvolved responses, equal to truth when the interference is zero
    """
    interference = np.atleast_2d(np.asarray(interference, dtype=float))
    if truth.L != sweep.period:
        raise ValueError("impulse response length must equal the sweep period")
    if interference.shape[0] != truth.num_mics:
        raise ValueError("one interference signal per microphone is required")
    N = interference.shape[1]
    if N % sweep.period != 0 or N // sweep.period < 2:
        raise ValueError("recording too short, at least two whole sweep periods are required")
    rec = _recordings(truth.signals, sweep, N) + interference
    return truth.with_signals(deconvolve(rec, sweep))


def pooled_power(x):
    return float(np.mean(np.square(x)))


def scale_to_snr(noise, signal_power, snr_db):
    """Scale noise so that signal_power / noise power equals the target SNR"""
    p = pooled_power(noise)
    if p == 0:
        raise ValueError("noise is identically zero")
    return noise * np.sqrt(signal_power / (db_to_linear(snr_db) * p))


def additive_white(data, snr_db, seed):
    """Add white Gaussian noise directly to the impulse responses

    The noise variance is the pooled signal power divided by the linear SNR, so
    the SNR is met in expectation. snr_db = inf returns the data unchanged.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return data
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(pooled_power(data.signals) / db_to_linear(snr_db))
    return data.with_signals(data.signals + sigma * rng.standard_normal(data.signals.shape))


def pink_shaping(x):
    """Weight every DFT bin by 1/sqrt(f), with the DC bin set to zero"""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    w = np.zeros(X.shape[-1])
    w[1:] = 1 / np.sqrt(np.arange(1, X.shape[-1]))
    return np.fft.irfft(X * w, n=n, axis=-1)


def localized_noise(scene, model, n_samples, seed, noise_source=None, max_order=None):
    """Noise radiated from a point source to each microphone, before SNR scaling

    Parameters
    ----------
    scene : Scene
        free field if scene.room is None
    model : {'white', 'pink'}
    n_samples : int
        recording length
    seed : int
    noise_source : position

    Returns
    -------
    ndarray of shape (M, n_samples)
    """
    if model not in ("white", "pink"):
        raise ValueError(f"unknown localized noise model {model!r}")
    if noise_source is None:
        raise ValueError("localized noise requires a noise source position")
    src = np.asarray(noise_source, dtype=float)
    if scene.room is None:
        rirs = np.stack([acoustics.free_field_rir(src, p, scene.fs, scene.c, scene.L) for p in scene.mics])
    else:
        rirs = np.stack([acoustics.image_source_rir(scene.room, src, p, max_order, scene.L) for p in scene.mics])
    rng = np.random.default_rng(seed)
    # the leading L samples let the room response reach steady state
    drive = rng.standard_normal(n_samples + scene.L)
    if model == "pink":
        drive = pink_shaping(drive)
    out = np.empty((scene.mics.shape[0], n_samples))
    for m, h in enumerate(rirs):
        out[m] = sps.fftconvolve(drive, h)[scene.L:scene.L + n_samples]
    return out


def _lowpass_sos(cutoff, fs, order):
    return sps.butter(order, cutoff, btype="low", fs=fs, output="sos")


def wind_noise(n_samples, fs, seed):
    """Approximate wind noise for one microphone

    Gaussian noise through a second order Butterworth low-pass at 30 Hz,
    modulated by the square of a slowly varying Gaussian process (Butterworth
    low-pass with a 0.5 s time constant). This reproduces the low-frequency,
    gusty character of wind noise, not any particular measured spectrum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    warm = int(np.ceil(4 * WIND_CORRELATION_TIME * fs))
    n = n_samples + warm
    carrier = sps.sosfilt(_lowpass_sos(WIND_CUTOFF, fs, WIND_ORDER), rng.standard_normal(n))
    slow_cut = 1 / (2 * np.pi * WIND_CORRELATION_TIME)
    slow = sps.sosfilt(_lowpass_sos(slow_cut, fs, 2), rng.standard_normal(n))
    slow /= np.std(slow[warm:]) + 1e-300
    envelope = slow**2 + 0.05
    return (carrier * envelope)[warm:]


def wind_interference(num_mics, n_samples, fs, seed):
    """Independent wind noise per microphone, shape (M, n_samples)"""
    seeds = np.random.SeedSequence(seed).spawn(num_mics)
    return np.stack([wind_noise(n_samples, fs, s.generate_state(1)[0]) for s in seeds])


def measure_snr(clean_power, noise_power):
    """Linear SNR (sigma_p^2 - sigma_s^2) / sigma_s^2 from measured powers

    clean_power is the power of the microphone signal including noise, noise_power
    that of the noise alone.
    """
    if clean_power < 0 or noise_power < 0:
        raise ValueError("powers must be non-negative")
    if noise_power == 0:
        raise ValueError("noise power is zero")
    return (clean_power - noise_power) / noise_power
