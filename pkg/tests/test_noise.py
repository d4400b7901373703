import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdkrr import acoustics, estimator, noise
from tdkrr.estimator import RirData

FS = 1600.0


def _truth(M, L, seed=0):
    rng = np.random.default_rng(seed)
    decay = np.exp(-np.arange(L) / (L / 4))
    return RirData(rng.uniform(-0.3, 0.3, (M, 3)), rng.standard_normal((M, L)) * decay, FS)


def test_noise_config():
    noise.NoiseConfig("additive_white", 10.0)
    noise.NoiseConfig("localized_pink", 10.0, noise_source=(1.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        noise.NoiseConfig("localized_white", 10.0)
    with pytest.raises(ValueError):
        noise.NoiseConfig("brown", 10.0)


@pytest.mark.parametrize("L", [2, 3, 64, 250, 251])
def test_perfect_sweep_properties(L):
    s = noise.perfect_sweep(L, seed=5)
    assert s.period == L and s.flat
    assert np.isrealobj(s.samples)
    np.testing.assert_allclose(np.abs(np.fft.rfft(s.samples)), np.sqrt(L), rtol=1e-9)
    ac = noise.circular_autocorrelation(s.samples)
    expected = np.zeros(L)
    expected[0] = L
    np.testing.assert_allclose(ac, expected, atol=1e-9 * L)


def test_perfect_sweep_seed_selects_shift():
    a = noise.perfect_sweep(64, 0).samples
    b = noise.perfect_sweep(64, 1).samples
    assert any(np.allclose(np.roll(a, k), b) for k in range(64))
    np.testing.assert_array_equal(a, noise.perfect_sweep(64, 0).samples)
    with pytest.raises(ValueError):
        noise.perfect_sweep(1)


@settings(max_examples=25, deadline=None)
@given(M=st.integers(1, 5), L=st.integers(8, 300), periods=st.integers(2, 4), seed=st.integers(0, 2**31))
def test_deconvolution_is_exact_without_interference(M, L, periods, seed):
    truth = _truth(M, L, seed)
    sweep = noise.perfect_sweep(L, seed)
    out = noise.measure_and_deconvolve(truth, sweep, np.zeros((M, periods * L)))
    np.testing.assert_allclose(out.signals, truth.signals, atol=1e-9 * np.abs(truth.signals).max())
    np.testing.assert_array_equal(out.positions, truth.positions)


def test_sweep_aligned_interference_gives_scaled_impulse():
    L, alpha = 50, 0.3
    truth = _truth(2, L)
    sweep = noise.perfect_sweep(L, 2)
    interference = alpha * np.tile(sweep.samples, (2, 3))
    out = noise.measure_and_deconvolve(truth, sweep, interference)
    delta = np.zeros(L)
    delta[0] = alpha
    np.testing.assert_allclose(out.signals - truth.signals, np.tile(delta, (2, 1)), atol=1e-12)


def test_averaging_more_periods_halves_error_power():
    L, M = 64, 2
    truth = _truth(M, L)
    sweep = noise.perfect_sweep(L, 0)
    power = {}
    for averaged in (2, 4):
        errs = []
        for seed in range(100):
            w = np.random.default_rng(seed).standard_normal((M, (averaged + 1) * L))
            errs.append(np.mean((noise.measure_and_deconvolve(truth, sweep, w).signals - truth.signals) ** 2))
        power[averaged] = np.mean(errs)
    assert power[4] / power[2] == pytest.approx(0.5, abs=0.05)


def test_deconvolution_errors():
    truth = _truth(2, 16)
    sweep = noise.perfect_sweep(16)
    with pytest.raises(ValueError):
        noise.measure_and_deconvolve(truth, sweep, np.zeros((2, 16)))
    with pytest.raises(ValueError):
        noise.measure_and_deconvolve(truth, sweep, np.zeros((2, 40)))
    with pytest.raises(ValueError):
        noise.measure_and_deconvolve(truth, sweep, np.zeros((3, 32)))
    with pytest.raises(ValueError):
        noise.measure_and_deconvolve(truth, noise.perfect_sweep(20), np.zeros((2, 40)))
    with pytest.raises(ValueError):
        noise.deconvolve(np.zeros((1, 16)), sweep)
    with pytest.raises(ValueError):
        noise.clean_recordings(np.zeros((1, 20)), sweep, 32)


def test_recording_length():
    assert noise.recording_length(250) == 500
    assert noise.recording_length(250, 3) == 750


def test_additive_white():
    truth = _truth(40, 250)
    assert noise.additive_white(truth, np.inf, 0) is truth
    p = noise.pooled_power(truth.signals)
    noisy = [noise.additive_white(truth, 0.0, s) for s in (1, 2)]
    errs = [n.signals - truth.signals for n in noisy]
    for e in errs:
        assert noise.pooled_power(e) == pytest.approx(p, rel=0.05)
    assert not np.allclose(errs[0], errs[1])
    np.testing.assert_array_equal(noise.additive_white(truth, 10.0, 3).signals, noise.additive_white(truth, 10.0, 3).signals)


@settings(max_examples=20, deadline=None)
@given(snr_db=st.floats(-15, 40), seed=st.integers(0, 2**31))
def test_additive_white_meets_snr_for_any_seed(snr_db, seed):
    truth = _truth(40, 250, 1)
    e = noise.additive_white(truth, snr_db, seed).signals - truth.signals
    snr = noise.pooled_power(truth.signals) / noise.pooled_power(e)
    assert snr == pytest.approx(noise.db_to_linear(snr_db), rel=0.05)


def test_scale_to_snr():
    w = np.random.default_rng(0).standard_normal((3, 100))
    scaled = noise.scale_to_snr(w, 2.0, 10.0)
    assert noise.pooled_power(scaled) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        noise.scale_to_snr(np.zeros(4), 1.0, 0.0)


def test_pink_slope():
    n = 4096
    drive = np.random.default_rng(0).standard_normal((100, n))
    psd = np.mean(np.abs(np.fft.rfft(noise.pink_shaping(drive), axis=-1)) ** 2, axis=0)
    assert psd[0] < 1e-20
    f = np.arange(psd.size)
    band = (f >= 100) & (f <= 800)  # three octaves
    slope = np.polyfit(np.log10(f[band]), 10 * np.log10(psd[band]), 1)[0]
    assert slope == pytest.approx(-10.0, abs=1.0)
    # and flat input gives exactly 1/f
    flat = np.fft.irfft(np.ones(n // 2 + 1), n=n)
    spec = np.abs(np.fft.rfft(noise.pink_shaping(flat))) ** 2
    np.testing.assert_allclose(spec[1:], 1 / f[1:], rtol=1e-9)


def _free_scene(mics, L=128):
    region = acoustics.Box.centered((0.7, 0.7, 0.25))
    return acoustics.Scene(region, [-1.4, -1.4, 0.0], mics, mics, FS, L)


def test_localized_white_spectrum_is_flat_enough():
    scene = _free_scene(np.array([[0.1, 0.0, 0.0]]))
    n = 256
    periodograms = [np.abs(np.fft.rfft(noise.localized_noise(scene, "white", n, s, (2.0, 0.0, 0.0))[0])) ** 2
                    for s in range(200)]
    psd = np.mean(periodograms, axis=0)[1:-1]
    # 200 averaged chi-squared periodograms spread by about 1 / sqrt(200)
    assert np.std(psd) / np.mean(psd) < 0.2


def test_localized_noise_equidistant_mics_equal_power():
    mics = np.array([[0.2, 0.0, 0.0], [0.0, 0.2, 0.0], [-0.2, 0.0, 0.0]])
    scene = _free_scene(mics)
    w = noise.localized_noise(scene, "pink", 20_000, 1, noise_source=(0.0, 0.0, 0.5))
    powers = np.mean(w**2, axis=-1)
    np.testing.assert_allclose(powers, powers.mean(), rtol=0.05)


def test_localized_noise_in_a_room_and_errors():
    room = acoustics.Room((5.4, 4.3, 3.2), 0.36, corner=(-3.0, -2.3, -1.4))
    mics = np.array([[0.1, 0.1, 0.0], [-0.2, 0.0, 0.1]])
    region = acoustics.Box.centered((0.7, 0.7, 0.25))
    scene = acoustics.Scene(region, [-1.4, -1.4, 0.0], mics, mics, FS, 128, room=room)
    w = noise.localized_noise(scene, "white", 256, 3, noise_source=(1.6, 1.2, 0.6), max_order=2)
    assert w.shape == (2, 256) and np.all(np.isfinite(w)) and np.any(w)
    with pytest.raises(ValueError):
        noise.localized_noise(scene, "white", 256, 3)
    with pytest.raises(ValueError):
        noise.localized_noise(scene, "blue", 256, 3, noise_source=(1.6, 1.2, 0.6))


def _short_time_power(x, win):
    n = x.size // win
    return np.mean(x[:n * win].reshape(n, win) ** 2, axis=-1)


def test_wind_noise_is_low_frequency():
    w = noise.wind_noise(16_000, FS, 0)
    P = np.abs(np.fft.rfft(w)) ** 2
    f = np.fft.rfftfreq(w.size, 1 / FS)
    assert np.sum(f * P) / np.sum(P) < 100


def test_wind_noise_is_gusty():
    ratios = []
    for seed in range(20):
        p = _short_time_power(noise.wind_noise(int(10 * FS), FS, seed), int(0.1 * FS))
        ratios.append(p.max() / np.median(p))
    assert np.median(ratios) > 3


def test_wind_mics_are_uncorrelated():
    w = noise.wind_interference(3, 8000, FS, 7)
    assert w.shape == (3, 8000)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = w[i] - w[i].mean(), w[j] - w[j].mean()
            xc = np.correlate(a, b, "full") / np.sqrt(np.sum(a * a) * np.sum(b * b))
            # lags within the carrier correlation time
            mid = a.size - 1
            assert np.max(np.abs(xc[mid - 50:mid + 51])) < 0.1
    np.testing.assert_array_equal(w, noise.wind_interference(3, 8000, FS, 7))
    with pytest.raises(ValueError):
        noise.wind_noise(0, FS, 1)


def test_measure_snr():
    assert noise.measure_snr(2.0, 1.0) == 1.0
    assert noise.measure_snr(1.0, 1.0) == 0.0
    assert noise.measure_snr(11.0, 1.0) == 10.0
    assert estimator.select_lambda(noise.measure_snr(11.0, 1.0)) == pytest.approx(0.01, rel=1e-15)
    with pytest.raises(ValueError):
        noise.measure_snr(1.0, 0.0)
    with pytest.raises(ValueError):
        noise.measure_snr(-1.0, 1.0)


def test_db_to_linear():
    assert noise.db_to_linear(20.0) == pytest.approx(100.0)
    assert noise.db_to_linear(-10.0) == pytest.approx(0.1)
