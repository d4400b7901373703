"""Synthetic impulse responses and scene geometry

Free-field responses follow the Green's function exp(-jkd) / (4 pi d), realized
with Hann-windowed sinc fractional delay filters. Reverberant responses use an
image-source model of a shoebox room with a single reflection coefficient for
all walls. The coefficient is calibrated so that the simulated energy decay has
the requested T20 reverberation time. Eyring's formula is available as well, but
a shoebox image-source model decays more slowly than the diffuse-field theory
behind it, so it overshoots the target by roughly 50%.

All positions are in scene coordinates. A Room carries the position of its
minimum corner in those coordinates, so the region of interest can be centered
on the origin.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from tdkrr import spectral

FD_LENGTH = 81


class RT60Unmeasurable(ValueError):
    """The energy decay never spans the range needed for a fit"""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its minimum and maximum corners"""
    low: tuple
    high: tuple

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != (3,) or high.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        object.__setattr__(self, "low", tuple(low.tolist()))
        object.__setattr__(self, "high", tuple(high.tolist()))

    @classmethod
    def centered(cls, size, center=(0.0, 0.0, 0.0)):
        size = np.asarray(size, dtype=float)
        center = np.asarray(center, dtype=float)
        return cls(tuple(center - size / 2), tuple(center + size / 2))

    @property
    def size(self):
        return np.asarray(self.high) - np.asarray(self.low)

    @property
    def center(self):
        return (np.asarray(self.high) + np.asarray(self.low)) / 2

    def contains(self, points, tol=1e-12):
        points = np.atleast_2d(points)
        return np.all((points >= np.asarray(self.low) - tol) & (points <= np.asarray(self.high) + tol), axis=-1)


@dataclass(frozen=True)
class Room:
    """Shoebox room

    Attributes
    ----------
    dimensions : tuple of 3 floats, meters
    rt60 : float, seconds
    c : float
    fs : float
    corner : tuple of 3 floats
        position of the room's minimum corner in scene coordinates
    """
    dimensions: tuple
    rt60: float
    c: float = 343.0
    fs: float = 1600.0
    corner: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ValueError("room dimensions must be three positive numbers")
        if self.rt60 < 0:
            raise ValueError("rt60 must be non-negative")
        object.__setattr__(self, "dimensions", tuple(dims.tolist()))
        object.__setattr__(self, "corner", tuple(np.asarray(self.corner, dtype=float).tolist()))

    @property
    def box(self):
        return Box(self.corner, tuple(np.asarray(self.corner) + np.asarray(self.dimensions)))

    @property
    def volume(self):
        return float(np.prod(self.dimensions))

    @property
    def surface(self):
        lx, ly, lz = self.dimensions
        return 2 * (lx * ly + lx * lz + ly * lz)

    def eyring_coefficient(self):
        """Pressure reflection coefficient from Eyring's formula"""
        if self.rt60 == 0:
            return 0.0
        alpha = 1 - np.exp(-24 * np.log(10) * self.volume / (self.c * self.surface * self.rt60))
        return float(np.sqrt(1 - alpha))

    def reflection_coefficient(self):
        """Pressure reflection coefficient giving a simulated T20 equal to rt60

        See calibrate_reflection_coefficient.
        """
        if self.rt60 == 0:
            return 0.0
        return _calibrated(self.dimensions, self.rt60, self.c, self.fs)

    def default_max_order(self):
        return int(np.ceil(self.c * self.rt60 / min(self.dimensions))) + 2


@dataclass(frozen=True)
class Scene:
    """Geometry of one experiment

    Attributes
    ----------
    region : Box
    source : ndarray of shape (3,)
    mics : ndarray of shape (M, 3)
    eval_points : ndarray of shape (E, 3)
    fs : float
    L : int
    c : float
    room : Room or None
        None means free field
    """
    region: Box
    source: np.ndarray
    mics: np.ndarray
    eval_points: np.ndarray
    fs: float
    L: int
    c: float = 343.0
    room: Room = None

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float).reshape(3))
        object.__setattr__(self, "mics", np.atleast_2d(np.asarray(self.mics, dtype=float)))
        object.__setattr__(self, "eval_points", np.atleast_2d(np.asarray(self.eval_points, dtype=float)))
        if not np.all(self.region.contains(self.mics)):
            raise ValueError("microphones must lie inside the region")
        if not np.all(self.region.contains(self.eval_points)):
            raise ValueError("evaluation points must lie inside the region")
        if self.room is not None:
            rb = self.room.box
            if not (rb.contains(np.asarray(self.region.low)).all() and rb.contains(np.asarray(self.region.high)).all()):
                raise ValueError("region must lie inside the room")

    def rirs(self, points, max_order=None):
        """Impulse responses from the scene's source to points, shape (N, L)"""
        points = np.atleast_2d(points)
        if self.room is None:
            return np.stack([free_field_rir(self.source, p, self.fs, self.c, self.L) for p in points])
        return np.stack([image_source_rir(self.room, self.source, p, max_order, self.L) for p in points])


def _fd_taps(frac, length):
    """Windowed-sinc taps for fractional delays in [0, 1), shape (..., length + 1)

    The taps for delay mu are centered on (length - 1) / 2 + mu and normalized to
    unit DC gain. The extra tap keeps half-sample delays symmetric.
    """
    frac = np.asarray(frac, dtype=float)[..., None]
    m = np.arange(length + 1) - (length - 1) // 2
    x = m - frac
    # sin(pi (m - mu)) = -(-1)^m sin(pi mu), and the window by angle addition,
    # so the per-tap work is arithmetic only
    sign = np.where(m % 2 == 0, -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = sign * np.sin(np.pi * frac) / (np.pi * x)
    sinc = np.where(x == 0, 1.0, sinc)
    w = 2 * np.pi / (length + 1)
    window = 0.5 * (1 + np.cos(w * m) * np.cos(w * frac) + np.sin(w * m) * np.sin(w * frac))
    taps = sinc * window
    return taps / np.sum(taps, axis=-1, keepdims=True)


def fractional_delay_fir(delay_samples, length=FD_LENGTH):
    """Delay filter for a non-negative, possibly fractional, delay

    The integer part is applied as leading zeros, the fractional part by a
    Hann-windowed sinc. The response has length floor(delay) + length + 1 and
    group delay delay_samples + (length - 1) / 2.
    """
    if length < 3 or length % 2 == 0:
        raise ValueError("filter length must be odd and at least 3")
    if delay_samples < 0:
        raise ValueError("delay must be non-negative")
    whole = int(np.floor(delay_samples))
    taps = _fd_taps(delay_samples - whole, length)
    return np.concatenate([np.zeros(whole), taps])


def _accumulate(delays, gains, L, length=FD_LENGTH, chunk=20000):
    """Sum of delayed, scaled fractional delay filters, truncated to L samples"""
    out = np.zeros(L)
    delays = np.asarray(delays, dtype=float)
    gains = np.asarray(gains, dtype=float)
    keep = (delays < L) & (gains != 0)
    delays, gains = delays[keep], gains[keep]
    for start in range(0, delays.shape[0], chunk):
        d = delays[start:start + chunk]
        g = gains[start:start + chunk]
        whole = np.floor(d).astype(int)
        taps = _fd_taps(d - whole, length) * g[:, None]
        idx = whole[:, None] + np.arange(length + 1)[None, :]
        valid = idx < L
        out += np.bincount(idx[valid], weights=taps[valid], minlength=L)[:L]
    return out


def free_field_rir(src, mic, fs, c, L, length=FD_LENGTH):
    """Free-field impulse response 1 / (4 pi d) delayed by d fs / c samples

    The fractional delay filter adds a bulk delay of (length - 1) / 2 samples.
    """
    d = float(np.linalg.norm(np.asarray(src, dtype=float) - np.asarray(mic, dtype=float)))
    if d == 0:
        raise ValueError("source and microphone coincide")
    return _accumulate([d * fs / c], [1 / (4 * np.pi * d)], L, length)


def image_sources(room, src, max_order, max_dist=np.inf):
    """Image source positions and reflection counts for a shoebox room

    Returns
    -------
    positions : ndarray of shape (N, 3), scene coordinates
    orders : ndarray of shape (N,), total number of wall reflections
    """
    dims = np.asarray(room.dimensions)
    corner = np.asarray(room.corner)
    s = np.asarray(src, dtype=float) - corner
    axes_pos = []
    axes_ord = []
    for ax in range(3):
        n_max = max_order // 2 + 1
        if np.isfinite(max_dist):
            n_max = min(n_max, int(np.ceil(max_dist / (2 * dims[ax]))) + 1)
        n = np.arange(-n_max, n_max + 1)
        pos = []
        order = []
        for p in (0, 1):
            pos.append((1 - 2 * p) * s[ax] + 2 * n * dims[ax])
            order.append(np.abs(n - p) + np.abs(n))
        axes_pos.append(np.concatenate(pos))
        axes_ord.append(np.concatenate(order))
    px, py, pz = np.meshgrid(*axes_pos, indexing="ij")
    ox, oy, oz = np.meshgrid(*axes_ord, indexing="ij")
    positions = np.stack([px.ravel(), py.ravel(), pz.ravel()], axis=-1) + corner
    orders = (ox + oy + oz).ravel()
    keep = orders <= max_order
    return positions[keep], orders[keep]


def image_source_rir(room, src, mic, max_order=None, L=None, length=FD_LENGTH):
    """Shoebox impulse response by the image-source method

    Every image contributes a free-field response scaled by beta^order, where
    beta is the wall reflection coefficient. Images whose delay exceeds the
    signal length are skipped.
    """
    if L is None:
        raise ValueError("signal length L is required")
    box = room.box
    for name, p in (("source", src), ("microphone", mic)):
        p = np.asarray(p, dtype=float)
        if not np.all((p > np.asarray(box.low)) & (p < np.asarray(box.high))):
            raise ValueError(f"{name} must be strictly inside the room")
    if max_order is None:
        max_order = room.default_max_order()
    beta = room.reflection_coefficient()
    max_dist = (L + 1) * room.c / room.fs
    positions, orders = image_sources(room, src, max_order, max_dist)
    d = np.linalg.norm(positions - np.asarray(mic, dtype=float), axis=-1)
    gains = beta ** orders / (4 * np.pi * d)
    # direct path first, so that max_order = 0 reproduces free_field_rir exactly
    order = np.argsort(orders, kind="stable")
    return _accumulate(d[order] * room.fs / room.c, gains[order], L, length)


def _binned_response(room, beta, positions, orders, mic):
    d = np.linalg.norm(positions - mic, axis=-1)
    gains = beta ** orders / (4 * np.pi * d)
    return np.bincount(np.floor(d * room.fs / room.c).astype(int), weights=gains)


def calibrate_reflection_coefficient(room, src=None, mic=None):
    """Wall reflection coefficient for which the image-source T20 equals room.rt60

    The image contributions are summed per sample without the interpolation
    filters, and the coefficient is found by root finding on the T20 estimate of
    that response. The sum is coherent on purpose: with all coefficients
    positive, the late tail builds up a low-frequency component that decays more
    slowly than the summed image energies. The default positions are fixed off-center
    points, so the result depends on the room only.
    """
    if room.rt60 <= 0:
        return 0.0
    dims = np.asarray(room.dimensions)
    corner = np.asarray(room.corner)
    src = corner + dims * np.array([0.3, 0.35, 0.4]) if src is None else np.asarray(src, dtype=float)
    mic = corner + dims * np.array([0.6, 0.55, 0.5]) if mic is None else np.asarray(mic, dtype=float)
    max_dist = 2 * room.c * room.rt60
    positions, orders = image_sources(room, src, room.default_max_order(), max_dist)

    def t20(beta):
        edc = _edc_from_energy(_binned_response(room, beta, positions, orders, mic) ** 2)
        return _t20(edc, room.fs, min_r2=0.0)

    def err(beta):
        try:
            return t20(beta) - room.rt60
        except RT60Unmeasurable:
            # no measurable decay: either far too dry or far too live
            return -room.rt60 if beta < 0.5 else room.rt60

    lo, hi = 1e-3, 1 - 1e-6
    if err(lo) > 0:
        return float(lo)
    if err(hi) < 0:
        raise ValueError("reverberation time is too long for the simulated range")
    return float(brentq(err, lo, hi, xtol=1e-10))


@lru_cache(maxsize=64)
def _calibrated(dimensions, rt60, c, fs):
    return calibrate_reflection_coefficient(Room(dimensions, rt60, c, fs))


def highpass_response(plan, cutoff, fs, order=4):
    """Squared Butterworth magnitude 1 / (1 + (fc / f)^(2 order)), zero at DC"""
    f = plan.freqs(fs)
    resp = np.zeros(plan.num_freqs)
    nz = f > 0
    resp[nz] = 1 / (1 + (cutoff / f[nz]) ** (2 * order))
    return resp


def zero_phase_highpass(x, cutoff, fs, order=4):
    """Zero-phase high-pass filter applied circularly in the frequency domain

    Parameters
    ----------
    x : ndarray of shape (..., L)
    cutoff : float
        -3 dB frequency in Hz
    fs : float
    """
    if not 0 < cutoff < fs / 2:
        raise ValueError("cutoff must lie strictly between 0 and fs / 2")
    x = np.asarray(x, dtype=float)
    plan = spectral.DftPlan(x.shape[-1])
    return spectral.inverse(plan, spectral.forward(plan, x) * highpass_response(plan, cutoff, fs, order))


def _edc_from_energy(energy):
    tail = np.cumsum(np.asarray(energy, dtype=float)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(tail / tail[0])


def schroeder_decay(x):
    """Energy decay curve in dB, normalized to 0 dB at the start"""
    return _edc_from_energy(np.asarray(x, dtype=float) ** 2)


def estimate_rt60(x, fs, min_r2=0.98):
    """Reverberation time from a T20 fit of the Schroeder decay curve

    A line is fitted to the energy decay curve between -5 and -25 dB and
    extrapolated to -60 dB.

    Raises
    ------
    RT60Unmeasurable
        if the decay does not reach -25 dB or the decay is not close to linear
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("signal is zero")
    return _t20(schroeder_decay(x), fs, min_r2)


def _t20(edc, fs, min_r2):
    below5 = np.nonzero(edc <= -5)[0]
    below25 = np.nonzero(edc <= -25)[0]
    if below5.size == 0 or below25.size == 0:
        raise RT60Unmeasurable("energy decay does not span -5 to -25 dB")
    start, stop = below5[0], below25[0]
    if stop - start < 3:
        raise RT60Unmeasurable("too few samples in the decay range")
    t = np.arange(start, stop + 1) / fs
    y = edc[start:stop + 1]
    slope, intercept = np.polyfit(t, y, 1)
    r2 = 1 - np.sum((y - (slope * t + intercept)) ** 2) / np.sum((y - y.mean()) ** 2)
    if slope >= 0 or r2 < min_r2:
        raise RT60Unmeasurable(f"decay is not linear (r^2 = {r2:.3f})")
    return -60.0 / slope


def sample_scene(region, M, seed):
    """M positions drawn uniformly from the region, shape (M, 3)"""
    if M < 1:
        raise ValueError("M must be at least 1")
    size = region.size
    if np.any(size <= 0):
        raise ValueError("region is degenerate")
    rng = np.random.default_rng(seed)
    return np.asarray(region.low) + rng.uniform(size=(M, 3)) * size


def eval_grid(region, spacing):
    """Centered grid with the given spacing, floor(extent / spacing) points per axis

    A 70 x 70 x 25 cm region at 7.5 cm spacing gives 9 x 9 x 3 points.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    size = region.size
    counts = np.floor(size / spacing + 1e-9).astype(int)
    if np.any(counts < 1):
        raise ValueError("spacing is larger than the region")
    axes = [c + (np.arange(n) - (n - 1) / 2) * spacing for c, n in zip(region.center, counts)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)
