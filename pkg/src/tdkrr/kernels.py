"""Reproducing kernels for discrete-time sound fields

The kernel of the sound field space is diagonal in frequency. For bins below
the Nyquist bin it is the spherical Bessel kernel j0(omega_l / c * ||r - r'||),
or with a von Mises-Fisher directional weighting

    j0(sqrt(xi^T xi)),   xi = omega_l / c * (r - r') - 1j * beta_l * eta_l.

The Nyquist bin of an even-length signal uses the real-valued cosine basis, giving
0.5 * (j0(k ||r - r'||) + j0(k ||r + r'||)). Note that this term depends on the
absolute position, so coordinates should be chosen with the origin inside the
region of interest.

In the time domain each kernel block is circulant, with first column given by the
inverse DFT of the diagonal.
"""
from dataclasses import dataclass, field

import numpy as np

from tdkrr import spectral

_SERIES_CUTOFF = 1e-4


def sph_j0(z):
    """Zeroth order spherical Bessel function sin(z)/z for real or complex z"""
    z = np.asarray(z)
    small = np.abs(z) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    z2 = z * z
    series = 1 - z2 / 6 + z2 * z2 / 120
    return np.where(small, series, np.sin(safe) / safe)


def _as_points(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"positions must have shape (N, 3), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("positions must be finite")
    return points


@dataclass(frozen=True)
class KernelSpec:
    """Kernel configuration for signals of length L sampled at fs

    Attributes
    ----------
    L : int
        signal length
    fs : float
        sampling rate in Hz
    c : float
        speed of sound in m/s
    beta : ndarray of shape (L_f,)
        strength of the directional weighting per frequency. All zeros gives
        the diffuse kernel. Must be zero at the Nyquist bin.
    eta : ndarray of shape (L_f, 3)
        unit direction of the weighting per frequency. This is the preferred
        propagation direction, i.e. pointing from the source into the region.
    """
    L: int
    fs: float
    c: float = 343.0
    beta: np.ndarray = None
    eta: np.ndarray = None
    plan: spectral.DftPlan = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        plan = spectral.DftPlan(self.L)
        object.__setattr__(self, "plan", plan)
        if self.c <= 0 or self.fs <= 0:
            raise ValueError("speed of sound and sampling rate must be positive")
        beta = np.zeros(plan.num_freqs) if self.beta is None else np.array(self.beta, dtype=float)
        beta = np.broadcast_to(beta, (plan.num_freqs,)).copy()
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite and non-negative")
        if plan.has_nyquist and plan.num_freqs > 1 and beta[-1] != 0:
            raise ValueError("beta must be zero at the Nyquist bin")
        if self.eta is None:
            eta = np.tile([1.0, 0.0, 0.0], (plan.num_freqs, 1))
        else:
            eta = np.broadcast_to(np.array(self.eta, dtype=float), (plan.num_freqs, 3)).copy()
        if np.any(np.abs(np.linalg.norm(eta, axis=-1) - 1) > 1e-12):
            raise ValueError("eta must contain unit vectors")
        beta.flags.writeable = False
        eta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def diffuse(cls, L, fs, c=343.0):
        return cls(L, fs, c)

    @classmethod
    def directional(cls, L, fs, beta, eta, c=343.0):
        """Directional kernel with a scalar or per-bin strength

        A scalar beta is applied to every bin except the Nyquist bin, which is
        set to zero. eta is normalized to unit length.
        """
        plan = spectral.DftPlan(L)
        beta_arr = np.broadcast_to(np.asarray(beta, dtype=float), (plan.num_freqs,)).copy()
        if np.ndim(beta) == 0 and plan.has_nyquist and plan.num_freqs > 1:
            beta_arr[-1] = 0.0
        eta = np.asarray(eta, dtype=float)
        eta = eta / np.linalg.norm(eta, axis=-1, keepdims=True)
        return cls(L, fs, c, beta_arr, eta)

    @property
    def mode(self):
        return "diffuse" if not np.any(self.beta) else "directional"

    @property
    def num_freqs(self):
        return self.plan.num_freqs

    @property
    def wave_numbers(self):
        return self.plan.angular_freqs(self.fs) / self.c


def kappa_single(omega, r, rp, c):
    """Single-frequency kernel j0(omega ||r - r'|| / c)"""
    if c <= 0 or np.any(np.asarray(omega) < 0):
        raise ValueError("requires c > 0 and omega >= 0")
    dist = np.linalg.norm(np.asarray(r, dtype=float) - np.asarray(rp, dtype=float), axis=-1)
    return sph_j0(np.asarray(omega) * dist / c)


def kappa_dir(l, r, rp, spec):
    """Directionally weighted kernel for bin l (not the Nyquist bin)"""
    if not 0 <= l < spec.num_freqs:
        raise IndexError(f"bin {l} out of range")
    if spec.plan.has_nyquist and l == spec.num_freqs - 1 and spec.L > 1:
        raise ValueError("the Nyquist bin uses the real-valued kernel, see gamma_freq")
    if spec.beta[l] == 0:
        return kappa_single(spec.plan.angular_freqs(spec.fs)[l], r, rp, spec.c)
    k = spec.wave_numbers[l]
    xi = k * (np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)) - 1j * spec.beta[l] * spec.eta[l]
    return sph_j0(np.sqrt(np.sum(xi * xi, axis=-1)))


def kernel_bins(points_a, points_b, spec):
    """Frequency-domain kernel between two point sets, all bins at once

    Parameters
    ----------
    points_a : ndarray of shape (Na, 3)
    points_b : ndarray of shape (Nb, 3)
    spec : KernelSpec

    Returns
    -------
    K : ndarray of shape (L_f, Na, Nb), complex
        K[l, i, j] is the diagonal entry l of the kernel Gamma(a_i, b_j)
    """
    a = _as_points(points_a)
    b = _as_points(points_b)
    k = spec.wave_numbers
    diff = a[:, None, :] - b[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    K = np.empty((spec.num_freqs, a.shape[0], b.shape[0]), dtype=complex)

    nyq = spec.num_freqs - 1 if (spec.plan.has_nyquist and spec.L > 1) else None
    for l in range(spec.num_freqs):
        if l == nyq:
            dist_sum = np.linalg.norm(a[:, None, :] + b[None, :, :], axis=-1)
            K[l] = 0.5 * (sph_j0(k[l] * dist) + sph_j0(k[l] * dist_sum))
        elif spec.beta[l] == 0:
            K[l] = sph_j0(k[l] * dist)
        else:
            # xi^T xi expanded to avoid forming the complex 3-vectors
            beta = spec.beta[l]
            proj = diff @ spec.eta[l]
            z2 = (k[l] * dist) ** 2 - beta**2 - 2j * k[l] * beta * proj
            K[l] = sph_j0(np.sqrt(z2))
    return K


def gamma_freq(r, rp, spec):
    """Diagonal of the frequency-domain kernel Gamma(r, r'), shape (L_f,)"""
    return kernel_bins(r, rp, spec)[:, 0, 0]


def gamma_time(r, rp, spec):
    """Time-domain kernel F^-1 Gamma(r, r') F as a real L x L matrix"""
    return spectral.freq_op_to_time_op(spec.plan, gamma_freq(r, rp, spec))


def _expand_blocks(K, plan):
    """Turn per-bin kernel matrices (L_f, Na, Nb) into the real (Na L, Nb L) block matrix"""
    na, nb = K.shape[1:]
    L = plan.L
    # first column of every circulant block, shape (Na, Nb, L)
    g = spectral.inverse(plan, np.moveaxis(K, 0, -1))
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    out = np.empty((na * L, nb * L))
    for i in range(na):
        # (Nb, L, L) -> (L, Nb * L)
        out[i * L:(i + 1) * L, :] = np.moveaxis(g[i][:, idx], 0, 1).reshape(L, nb * L)
    return out


def gram(points, spec):
    """Stacked kernel matrix of shape (M L, M L) with blocks Gamma~(r_i, r_j)"""
    points = _as_points(points)
    if points.shape[0] == 0:
        raise ValueError("gram requires at least one point")
    return _expand_blocks(kernel_bins(points, points, spec), spec.plan)


def cross_kernel(r, points, spec):
    """Row block [Gamma~(r, r_1), ..., Gamma~(r, r_M)] of shape (L, M L)"""
    points = _as_points(points)
    if points.shape[0] == 0:
        raise ValueError("cross_kernel requires at least one point")
    return _expand_blocks(kernel_bins(r, points, spec), spec.plan)


def fibonacci_sphere(n):
    """Near-uniform points on the unit sphere, shape (n, 3)"""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    rho = np.sqrt(1 - z**2)
    phi = np.pi * (1 + np.sqrt(5)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def gamma_quadrature(r, rp, spec, n_dirs=10000):
    """Kernel diagonal computed by integrating plane waves over the sphere

    Evaluates the integral of E(r, d) (W*W)^-1(d) E(-r', d) with equal-weight
    Fibonacci directions under the normalized sphere measure, for which the
    integral of exp(-1j r^T d) equals j0(||r||). Independent of the closed form
    in gamma_freq, and intended as a check on it.
    """
    if n_dirs < 100:
        raise ValueError("n_dirs must be at least 100")
    r = np.asarray(r, dtype=float).reshape(3)
    rp = np.asarray(rp, dtype=float).reshape(3)
    dirs = fibonacci_sphere(n_dirs)
    k = spec.wave_numbers
    nyq = spec.num_freqs - 1 if (spec.plan.has_nyquist and spec.L > 1) else None

    proj_diff = dirs @ (r - rp)
    proj_sum = dirs @ (r + rp)
    out = np.empty(spec.num_freqs, dtype=complex)
    for l in range(spec.num_freqs):
        if l == nyq:
            vals = 0.5 * (np.cos(k[l] * proj_diff) + np.cos(k[l] * proj_sum))
        else:
            weight = np.exp(-spec.beta[l] * (dirs @ spec.eta[l]))
            vals = np.exp(-1j * k[l] * proj_diff) * weight
        out[l] = np.mean(vals)
    return out


def gram_condition(points, spec):
    """Condition number of the stacked time-domain kernel, from its per-bin blocks"""
    K = kernel_bins(points, points, spec)
    eig = np.linalg.eigvalsh(K)
    return np.max(eig) / np.min(eig) if np.min(eig) > 0 else np.inf
