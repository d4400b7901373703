"""Kernel ridge regression of discrete-time sound fields

The coefficients of the estimate solve

    (Gamma~ + lam * Q~^-1) a = h

where Gamma~ is the stacked time-domain kernel and Q~ a diagonal time-domain data
weighting. Without data weighting (or with a constant envelope) the system
decouples over frequency into L_f Hermitian M x M systems, which is what
``fit`` solves. A non-constant envelope couples the frequencies, and the full
real (M L) x (M L) system is solved instead.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as splin
from scipy.spatial.distance import cdist
from scipy.special import spherical_jn

from tdkrr import kernels, spectral


@dataclass(frozen=True)
class RirData:
    """Measured impulse responses

    Attributes
    ----------
    positions : ndarray of shape (M, 3)
    signals : ndarray of shape (M, L)
    fs : float
    """
    positions: np.ndarray
    signals: np.ndarray
    fs: float

    def __post_init__(self):
        pos = kernels._as_points(self.positions)
        sig = np.asarray(self.signals, dtype=float)
        if sig.ndim != 2:
            raise ValueError("signals must have shape (M, L)")
        if pos.shape[0] != sig.shape[0]:
            raise ValueError(f"{pos.shape[0]} positions but {sig.shape[0]} signals")
        if pos.shape[0] < 1:
            raise ValueError("at least one microphone is required")
        if not np.all(np.isfinite(sig)):
            raise ValueError("signals must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "signals", sig)

    @property
    def num_mics(self):
        return self.signals.shape[0]

    @property
    def L(self):
        return self.signals.shape[1]

    def with_signals(self, signals):
        return RirData(self.positions, signals, self.fs)


@dataclass(frozen=True)
class DataWeighting:
    """Per-microphone envelopes q~_m forming the diagonal data weighting"""
    envelopes: np.ndarray
    q_min: float = 1e-6

    def __post_init__(self):
        env = np.asarray(self.envelopes, dtype=float)
        if env.ndim == 1:
            env = env[None, :]
        if self.q_min <= 0:
            raise ValueError("q_min must be positive")
        if np.any(env < self.q_min) or not np.all(np.isfinite(env)):
            raise ValueError("envelope entries must be finite and at least q_min")
        object.__setattr__(self, "envelopes", env)

    @classmethod
    def uniform(cls, num_mics, L):
        return cls(np.ones((num_mics, L)))

    def constant_value(self):
        """The common value if every entry is equal, else None"""
        v = self.envelopes.flat[0]
        return v if np.all(self.envelopes == v) else None


@dataclass(frozen=True)
class FieldEstimate:
    """Fitted sound field, evaluable at any position

    Attributes
    ----------
    coefficients : ndarray of shape (M, L)
    positions : ndarray of shape (M, 3)
    spec : KernelSpec
    diagnostics : dict
    """
    coefficients: np.ndarray
    positions: np.ndarray
    spec: kernels.KernelSpec
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        pos = kernels._as_points(self.positions)
        if coef.shape != (pos.shape[0], self.spec.L):
            raise ValueError(f"coefficients have shape {coef.shape}, expected {(pos.shape[0], self.spec.L)}")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "positions", pos)

    def __call__(self, points):
        return evaluate(self, points)


def select_lambda(snr_linear, floor=0.0, divisor=10.0):
    """Regularization parameter max(floor, 1 / (divisor SNR)), by default divisor = 10"""
    if not snr_linear > 0:
        raise ValueError("SNR must be positive")
    if floor < 0 or divisor <= 0:
        raise ValueError("floor must be non-negative and divisor positive")
    return max(floor, 1.0 / (divisor * snr_linear))


def _check_data(data, spec):
    if data.L != spec.L:
        raise ValueError(f"data has length {data.L}, kernel expects {spec.L}")


def _solve_hermitian(A, b):
    """Solve A x = b for a Hermitian matrix, Cholesky first with an LU fallback"""
    try:
        c = splin.cho_factor(A, check_finite=False)
        return splin.cho_solve(c, b, check_finite=False)
    except np.linalg.LinAlgError:
        return splin.solve(A, b, check_finite=False)


def _min_norm_solve(K, b, rcond):
    """Minimum-norm least-squares solution for a Hermitian PSD matrix"""
    eig, vec = np.linalg.eigh(K)
    keep = eig > rcond * max(eig[-1], 0.0)
    inv = np.zeros_like(eig)
    inv[keep] = 1 / eig[keep]
    return vec @ (inv * (vec.conj().T @ b))


def _solve_per_frequency(data, lam, spec, min_norm=False, rcond=1e-10):
    plan = spec.plan
    K = kernels.kernel_bins(data.positions, data.positions, spec)
    H = spectral.forward(plan, data.signals)  # (M, L_f)
    A = np.empty_like(H)
    eye = np.eye(data.num_mics)
    min_eig = np.inf
    max_eig = 0.0
    for l in range(plan.num_freqs):
        eig = np.linalg.eigvalsh(K[l])
        min_eig = min(min_eig, eig[0])
        max_eig = max(max_eig, eig[-1])
        if lam == 0 and eig[0] <= 1e-14 * eig[-1]:
            if not min_norm:
                raise np.linalg.LinAlgError(f"kernel matrix is singular at bin {l} and lambda is zero")
            A[:, l] = _min_norm_solve(K[l], H[:, l], rcond)
            continue
        A[:, l] = _solve_hermitian(K[l] + lam * eye, H[:, l])
    for l in plan.real_bins:
        A[:, l] = A[:, l].real
    coef = spectral.inverse(plan, A)
    cond = max_eig / min_eig if min_eig > 0 else np.inf
    return coef, {"path": "per-frequency", "condition": cond, "lambda": lam}


def fit(data, lam, spec, min_norm=False):
    """Kernel ridge regression without data weighting

    Solves (Gamma~ + lam I) a = h through its per-frequency decoupling.

    Parameters
    ----------
    data : RirData
    lam : float
        regularization parameter, non-negative. lam = 0 interpolates the data
        exactly and fails if the kernel matrix is singular.
    spec : KernelSpec
    min_norm : bool
        with lam = 0, return the minimum-norm least-squares solution on
        singular bins instead of failing. Eigenvalues below 1e-10 times the
        largest are treated as zero.

    Returns
    -------
    FieldEstimate
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    _check_data(data, spec)
    coef, info = _solve_per_frequency(data, lam, spec, min_norm)
    return FieldEstimate(coef, data.positions, spec, info)


def fit_weighted(data, lam, spec, weighting, gram_matrix=None):
    """Kernel ridge regression with a diagonal time-domain data weighting

    Solves (Gamma~ + lam Q~^-1) a = h. Constant envelopes reduce to ``fit`` with
    a rescaled regularization parameter, other envelopes are solved as one dense
    real system of size M L.

    Parameters
    ----------
    data : RirData
    lam : float
    spec : KernelSpec
    weighting : DataWeighting
        one envelope per microphone, or a single envelope shared by all
    gram_matrix : ndarray of shape (M L, M L), optional
        precomputed ``kernels.gram(data.positions, spec)``, left unmodified.
        Saves the assembly when fitting the same geometry repeatedly.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    _check_data(data, spec)
    env = weighting.envelopes
    if env.shape[0] == 1 and data.num_mics > 1:
        env = np.broadcast_to(env, (data.num_mics, env.shape[1]))
    if env.shape != data.signals.shape:
        raise ValueError(f"envelopes have shape {env.shape}, data has {data.signals.shape}")

    const = weighting.constant_value()
    if const is not None or lam == 0:
        eff = 0.0 if lam == 0 else lam / const
        coef, info = _solve_per_frequency(data, eff, spec)
        return FieldEstimate(coef, data.positions, spec, info)

    if gram_matrix is None:
        gram_matrix = kernels.gram(data.positions, spec)
    else:
        n = data.num_mics * data.L
        if gram_matrix.shape != (n, n):
            raise ValueError(f"gram matrix has shape {gram_matrix.shape}, expected {(n, n)}")
    coef = _solve_dense(gram_matrix, lam / env.ravel(), data.signals.ravel())
    info = {"path": "dense", "lambda": lam,
            "condition": kernels.gram_condition(data.positions, spec)}
    return FieldEstimate(coef.reshape(data.signals.shape), data.positions, spec, info)


def _solve_dense(gram_matrix, diag, rhs):
    """Solve (G + diag(d)) x = rhs, working on a single copy of G"""
    def system():
        A = np.array(gram_matrix, dtype=float)
        A[np.diag_indices_from(A)] += diag
        return A

    try:
        c = splin.cho_factor(system(), overwrite_a=True, check_finite=False)
        return splin.cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return splin.solve(system(), rhs, assume_a="sym", overwrite_a=True, check_finite=False)


def evaluate(est, points):
    """Evaluate the estimated sound field at points

    Returns
    -------
    ndarray of shape (num_points, L)
    """
    spec = est.spec
    K = kernels.kernel_bins(points, est.positions, spec)  # (L_f, E, M)
    A = spectral.forward(spec.plan, est.coefficients)  # (M, L_f)
    U = np.einsum("lem,ml->el", K, A)
    for l in spec.plan.real_bins:
        U[:, l] = U[:, l].real
    return spectral.inverse(spec.plan, U)


def fit_per_frequency(data, lam, c=343.0):
    """Frequency-domain kernel ridge regression, solved bin by bin

    Reference solver of the single-frequency method, written independently of
    the time-domain machinery: numpy's real FFT, scipy's spherical Bessel
    function and a plain dense solve per bin. Every bin, including the Nyquist
    bin, uses the single-frequency kernel j0(k ||r - r'||).
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return PerFrequencyEstimate(data.positions, np.fft.rfft(data.signals, axis=-1),
                                data.L, data.fs, lam, c)


@dataclass(frozen=True)
class PerFrequencyEstimate:
    positions: np.ndarray
    data_freq: np.ndarray
    L: int
    fs: float
    lam: float
    c: float

    def evaluate_freq(self, points):
        """Estimates per bin at points, shape (num_points, L_f), numpy sign convention"""
        k = 2 * np.pi * np.fft.rfftfreq(self.L, 1 / self.fs) / self.c
        d_mm = cdist(self.positions, self.positions)
        d_em = cdist(np.atleast_2d(points), self.positions)
        M = self.positions.shape[0]
        est = np.empty((d_em.shape[0], k.shape[0]), dtype=complex)
        for l, kl in enumerate(k):
            K = spherical_jn(0, kl * d_mm)
            kappa = spherical_jn(0, kl * d_em)
            est[:, l] = kappa @ np.linalg.solve(K + self.lam * np.eye(M), self.data_freq[:, l])
        return est

    def evaluate(self, points):
        """Inverse FFT of the per-bin estimates, shape (num_points, L)"""
        return np.fft.irfft(self.evaluate_freq(points), n=self.L, axis=-1)
