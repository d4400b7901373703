"""Redundancy-free DFT for real signals and operators on the frequency domain

Time-domain signals live in R^L. Their frequency-domain counterparts hold the
first L_f = floor(L/2) + 1 bins, where bin 0 and (for even L) bin L/2 are real.
The transform uses the acoustics time convention, with a positive exponent in
the forward direction,

    (F a)_l = sum_n exp(+2 pi j n l / L) a_n,           0 <= l < L_f
    (F^-1 b)_n = Re[ sum_l c_l exp(-2 pi j n l / L) b_l ],

with c_l = 2/L for interior bins and 1/L for bin 0 and the Nyquist bin. With the
inner product <a, b>_f = sum_l c_l Re[a_l conj(b_l)] the transform is unitary.

numpy's FFT uses the opposite sign, so forward is conj(rfft) and the inverse is
irfft of the conjugate.

All functions accept stacks of signals along leading axes.
"""
from dataclasses import dataclass, field

import numpy as np

REAL_BIN_TOL = 1e-12


@dataclass(frozen=True)
class DftPlan:
    """Sizes and inner-product weights for signals of length L"""
    L: int
    num_freqs: int = field(init=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"signal length must be a positive integer, got {self.L}")
        object.__setattr__(self, "L", int(self.L))
        num_freqs = self.L // 2 + 1
        c = np.full(num_freqs, 2.0 / self.L)
        c[0] = 1.0 / self.L
        if self.L % 2 == 0:
            c[-1] = 1.0 / self.L
        c.flags.writeable = False
        object.__setattr__(self, "num_freqs", num_freqs)
        object.__setattr__(self, "weights", c)

    @property
    def real_bins(self):
        """Indices of the bins constrained to be real"""
        if self.has_nyquist:
            return (0, self.num_freqs - 1) if self.num_freqs > 1 else (0,)
        return (0,)

    @property
    def has_nyquist(self):
        return self.L % 2 == 0

    def angular_freqs(self, samplerate):
        """omega_l = 2 pi fs l / L in rad/s"""
        return 2 * np.pi * samplerate * np.arange(self.num_freqs) / self.L

    def freqs(self, samplerate):
        return samplerate * np.arange(self.num_freqs) / self.L


def _check_length(x, n, what):
    if x.shape[-1] != n:
        raise ValueError(f"{what} has length {x.shape[-1]} along the last axis, expected {n}")


def _real_bin_residue(plan, a):
    idx = list(plan.real_bins)
    return np.abs(a[..., idx].imag)


def forward(plan, x):
    """Forward transform of real signals of length L

    Parameters
    ----------
    plan : DftPlan
    x : ndarray of shape (..., L)

    Returns
    -------
    a : ndarray of shape (..., L_f), complex
        bins 0 and L/2 have exactly zero imaginary part
    """
    x = np.asarray(x, dtype=float)
    _check_length(x, plan.L, "time signal")
    a = np.conj(np.fft.rfft(x, axis=-1))
    scale = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(_real_bin_residue(plan, a) > REAL_BIN_TOL * np.maximum(scale, 1.0)):
        raise FloatingPointError("imaginary residue on a real-valued bin")
    for l in plan.real_bins:
        a[..., l] = a[..., l].real
    return a


def check_admissible(plan, a, tol=REAL_BIN_TOL):
    """Raise ValueError if a violates the real-bin constraints

    The imaginary part of bin 0 and of the Nyquist bin must be below
    tol times the norm of the signal (with a floor of tol in absolute terms).
    """
    a = np.asarray(a)
    _check_length(a, plan.num_freqs, "frequency signal")
    if not np.iscomplexobj(a):
        return
    scale = np.max(np.abs(a), axis=-1, keepdims=True) if a.size else 0.0
    if np.any(_real_bin_residue(plan, a) > tol * np.maximum(scale, 1.0)):
        raise ValueError("frequency signal has a nonzero imaginary part on a real-valued bin")


def inverse(plan, a):
    """Inverse transform, returning real signals of length L

    Parameters
    ----------
    plan : DftPlan
    a : ndarray of shape (..., L_f)

    Returns
    -------
    x : ndarray of shape (..., L)
    """
    a = np.asarray(a)
    check_admissible(plan, a)
    return np.fft.irfft(np.conj(a), n=plan.L, axis=-1)


def inner_t(x, y):
    """Euclidean inner product on the time domain, summed over the last axis"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError("signals have different lengths")
    return np.sum(x * y, axis=-1)


def inner_f(plan, a, b):
    """Weighted inner product sum_l c_l Re[a_l conj(b_l)]"""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_length(a, plan.num_freqs, "first argument")
    _check_length(b, plan.num_freqs, "second argument")
    return np.sum(plan.weights * np.real(a * np.conj(b)), axis=-1)


def circulant(g):
    """Circulant matrices T[n, n'] = g[(n - n') mod L] for stacked first columns g"""
    g = np.asarray(g)
    L = g.shape[-1]
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    return g[..., idx]


def freq_op_to_time_op(plan, diag):
    """Real matrix of the time-domain operator F^-1 diag(A) F

    A diagonal operator on the frequency domain acts as a circular convolution in
    time, so the matrix Re[B C diag(A) F] is circulant with first column
    F^-1 applied to the diagonal.

    Parameters
    ----------
    plan : DftPlan
    diag : ndarray of shape (..., L_f)
        diagonal of the operator. Bins 0 and L/2 must be real.

    Returns
    -------
    ndarray of shape (..., L, L)
    """
    diag = np.asarray(diag)
    _check_length(diag, plan.num_freqs, "operator diagonal")
    return circulant(inverse(plan, diag))


def check_admissible_operator(plan, A, tol=REAL_BIN_TOL):
    """Raise ValueError unless A has the block form that maps admissible signals to admissible signals

    Rows and columns of the real bins may only couple to each other, and those
    couplings must be real.
    """
    A = np.asarray(A)
    n = plan.num_freqs
    if A.shape[-2:] != (n, n):
        raise ValueError(f"operator must have shape ({n}, {n}), got {A.shape[-2:]}")
    real = list(plan.real_bins)
    interior = [l for l in range(n) if l not in real]
    scale = max(np.max(np.abs(A)), 1.0) if A.size else 1.0
    if interior:
        coupling = np.concatenate([A[..., real, :][..., interior].ravel(),
                                   A[..., interior, :][..., real].ravel()])
        if np.any(np.abs(coupling) > tol * scale):
            raise ValueError("operator couples a real-valued bin to a complex bin")
    block = A[..., real, :][..., real]
    if np.iscomplexobj(block) and np.any(np.abs(block.imag) > tol * scale):
        raise ValueError("operator has complex entries between real-valued bins")


def adjoint_f(plan, A):
    """Adjoint C^-1 A^H C of an operator on the frequency domain"""
    A = np.asarray(A)
    check_admissible_operator(plan, A)
    c = plan.weights
    return (np.conj(np.swapaxes(A, -1, -2)) * c[None, :]) / c[:, None]


def to_real_coords(plan, a):
    """Isomorphism S onto R^L: real parts of all bins, then imaginary parts of the complex bins"""
    a = np.asarray(a)
    check_admissible(plan, a)
    interior = [l for l in range(plan.num_freqs) if l not in plan.real_bins]
    return np.concatenate([a.real, a[..., interior].imag], axis=-1)


def from_real_coords(plan, v):
    """Inverse of to_real_coords"""
    v = np.asarray(v, dtype=float)
    _check_length(v, plan.L, "real coordinate vector")
    n = plan.num_freqs
    interior = [l for l in range(n) if l not in plan.real_bins]
    a = v[..., :n].astype(complex)
    a[..., interior] += 1j * v[..., n:]
    return a
