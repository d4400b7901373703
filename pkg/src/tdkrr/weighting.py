"""Time-domain data weighting envelopes

An envelope q~ approximates the magnitude of an impulse response over time and
is used as the diagonal of the data weighting. Every envelope is clamped from
below at q_min so that the weighting stays invertible.
"""
from dataclasses import dataclass, replace

import numpy as np

KINDS = ("uniform", "exponential", "linear", "oracle")


@dataclass(frozen=True)
class EnvelopeParams:
    """Parameters of a model-based envelope

    Attributes
    ----------
    kind : str
        one of 'uniform', 'exponential', 'linear', 'oracle'
    l0 : int
        propagation delay in samples, including any equipment delay
    tau_init : float
        onset time constant in seconds
    tau_decay : float
        decay time constant in seconds, normally the RT60
    fs : float
    q_min : float
    individual : bool
    """
    kind: str = "exponential"
    l0: int = 0
    tau_init: float = 0.05
    tau_decay: float = 0.3
    fs: float = 1600.0
    q_min: float = 1e-6
    individual: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.q_min <= 0:
            raise ValueError("q_min must be positive")
        if self.tau_init <= 0 or self.tau_decay <= 0:
            raise ValueError("time constants must be positive")
        if self.l0 < 0 or int(self.l0) != self.l0:
            raise ValueError("l0 must be a non-negative integer")
        object.__setattr__(self, "l0", int(self.l0))


def _check_l0(p, L):
    if p.l0 >= L:
        raise ValueError(f"l0 = {p.l0} must be smaller than the signal length {L}")


def envelope_uniform(L):
    return np.ones(L)


def envelope_exponential(p, L):
    """Exponential onset and decay around the propagation delay l0

    Rises as 10^(3 (l - l0) / (tau_init fs)) before l0, decays as
    10^(-3 (l - l0) / (tau_decay fs)) from l0, so the decay reaches -60 dB
    after tau_decay seconds.
    """
    _check_l0(p, L)
    rel = np.arange(L) - p.l0
    tau = np.where(rel < 0, -p.tau_init, p.tau_decay)
    q = 10.0 ** (-3 * rel / (tau * p.fs))
    return np.maximum(p.q_min, q)


def envelope_linear(p, L):
    """Linear ramp up to l0, then linear decay to zero over tau_decay seconds"""
    _check_l0(p, L)
    l = np.arange(L, dtype=float)
    q = np.zeros(L)
    if p.l0 > 0:
        pre = l < p.l0
        q[pre] = l[pre] / p.l0
    support = (l >= p.l0) & (l <= p.l0 + p.fs * p.tau_decay)
    q[support] = 1 - (l[support] - p.l0) / (p.fs * p.tau_decay)
    return np.maximum(p.q_min, q)


def envelope_oracle(truth, individual, q_min=1e-6, normalize=False):
    """Envelopes from the absolute value of the true impulse responses

    Parameters
    ----------
    truth : ndarray of shape (M, L)
    individual : bool
        if False, the mean of |h_m| over microphones is used for all of them
    q_min : float
    normalize : bool
        scale so the largest entry is 1, matching the peak of the model-based
        envelopes. The envelope scale sets the effective regularization.

    Returns
    -------
    ndarray of shape (M, L)
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if truth.shape[0] == 0:
        raise ValueError("at least one impulse response is required")
    env = np.abs(truth)
    if not individual:
        env = np.broadcast_to(env.mean(axis=0), env.shape).copy()
    if normalize:
        peak = env.max(axis=-1, keepdims=True)
        env = np.divide(env, peak, out=np.zeros_like(env), where=peak > 0)
    return np.maximum(q_min, env)


def make_envelope(p, L):
    """Envelope for a model-based kind"""
    if p.kind == "uniform":
        return envelope_uniform(L)
    if p.kind == "exponential":
        return envelope_exponential(p, L)
    if p.kind == "linear":
        return envelope_linear(p, L)
    raise ValueError("oracle envelopes need the true responses, use envelope_oracle")


def _lower_median(values):
    v = np.sort(np.asarray(values, dtype=float))
    return v[(len(v) - 1) // 2]


def aggregate_params(per_mic):
    """Shared parameters from per-microphone ones: minimum delay and median decay"""
    per_mic = list(per_mic)
    if not per_mic:
        raise ValueError("at least one parameter set is required")
    return replace(per_mic[0],
                   l0=min(p.l0 for p in per_mic),
                   tau_decay=float(_lower_median([p.tau_decay for p in per_mic])),
                   individual=False)


def envelopes_for_mics(per_mic, L, truth=None, normalize_oracle=False):
    """Stack of envelopes for all microphones, shape (M, L)

    Parameters
    ----------
    per_mic : list of EnvelopeParams
        one per microphone. For non-individual envelopes the parameters are
        aggregated first.
    L : int
    truth : ndarray of shape (M, L), optional
        required for oracle envelopes
    normalize_oracle : bool
        passed on to envelope_oracle
    """
    first = per_mic[0]
    if first.kind == "oracle":
        if truth is None:
            raise ValueError("oracle envelopes need the true responses")
        return envelope_oracle(truth, first.individual, first.q_min, normalize_oracle)
    if first.kind == "uniform":
        return np.ones((len(per_mic), L))
    if first.individual:
        return np.stack([make_envelope(p, L) for p in per_mic])
    shared = make_envelope(aggregate_params(per_mic), L)
    return np.tile(shared, (len(per_mic), 1))
