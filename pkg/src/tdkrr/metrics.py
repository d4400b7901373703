"""Normalized mean square error, total and per frequency"""
from dataclasses import dataclass

import numpy as np

from tdkrr import spectral


@dataclass(frozen=True)
class NmseReport:
    total_db: float
    per_frequency_db: np.ndarray
    n_eval_points: int


def _pair(est, truth):
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != truth.shape:
        raise ValueError(f"estimate has shape {est.shape}, truth has {truth.shape}")
    return est, truth


def nmse(est, truth):
    """sum ||est - truth||^2 / sum ||truth||^2 over all evaluation points, linear scale"""
    est, truth = _pair(est, truth)
    den = np.sum(truth**2)
    if den == 0:
        raise ValueError("true signals are identically zero")
    return float(np.sum((est - truth) ** 2) / den)


def per_frequency_terms(est, truth):
    """Numerators and denominators of the per-bin NMSE, each of shape (L_f,)

    Both carry the inner-product weights c_l, so their sums equal the time
    domain error and signal energies.
    """
    est, truth = _pair(est, truth)
    plan = spectral.DftPlan(truth.shape[-1])
    E = spectral.forward(plan, est)
    T = spectral.forward(plan, truth)
    num = plan.weights * np.sum(np.abs(E - T) ** 2, axis=0)
    den = plan.weights * np.sum(np.abs(T) ** 2, axis=0)
    return num, den


def nmse_per_frequency(est, truth, normalize="bin"):
    """NMSE per frequency bin, linear scale

    Parameters
    ----------
    est, truth : ndarray of shape (E, L)
    normalize : {'bin', 'total'}
        'bin' divides each bin's error by that bin's signal energy, 'total'
        by the signal energy over all bins. With 'total' the values sum to the
        total NMSE.

    Returns
    -------
    ndarray of shape (L_f,)
        NaN where the true signal has no energy in a bin (only with 'bin')
    """
    num, den = per_frequency_terms(est, truth)
    if normalize == "total":
        total = np.sum(den)
        if total == 0:
            raise ValueError("true signals are identically zero")
        return num / total
    if normalize != "bin":
        raise ValueError(f"unknown normalization {normalize!r}")
    out = np.full(num.shape, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


def to_db(x):
    """10 log10(x) for positive x"""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("dB conversion needs positive values")
    out = 10 * np.log10(x)
    return float(out) if out.ndim == 0 else out


def report(est, truth):
    """Total and per-bin NMSE in dB. Bins without true energy, or exact ones, give NaN or -inf"""
    total = nmse(est, truth)
    per = nmse_per_frequency(est, truth)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_db = 10 * np.log10(per)
        total_db = 10 * np.log10(total) if total > 0 else -np.inf
    return NmseReport(float(total_db), per_db, np.atleast_2d(truth).shape[0])
