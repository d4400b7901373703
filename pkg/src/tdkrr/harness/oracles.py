"""Self-checks against independent reference computations

Each suite draws random cases from a fixed seed and returns a summary dict with
the worst error, the tolerance and a pass flag.
"""
import time

import numpy as np

from tdkrr import estimator, kernels, noise, spectral

FS = 1600.0
C = 343.0


def _summary(name, errors, tol, t0, **extra):
    worst = float(np.max(errors)) if len(errors) else 0.0
    return dict(suite=name, cases=len(errors), max_error=worst, tolerance=tol,
                passed=bool(worst <= tol), seconds=time.perf_counter() - t0, **extra)


def spectral_roundtrip(seed=0, max_L=64, tol=1e-12):
    """Parseval and inverse(forward(x)) = x for every L up to max_L"""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errors = []
    for L in range(1, max_L + 1):
        plan = spectral.DftPlan(L)
        x = rng.standard_normal((4, L))
        y = rng.standard_normal((4, L))
        a, b = spectral.forward(plan, x), spectral.forward(plan, y)
        scale = np.linalg.norm(x) * np.linalg.norm(y)
        errors.append(np.max(np.abs(spectral.inner_f(plan, a, b) - spectral.inner_t(x, y))) / scale)
        errors.append(np.max(np.abs(spectral.inverse(plan, a) - x)) / np.max(np.abs(x)))
    return _summary("spectral", errors, tol, t0)


def kernel_quadrature(seed=0, cases=50, n_dirs=10000, tol=1e-3, L=16):
    """Closed-form kernel against plane-wave quadrature over the sphere"""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    k_max = np.pi * FS / C
    errors = []
    for i in range(cases):
        beta = (0.0, 1.0, 5.0)[i % 3]
        eta = rng.standard_normal(3)
        spec = kernels.KernelSpec.directional(L, FS, beta, eta) if beta else kernels.KernelSpec.diffuse(L, FS)
        # keep omega_l ||r - r'|| / c <= 10 on every bin
        d = rng.uniform(0, 10 / k_max)
        u = rng.standard_normal(3)
        r = rng.uniform(-0.3, 0.3, 3)
        rp = r + d * u / np.linalg.norm(u)
        closed = kernels.gamma_freq(r, rp, spec)
        quad = kernels.gamma_quadrature(r, rp, spec, n_dirs)
        errors.append(np.max(np.abs(closed - quad)))
    return _summary("kernel-quadrature", errors, tol, t0)


def per_frequency_equivalence(seed=0, scenes=20, queries=20, tol=1e-10):
    """Time-domain estimate against the bin-by-bin frequency-domain solver

    Odd L compares whole signals. Even L compares all bins except the Nyquist
    bin, whose kernel differs between the two methods.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errors = []
    for i in range(scenes):
        M = int(rng.integers(1, 5))
        L = int(rng.choice([3, 5, 7, 9, 11, 13, 15])) if i % 4 else int(rng.choice([4, 8, 12, 14]))
        lam = (0.01, 1.0)[i % 2]
        pos = rng.uniform(-0.5, 0.5, (M, 3))
        data = estimator.RirData(pos, rng.standard_normal((M, L)), FS)
        q = rng.uniform(-0.5, 0.5, (queries, 3))
        spec = kernels.KernelSpec.diffuse(L, FS, C)
        td = estimator.fit(data, lam, spec)(q)
        ref = estimator.fit_per_frequency(data, lam, C)
        if L % 2:
            fd = ref.evaluate(q)
            errors.append(np.max(np.abs(td - fd)) / np.max(np.abs(fd)))
        else:
            a = np.fft.rfft(td, axis=-1)[:, :-1]
            b = ref.evaluate_freq(q)[:, :-1]
            errors.append(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return _summary("per-frequency", errors, tol, t0)


def gram_psd(seed=0, scenes=20, tol=1e-8):
    """Smallest eigenvalue of the diffuse Gram matrix relative to its norm, negated"""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(scenes):
        M = int(rng.integers(1, 7))
        L = int(rng.integers(1, 17))
        pos = rng.uniform(-1, 1, (M, 3))
        eig = np.linalg.eigvalsh(kernels.gram(pos, kernels.KernelSpec.diffuse(L, FS, C)))
        errors.append(max(0.0, -eig[0] / max(abs(eig[-1]), abs(eig[0]))))
    return _summary("gram-psd", errors, tol, t0)


def sweep_deconvolution(seed=0, banks=10, tol=1e-9):
    """Perfect-sweep measurement without interference reproduces the responses"""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(banks):
        M = int(rng.integers(1, 9))
        L = int(rng.integers(8, 400))
        decay = np.exp(-np.arange(L) / rng.uniform(2, L))
        truth = estimator.RirData(rng.uniform(-1, 1, (M, 3)), rng.standard_normal((M, L)) * decay, FS)
        sweep = noise.perfect_sweep(L, int(rng.integers(1 << 31)))
        periods = int(rng.integers(2, 5))
        out = noise.measure_and_deconvolve(truth, sweep, np.zeros((M, periods * L)))
        errors.append(np.max(np.abs(out.signals - truth.signals)) / np.max(np.abs(truth.signals)))
    return _summary("sweep", errors, tol, t0)


SUITES = {
    "spectral": spectral_roundtrip,
    "kernel-quadrature": kernel_quadrature,
    "per-frequency": per_frequency_equivalence,
    "gram-psd": gram_psd,
    "sweep": sweep_deconvolution,
}


def run_suite(name, seed=0):
    if name == "all":
        return [fn(seed) for fn in SUITES.values()]
    if name not in SUITES:
        raise KeyError(f"unknown oracle suite {name!r}, choose from {sorted(SUITES) + ['all']}")
    return [SUITES[name](seed)]
