"""Experiment runner

A run loops over trials. Each trial draws microphone positions and noise
realizations from seeds derived from the master seed, then fits every
(kernel, envelope) estimator at every (noise model, SNR) cell and evaluates the
NMSE on the evaluation points. The Gram matrix of each kernel is built once per
trial and shared by all cells.
"""
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from tdkrr import acoustics, estimator, kernels, metrics, noise, weighting
from tdkrr.harness import dataset as dsmod
from tdkrr.harness.config import ConfigError, envelope_kind, validate


class ExperimentError(RuntimeError):
    """Failure inside a run, with the cell and trial it happened in"""


@dataclass
class RunResult:
    config: object
    rows: list = field(default_factory=list)
    freq_rows: list = field(default_factory=list)
    timing_rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def cell_means(self):
        """Mean NMSE in dB per (kernel, envelope, noise, snr_db), averaged in linear scale"""
        acc = {}
        for r in self.rows:
            key = (r["kernel"], r["envelope"], r["noise"], r["snr_db"])
            acc.setdefault(key, []).append(r["nmse"])
        return {k: metrics.to_db(np.mean(v)) for k, v in acc.items()}

    def mean_nmse_db(self, kernel, envelope, noise_model, snr_db):
        return self.cell_means()[(kernel, envelope, noise_model, float(snr_db))]


@dataclass
class _Context:
    """Read-only state shared by all trials"""
    cfg: object
    fs: float
    L: int
    c: float
    region: acoustics.Box
    source: np.ndarray
    room: acoustics.Room
    eval_points: np.ndarray
    truth_eval: np.ndarray
    all_positions: np.ndarray
    all_truth: np.ndarray
    tau_decay: float
    delay_offset: int
    specs: dict


def _condition(cfg, x):
    if cfg.highpass_cutoff is None:
        return x
    return acoustics.zero_phase_highpass(x, cfg.highpass_cutoff, cfg.fs)


def _simulate(cfg, room, source, points):
    points = np.atleast_2d(points)
    if room is None:
        h = [acoustics.free_field_rir(source, p, cfg.fs, cfg.c, cfg.L) for p in points]
    else:
        h = [acoustics.image_source_rir(room, source, p, cfg.max_order, cfg.L) for p in points]
    return _condition(cfg, np.stack(h))


def _kernel_specs(cfg, source, center):
    specs = {}
    for k in cfg.kernels:
        if k.mode == "diffuse":
            specs[k.name] = kernels.KernelSpec.diffuse(cfg.L, cfg.fs, cfg.c)
            continue
        if k.eta is not None:
            eta = np.asarray(k.eta, dtype=float)
        elif source is not None:
            eta = np.asarray(center) - source
        else:
            raise ConfigError(f"kernel {k.name}: eta is needed when the source position is unknown")
        specs[k.name] = kernels.KernelSpec.directional(cfg.L, cfg.fs, k.beta, eta, cfg.c)
    return specs


def _fit_length(x, L):
    out = np.zeros((x.shape[0], L))
    n = min(L, x.shape[1])
    out[:, :n] = x[:, :n]
    return out


def build_context(cfg):
    """Geometry, true responses at the evaluation points and kernels"""
    validate(cfg)
    room = None
    all_positions = all_truth = None
    if cfg.data == "dataset":
        ds = dsmod.load_dataset(cfg.dataset_path)
        if ds.fs != cfg.fs:
            raise ConfigError(f"dataset is sampled at {ds.fs} Hz, config expects {cfg.fs} Hz")
        all_positions = ds.positions
        all_truth = _condition(cfg, _fit_length(ds.rirs, cfg.L))
        low, high = all_positions.min(axis=0), all_positions.max(axis=0)
        region = acoustics.Box(tuple(low), tuple(high))
        meta = ds.metadata
        source = np.asarray(meta["source_position"], dtype=float) if "source_position" in meta else None
        eval_points = truth_eval = None
        if cfg.tau_decay is not None:
            tau = cfg.tau_decay
        elif "rt60" in meta:
            tau = float(meta["rt60"])
        else:
            tau = float(np.median([acoustics.estimate_rt60(h, cfg.fs) for h in all_truth]))
        delay_offset = int(meta.get("delay_offset", 0))
    else:
        region = acoustics.Box.centered(cfg.region_size, cfg.region_center)
        source = np.asarray(cfg.source, dtype=float)
        if cfg.data == "image-source":
            room = acoustics.Room(tuple(cfg.room_dimensions), cfg.rt60, cfg.c, cfg.fs, tuple(cfg.room_corner))
        eval_points = acoustics.eval_grid(region, cfg.eval_spacing)
        truth_eval = _simulate(cfg, room, source, eval_points)
        tau = cfg.tau_decay if cfg.tau_decay is not None else (cfg.rt60 if room is not None else None)
        delay_offset = cfg.delay_offset
    specs = _kernel_specs(cfg, source, region.center)
    return _Context(cfg, cfg.fs, cfg.L, cfg.c, region, source, room, eval_points, truth_eval,
                    all_positions, all_truth, tau, delay_offset, specs)


def trial_seeds(master_seed, trials):
    """Independent integer seeds per trial from a SeedSequence"""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(trials)]


def _sub_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _trial_geometry(ctx, seed):
    cfg = ctx.cfg
    if cfg.data == "dataset":
        mic_idx, eval_idx = dsmod.split(ctx.all_positions.shape[0], cfg.M, seed)
        return (ctx.all_positions[mic_idx], ctx.all_truth[mic_idx],
                ctx.all_positions[eval_idx], ctx.all_truth[eval_idx])
    if cfg.mic_placement == "grid":
        n = ctx.eval_points.shape[0]
        if cfg.M > n:
            raise ConfigError(f"grid placement offers {n} positions, M = {cfg.M}")
        idx = np.round(np.linspace(0, n - 1, cfg.M)).astype(int)
        return ctx.eval_points[idx], ctx.truth_eval[idx], ctx.eval_points, ctx.truth_eval
    mics = acoustics.sample_scene(ctx.region, cfg.M, seed)
    return mics, _simulate(cfg, ctx.room, ctx.source, mics), ctx.eval_points, ctx.truth_eval


def _noise_maker(ctx, model, data, mics, seed, sweep):
    """Function of the SNR in dB returning the noisy data, sharing one realization"""
    cfg = ctx.cfg
    if model == "none":
        return lambda snr_db: data
    if model == "additive_white":
        return lambda snr_db: noise.additive_white(data, snr_db, seed)
    n_samples = noise.recording_length(cfg.L, cfg.sweep_periods)
    if model == "wind":
        interference = noise.wind_interference(data.num_mics, n_samples, cfg.fs, seed)
    else:
        scene = acoustics.Scene(ctx.region, ctx.source if ctx.source is not None else ctx.region.center,
                                mics, mics, cfg.fs, cfg.L, cfg.c, ctx.room)
        interference = noise.localized_noise(scene, model.split("_")[1], n_samples, seed,
                                             cfg.noise_source, cfg.max_order)
    clean_power = noise.pooled_power(noise.clean_recordings(data.signals, sweep, n_samples))

    def make(snr_db):
        scaled = noise.scale_to_snr(interference, clean_power, snr_db)
        return noise.measure_and_deconvolve(data, sweep, scaled)
    return make


def _delays(ctx, mics, noisy):
    """Propagation delay in samples per microphone, including the equipment delay"""
    cfg = ctx.cfg
    if ctx.tau_decay is None:
        raise ConfigError("model-based envelopes need tau_decay")
    if ctx.source is not None:
        dist = np.linalg.norm(mics - ctx.source, axis=-1)
        l0 = np.round(dist * cfg.fs / cfg.c).astype(int) + ctx.delay_offset
    else:
        # no geometry: take the strongest sample of the measured response
        l0 = np.argmax(np.abs(noisy.signals), axis=-1)
    return np.minimum(l0, cfg.L - 1)


def _envelopes(ctx, name, mics, noisy, truth):
    cfg = ctx.cfg
    kind, individual = envelope_kind(name)
    if kind == "uniform":
        return None
    if kind == "oracle":
        return weighting.envelope_oracle(truth, individual, cfg.q_min, cfg.oracle_normalize)
    l0 = _delays(ctx, mics, noisy)
    per_mic = [weighting.EnvelopeParams(kind, int(l), cfg.tau_init, ctx.tau_decay, cfg.fs,
                                        cfg.q_min, individual) for l in l0]
    return weighting.envelopes_for_mics(per_mic, cfg.L)


def run_trial(ctx, trial, seed):
    """All cells of one trial. Returns (rows, freq_rows, timing_rows)"""
    cfg = ctx.cfg
    geo_seed, sweep_seed, *noise_seeds = _sub_seeds(seed, 2 + len(cfg.noise_models))
    mics, truth, eval_points, truth_eval = _trial_geometry(ctx, geo_seed)
    data = estimator.RirData(mics, truth, cfg.fs)
    sweep = noise.perfect_sweep(cfg.L, sweep_seed)
    rows, freq_rows, timing_rows = [], [], []

    noisy_cells = []
    for model, nseed in zip(cfg.noise_models, noise_seeds):
        make = _noise_maker(ctx, model, data, mics, nseed, sweep)
        for snr_db in cfg.snr_db:
            noisy = make(float(snr_db))
            noise_power = noise.pooled_power(noisy.signals - truth)
            if noise_power == 0:
                snr_lin = np.inf
                lam = cfg.lambda_floor
            else:
                snr_lin = noise.measure_snr(noise.pooled_power(noisy.signals), noise_power)
                # a negative estimate is possible for tiny data sets at very low SNR
                lam = estimator.select_lambda(max(snr_lin, 1e-12), cfg.lambda_floor, cfg.lambda_divisor)
            envs = {name: _envelopes(ctx, name, mics, noisy, truth) for name in cfg.envelopes}
            noisy_cells.append((model, float(snr_db), noisy, snr_lin, lam, envs))

    for kcfg in cfg.kernels:
        spec = ctx.specs[kcfg.name]
        gram = None
        for name in cfg.envelopes:
            for model, snr_db, noisy, snr_lin, lam, envs in noisy_cells:
                env = envs[name]
                t0 = time.perf_counter()
                try:
                    if env is None or lam == 0:
                        # noise-free data with no floor leaves lam = 0, where the DC block is singular
                        est = estimator.fit(noisy, lam, spec, min_norm=lam == 0)
                    else:
                        if gram is None:
                            gram = kernels.gram(mics, spec)
                        est = estimator.fit_weighted(noisy, lam, spec, estimator.DataWeighting(env, cfg.q_min), gram)
                    pred = est(eval_points)
                except Exception as exc:
                    raise ExperimentError(f"kernel={kcfg.name} envelope={name} noise={model} "
                                          f"snr_db={snr_db} trial={trial}: {exc}") from exc
                elapsed = time.perf_counter() - t0
                err = metrics.nmse(pred, truth_eval)
                per_bin = metrics.nmse_per_frequency(pred, truth_eval)
                key = dict(kernel=kcfg.name, envelope=name, noise=model, snr_db=snr_db, trial=trial)
                rows.append(dict(key, seed=seed, **{"lambda": float(lam)},
                                 measured_snr_db=float(10 * np.log10(snr_lin)) if snr_lin > 0 else -np.inf,
                                 nmse=err, nmse_db=metrics.to_db(err) if err > 0 else -np.inf,
                                 path=est.diagnostics.get("path", "")))
                freq_rows.append(dict(key, per_bin=per_bin))
                timing_rows.append(dict(key, wall_time_s=elapsed))
        del gram
    return rows, freq_rows, timing_rows


def _run_trial_job(args):
    ctx, trial, seed = args
    return run_trial(ctx, trial, seed)


def run_experiment(cfg, progress=None):
    """Run every trial of cfg

    Parameters
    ----------
    cfg : ExperimentConfig
    progress : callable, optional
        called with (trial, trials) after each finished trial

    Returns
    -------
    RunResult
    """
    t0 = time.perf_counter()
    ctx = build_context(cfg)
    seeds = trial_seeds(cfg.seed, cfg.trials)
    jobs = [(ctx, t, s) for t, s in enumerate(seeds)]
    result = RunResult(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_trial_job, jobs))
    else:
        outputs = []
        for job in jobs:
            outputs.append(_run_trial_job(job))
            if progress is not None:
                progress(len(outputs), cfg.trials)
    for rows, freq_rows, timing_rows in outputs:
        result.rows.extend(rows)
        result.freq_rows.extend(freq_rows)
        result.timing_rows.extend(timing_rows)
    order = _row_order(cfg)
    for lst in (result.rows, result.freq_rows, result.timing_rows):
        lst.sort(key=order)
    result.info = {"tau_decay": ctx.tau_decay, "trial_seeds": seeds,
                   "num_eval_points": None if ctx.eval_points is None else int(ctx.eval_points.shape[0])}
    if ctx.room is not None:
        result.info["reflection_coefficient"] = ctx.room.reflection_coefficient()
    result.timing_rows.append(dict(kernel="", envelope="", noise="", snr_db=float("nan"), trial=-1,
                                   wall_time_s=time.perf_counter() - t0))
    return result


def _row_order(cfg):
    kpos = {k.name: i for i, k in enumerate(cfg.kernels)}
    epos = {e: i for i, e in enumerate(cfg.envelopes)}
    npos = {m: i for i, m in enumerate(cfg.noise_models)}
    return lambda r: (kpos[r["kernel"]], epos[r["envelope"]], npos[r["noise"]], r["snr_db"], r["trial"])
