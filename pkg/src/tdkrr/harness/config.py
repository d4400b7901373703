"""Experiment configuration, presets and validation

Configurations are plain JSON objects. Keys not listed in ExperimentConfig are
rejected, missing keys take the defaults below.
"""
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tdkrr import noise

DATA_KINDS = ("free-field", "image-source", "dataset")
ENVELOPES = ("uniform", "exponential", "linear", "oracle",
             "exponential-individual", "linear-individual", "oracle-individual")
SNR_GRID = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]


class ConfigError(ValueError):
    """Invalid experiment configuration"""


@dataclass
class KernelConfig:
    """Kernel of one estimator

    beta applies to every bin but the Nyquist bin. eta None means the direction
    from the source towards the region center.
    """
    name: str = "diffuse"
    mode: str = "diffuse"
    beta: float = 0.0
    eta: list = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    data: str = "free-field"
    fs: float = 1600.0
    L: int = 250
    c: float = 343.0
    region_size: list = field(default_factory=lambda: [0.7, 0.7, 0.25])
    region_center: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    eval_spacing: float = 0.075
    source: list = field(default_factory=lambda: [-1.4, -1.4, 0.0])
    room_dimensions: list = None
    room_corner: list = None
    rt60: float = None
    max_order: int = None
    highpass_cutoff: float = 50.0
    M: int = 12
    mic_placement: str = "random"
    dataset_path: str = None
    kernels: list = field(default_factory=lambda: [KernelConfig()])
    envelopes: list = field(default_factory=lambda: ["uniform", "exponential"])
    tau_init: float = 0.05
    tau_decay: float = None
    q_min: float = 1e-6
    oracle_normalize: bool = True  # peak 1, like the model-based envelopes
    delay_offset: int = 40
    noise_models: list = field(default_factory=lambda: ["additive_white"])
    noise_source: list = None
    sweep_periods: int = 2
    snr_db: list = field(default_factory=lambda: list(SNR_GRID))
    lambda_divisor: float = 10.0
    lambda_floor: float = 0.0
    table_snr_db: float = 20.0
    trials: int = 10
    seed: int = 0
    workers: int = 1
    output_dir: str = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


def from_dict(d):
    """Build and validate a config from a JSON-like dict"""
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    d = dict(d)
    if "kernels" in d:
        kfields = {f.name for f in dataclasses.fields(KernelConfig)}
        kernels = []
        for k in d["kernels"]:
            if not isinstance(k, dict) or set(k) - kfields:
                raise ConfigError(f"invalid kernel entry {k!r}")
            kernels.append(KernelConfig(**k))
        d["kernels"] = kernels
    try:
        cfg = ExperimentConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def load_config(path):
    """Read a config file, a run manifest (uses its 'config' entry) or a preset name"""
    if str(path) in PRESETS:
        return preset(str(path))
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such config file or preset: {path}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(d, dict) and "config" in d and "manifest_version" in d:
        d = d["config"]
    return from_dict(d)


def _vec3(name, v, required=True):
    if v is None:
        if required:
            raise ConfigError(f"{name} is required")
        return
    a = np.asarray(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be three finite numbers")


def validate(cfg):
    """Raise ConfigError if the configuration is inconsistent"""
    if cfg.data not in DATA_KINDS:
        raise ConfigError(f"data must be one of {DATA_KINDS}")
    if not (isinstance(cfg.L, int) and cfg.L >= 2):
        raise ConfigError("L must be an integer of at least 2")
    if cfg.fs <= 0 or cfg.c <= 0:
        raise ConfigError("fs and c must be positive")
    if not (isinstance(cfg.trials, int) and cfg.trials >= 1):
        raise ConfigError("trials must be a positive integer")
    if not (isinstance(cfg.M, int) and cfg.M >= 1):
        raise ConfigError("M must be a positive integer")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not (isinstance(cfg.workers, int) and cfg.workers >= 1):
        raise ConfigError("workers must be a positive integer")
    if cfg.mic_placement not in ("random", "grid"):
        raise ConfigError("mic_placement must be 'random' or 'grid'")
    if cfg.data != "dataset":
        _vec3("region_size", cfg.region_size)
        _vec3("region_center", cfg.region_center)
        _vec3("source", cfg.source)
        if np.any(np.asarray(cfg.region_size) <= 0):
            raise ConfigError("region_size must be positive")
        if cfg.eval_spacing <= 0 or np.any(np.asarray(cfg.region_size) < cfg.eval_spacing):
            raise ConfigError("eval_spacing must be positive and fit inside the region")
    if cfg.data == "image-source":
        _vec3("room_dimensions", cfg.room_dimensions)
        _vec3("room_corner", cfg.room_corner)
        if cfg.rt60 is None or cfg.rt60 < 0:
            raise ConfigError("image-source data needs a non-negative rt60")
    if cfg.data == "dataset" and not cfg.dataset_path:
        raise ConfigError("dataset data needs dataset_path")
    if cfg.highpass_cutoff is not None and not 0 < cfg.highpass_cutoff < cfg.fs / 2:
        raise ConfigError("highpass_cutoff must lie between 0 and fs / 2, or be null")
    if not cfg.kernels:
        raise ConfigError("at least one kernel is required")
    names = [k.name for k in cfg.kernels]
    if len(set(names)) != len(names):
        raise ConfigError("kernel names must be unique")
    for k in cfg.kernels:
        if k.mode not in ("diffuse", "directional"):
            raise ConfigError(f"kernel {k.name}: mode must be 'diffuse' or 'directional'")
        if k.beta < 0 or (k.mode == "diffuse" and k.beta != 0):
            raise ConfigError(f"kernel {k.name}: beta must be non-negative, and zero for diffuse")
        if k.eta is not None:
            _vec3(f"kernel {k.name}: eta", k.eta)
            if np.linalg.norm(k.eta) == 0:
                raise ConfigError(f"kernel {k.name}: eta must be nonzero")
    if not cfg.envelopes or len(set(cfg.envelopes)) != len(cfg.envelopes):
        raise ConfigError("envelopes must be a non-empty list without repeats")
    for e in cfg.envelopes:
        if e not in ENVELOPES:
            raise ConfigError(f"unknown envelope {e!r}")
    if cfg.tau_init <= 0 or (cfg.tau_decay is not None and cfg.tau_decay <= 0) or cfg.q_min <= 0:
        raise ConfigError("tau_init, tau_decay and q_min must be positive")
    if not cfg.noise_models or len(set(cfg.noise_models)) != len(cfg.noise_models):
        raise ConfigError("noise_models must be a non-empty list without repeats")
    for m in cfg.noise_models:
        if m not in noise.MODELS + ("none",):
            raise ConfigError(f"unknown noise model {m!r}")
        if m.startswith("localized"):
            _vec3("noise_source", cfg.noise_source)
    if any(m != "additive_white" and m != "none" for m in cfg.noise_models):
        if not (isinstance(cfg.sweep_periods, int) and cfg.sweep_periods >= 2):
            raise ConfigError("sweep_periods must be an integer of at least 2")
    if not cfg.snr_db or len(set(cfg.snr_db)) != len(cfg.snr_db):
        raise ConfigError("snr_db must be a non-empty list without repeats")
    if cfg.lambda_divisor <= 0 or cfg.lambda_floor < 0:
        raise ConfigError("lambda_divisor must be positive and lambda_floor non-negative")
    model_based = any(envelope_kind(e)[0] in ("exponential", "linear") for e in cfg.envelopes)
    if model_based and cfg.data == "free-field" and cfg.tau_decay is None:
        raise ConfigError("model-based envelopes in free field need tau_decay")
    return cfg


def _free_field_paper():
    return ExperimentConfig(
        name="free-field-paper", data="free-field", L=250,
        kernels=[KernelConfig("diffuse", "diffuse", 0.0),
                 KernelConfig("directional", "directional", 5.0)],
        envelopes=["uniform", "exponential"], tau_decay=0.05,
        noise_models=["additive_white"])


def _reverberant_paper():
    return ExperimentConfig(
        name="reverberant-paper", data="image-source", L=800,
        room_dimensions=[5.4, 4.3, 3.2], room_corner=[-3.0, -2.3, -1.4], rt60=0.36,
        kernels=[KernelConfig("diffuse", "diffuse", 0.0),
                 KernelConfig("directional", "directional", 1.0)],
        envelopes=["uniform", "exponential"],
        noise_models=["additive_white"], noise_source=[1.6, 1.2, 0.6])


def _measured_data():
    return ExperimentConfig(
        name="measured-data", data="dataset", L=800, highpass_cutoff=None,
        kernels=[KernelConfig("diffuse", "diffuse", 0.0),
                 KernelConfig("directional", "directional", 1.0)],
        envelopes=["uniform", "exponential"],
        noise_models=["wind"], lambda_floor=1e-3, dataset_path="dataset")


PRESETS = {
    "free-field-paper": _free_field_paper,
    "reverberant-paper": _reverberant_paper,
    "measured-data": _measured_data,
}


def preset(name, **overrides):
    """A fresh copy of a named preset, optionally with fields replaced"""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}, choose from {sorted(PRESETS)}")
    cfg = PRESETS[name]()
    return cfg.replace(**overrides) if overrides else validate(cfg)


def envelope_kind(name):
    """Split an envelope name into (kind, individual)"""
    kind, _, suffix = name.partition("-")
    return kind, suffix == "individual"

