"""Experiment configuration, runner, dataset I/O and command line interface"""
from tdkrr.harness.config import ConfigError, ExperimentConfig, KernelConfig, load_config, preset
from tdkrr.harness.dataset import MeasuredRirDataset, load_dataset, save_dataset, split
from tdkrr.harness.output import emit_results
from tdkrr.harness.runner import RunResult, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "KernelConfig", "load_config", "preset",
           "MeasuredRirDataset", "load_dataset", "save_dataset", "split",
           "emit_results", "RunResult", "run_experiment"]
