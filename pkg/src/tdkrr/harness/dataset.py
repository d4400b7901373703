"""Measured impulse response datasets

On disk a dataset is a directory with

- ``dataset.json``: metadata with keys fs, num_positions, length, source_id and
  optionally source_position, rt60 and delay_offset
- ``positions.f64``: little-endian float64 array of shape (N, 3)
- ``rirs.f64``: little-endian float64 array of shape (N, length)
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

META = "dataset.json"
POSITIONS = "positions.f64"
RIRS = "rirs.f64"
_DTYPE = np.dtype("<f8")


class DatasetError(ValueError):
    """Malformed dataset"""


@dataclass(frozen=True)
class MeasuredRirDataset:
    positions: np.ndarray
    rirs: np.ndarray
    fs: float
    source_id: str = "source-0"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        rirs = np.asarray(self.rirs, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DatasetError("positions must have shape (N, 3)")
        if rirs.ndim != 2 or rirs.shape[0] != pos.shape[0]:
            raise DatasetError(f"{pos.shape[0]} positions but {rirs.shape[0]} impulse responses")
        if self.fs <= 0:
            raise DatasetError("fs must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "rirs", rirs)

    @property
    def num_positions(self):
        return self.positions.shape[0]

    @property
    def length(self):
        return self.rirs.shape[1]


def save_dataset(ds, path):
    """Write ds into the directory path, created if needed"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = dict(ds.metadata)
    meta.update(fs=float(ds.fs), num_positions=ds.num_positions, length=ds.length,
                source_id=ds.source_id)
    (path / META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    ds.positions.astype(_DTYPE).tofile(path / POSITIONS)
    ds.rirs.astype(_DTYPE).tofile(path / RIRS)
    return path


def load_dataset(path):
    """Read a dataset directory (or its dataset.json)"""
    path = Path(path)
    if path.is_file() and path.name == META:
        path = path.parent
    meta_file = path / META
    if not meta_file.is_file():
        raise DatasetError(f"{meta_file} not found")
    try:
        meta = json.loads(meta_file.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_file}: invalid JSON ({exc})") from None
    for key in ("fs", "num_positions", "length"):
        if key not in meta:
            raise DatasetError(f"{meta_file}: missing key {key!r}")
    n, length = int(meta["num_positions"]), int(meta["length"])
    for name in (POSITIONS, RIRS):
        if not (path / name).is_file():
            raise DatasetError(f"{path / name} not found")
    pos = np.fromfile(path / POSITIONS, dtype=_DTYPE)
    rirs = np.fromfile(path / RIRS, dtype=_DTYPE)
    if pos.size != 3 * n:
        raise DatasetError(f"{POSITIONS} holds {pos.size} values, expected {3 * n}")
    if rirs.size != n * length:
        raise DatasetError(f"{RIRS} holds {rirs.size} values, expected {n * length}")
    extra = {k: v for k, v in meta.items() if k not in ("fs", "num_positions", "length", "source_id")}
    return MeasuredRirDataset(pos.reshape(n, 3), rirs.reshape(n, length), float(meta["fs"]),
                              str(meta.get("source_id", "source-0")), extra)


def split(ds, num_mics, seed):
    """Choose num_mics positions uniformly at random as microphones

    Returns
    -------
    mic_idx, eval_idx : sorted index arrays partitioning range(N)
    """
    n = ds.num_positions if isinstance(ds, MeasuredRirDataset) else int(ds)
    if not 1 <= num_mics < n:
        raise DatasetError(f"cannot choose {num_mics} microphones from {n} positions")
    rng = np.random.default_rng(seed)
    mic_idx = np.sort(rng.choice(n, size=num_mics, replace=False))
    eval_idx = np.setdiff1d(np.arange(n), mic_idx)
    return mic_idx, eval_idx
