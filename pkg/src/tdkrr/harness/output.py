"""CSV and manifest emission

Result files depend only on the configuration and seed, so two runs give
identical bytes. Wall-clock times go to timing.csv, which is kept apart for that
reason.
"""
import csv
import json
from pathlib import Path

import numpy as np

import tdkrr
from tdkrr import spectral

TRIAL_COLUMNS = ["kernel", "envelope", "noise", "snr_db", "trial", "seed", "lambda",
                 "measured_snr_db", "nmse", "nmse_db", "path"]
SUMMARY_COLUMNS = ["kernel", "envelope", "noise", "snr_db", "trials", "mean_nmse", "mean_nmse_db",
                   "mean_of_db", "std_db", "mean_lambda"]
FREQ_COLUMNS = ["kernel", "envelope", "noise", "snr_db", "bin", "freq_hz", "trials", "nmse", "nmse_db"]
TIMING_COLUMNS = ["kernel", "envelope", "noise", "snr_db", "trial", "wall_time_s"]
RESULT_FILES = ("trials.csv", "nmse_vs_snr.csv", "nmse_per_frequency.csv", "table.csv", "manifest.json")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _db(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10 * np.log10(x)


def summarize(rows):
    """Per-cell statistics, in first-seen cell order"""
    cells = {}
    for r in rows:
        cells.setdefault((r["kernel"], r["envelope"], r["noise"], r["snr_db"]), []).append(r)
    out = []
    for (k, e, n, s), rs in cells.items():
        vals = np.array([r["nmse"] for r in rs])
        dbs = _db(vals)
        out.append(dict(kernel=k, envelope=e, noise=n, snr_db=s, trials=len(rs),
                        mean_nmse=float(vals.mean()), mean_nmse_db=float(_db(vals.mean())),
                        mean_of_db=float(dbs.mean()), std_db=float(dbs.std()),
                        mean_lambda=float(np.mean([r["lambda"] for r in rs]))))
    return out


def frequency_summary(freq_rows, L, fs):
    """Mean per-bin NMSE over trials for every cell"""
    cells = {}
    for r in freq_rows:
        cells.setdefault((r["kernel"], r["envelope"], r["noise"], r["snr_db"]), []).append(r["per_bin"])
    freqs = spectral.DftPlan(L).freqs(fs)
    out = []
    for (k, e, n, s), bins in cells.items():
        mean = np.mean(np.stack(bins), axis=0)
        db = _db(mean)
        for l, f in enumerate(freqs):
            out.append(dict(kernel=k, envelope=e, noise=n, snr_db=s, bin=l, freq_hz=float(f),
                            trials=len(bins), nmse=float(mean[l]), nmse_db=float(db[l])))
    return out


def table_rows(summary, kernels, envelopes, noise_model, snr_db):
    """Mean NMSE in dB with one row per kernel and one column per envelope"""
    lookup = {(r["kernel"], r["envelope"]): r["mean_nmse_db"] for r in summary
              if r["noise"] == noise_model and r["snr_db"] == snr_db}
    rows = []
    for k in kernels:
        if any((k, e) in lookup for e in envelopes):
            rows.append(dict({"estimator": k}, **{e: lookup.get((k, e), float("nan")) for e in envelopes}))
    return rows


def manifest(cfg, info):
    return {
        "manifest_version": 1,
        "library": "tdkrr",
        "library_version": tdkrr.__version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "files": list(RESULT_FILES[:-1]) + ["timing.csv"],
        "info": info,
    }


def emit_results(result, out_dir):
    """Write all result files of a RunResult into out_dir

    Returns
    -------
    dict mapping file name to path
    """
    cfg = result.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in RESULT_FILES + ("timing.csv",)}
    summary = summarize(result.rows)
    kernel_names = [k.name for k in cfg.kernels]
    _write_csv(paths["trials.csv"], TRIAL_COLUMNS, result.rows)
    _write_csv(paths["nmse_vs_snr.csv"], SUMMARY_COLUMNS, summary)
    _write_csv(paths["nmse_per_frequency.csv"], FREQ_COLUMNS,
               frequency_summary(result.freq_rows, cfg.L, cfg.fs))
    _write_csv(paths["table.csv"], ["estimator"] + list(cfg.envelopes),
               table_rows(summary, kernel_names, cfg.envelopes, cfg.noise_models[0], float(cfg.table_snr_db)))
    _write_csv(paths["timing.csv"], TIMING_COLUMNS, result.timing_rows)
    paths["manifest.json"].write_text(json.dumps(manifest(cfg, result.info), indent=2, sort_keys=True) + "\n")
    return paths


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))

