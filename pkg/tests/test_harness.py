import json
import math

import numpy as np
import pytest

from tdkrr import acoustics
from tdkrr.harness import cli, config, dataset, output, oracles, runner
from tdkrr.harness.config import ConfigError, KernelConfig


def _small(**overrides):
    base = dict(name="small", L=65, eval_spacing=0.175, M=4, trials=2, snr_db=[0.0, 20.0],
                kernels=[KernelConfig("diffuse", "diffuse", 0.0), KernelConfig("directional", "directional", 5.0)],
                envelopes=["uniform", "exponential", "oracle"], tau_decay=0.05, seed=3)
    base.update(overrides)
    return config.validate(config.ExperimentConfig(**base))


@pytest.fixture(scope="module")
def small_result():
    return runner.run_experiment(_small())


def test_preset_values():
    ff = config.preset("free-field-paper")
    rv = config.preset("reverberant-paper")
    md = config.preset("measured-data")
    for cfg in (ff, rv, md):
        assert cfg.fs == 1600.0 and cfg.q_min == 1e-6 and cfg.tau_init == 0.05
        assert cfg.M == 12 and cfg.trials == 10
    assert ff.L == 250 and rv.L == 800 and md.L == 800
    assert ff.highpass_cutoff == 50.0 and rv.highpass_cutoff == 50.0 and md.highpass_cutoff is None
    assert ff.eval_spacing == 0.075 and ff.region_size == [0.7, 0.7, 0.25]
    assert ff.tau_decay == 0.05
    assert {k.name: k.beta for k in ff.kernels} == {"diffuse": 0.0, "directional": 5.0}
    assert {k.name: k.beta for k in rv.kernels} == {"diffuse": 0.0, "directional": 1.0}
    assert rv.room_dimensions == [5.4, 4.3, 3.2] and rv.rt60 == 0.36
    assert md.lambda_floor == 1e-3 and md.noise_models == ["wind"]
    assert ff.snr_db == [float(s) for s in range(-15, 45, 5)]


def test_region_and_grid_of_presets():
    cfg = config.preset("reverberant-paper")
    region = acoustics.Box.centered(cfg.region_size, cfg.region_center)
    assert acoustics.eval_grid(region, cfg.eval_spacing).shape == (243, 3)
    room = acoustics.Box(cfg.room_corner, tuple(np.add(cfg.room_corner, cfg.room_dimensions)))
    assert room.contains(np.array([region.low, region.high, cfg.source, cfg.noise_source])).all()


def test_preset_overrides_and_errors():
    cfg = config.preset("free-field-paper", trials=3)
    assert cfg.trials == 3
    assert config.preset("free-field-paper").trials == 10
    with pytest.raises(ConfigError):
        config.preset("nope")
    with pytest.raises(ConfigError):
        config.preset("free-field-paper", trials=0)


@pytest.mark.parametrize("bad", [
    {"L": 1}, {"data": "wav"}, {"M": 0}, {"seed": -1}, {"envelopes": ["cosine"]},
    {"envelopes": ["uniform", "uniform"]}, {"noise_models": ["localized_white"]},
    {"noise_models": ["pinkish"]}, {"snr_db": []}, {"highpass_cutoff": 900.0},
    {"kernels": [{"name": "a", "mode": "diffuse", "beta": 1.0}]},
    {"kernels": [{"name": "a", "mode": "odd"}]},
    {"kernels": [{"name": "a"}, {"name": "a"}]},
    {"kernels": [{"name": "a", "mode": "directional", "beta": 1.0, "eta": [0, 0, 0]}]},
    {"region_size": [0.7, 0.7]}, {"eval_spacing": 2.0}, {"lambda_divisor": 0},
    {"data": "image-source"}, {"data": "dataset"}, {"unknown_key": 1},
    {"tau_decay": None}, {"mic_placement": "spiral"}, {"sweep_periods": 1, "noise_models": ["wind"]},
])
def test_validation_rejects(bad):
    d = _small().to_dict()
    d.update(bad)
    with pytest.raises(ConfigError):
        config.from_dict(d)


def test_config_roundtrip_through_json(tmp_path):
    cfg = config.preset("reverberant-paper")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert config.load_config(path) == cfg
    assert config.load_config("reverberant-paper") == cfg
    with pytest.raises(ConfigError):
        config.load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        config.load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        config.from_dict([1, 2])


def test_envelope_kind():
    assert config.envelope_kind("exponential") == ("exponential", False)
    assert config.envelope_kind("oracle-individual") == ("oracle", True)


def test_trial_seeds_are_stable_and_distinct():
    a = runner.trial_seeds(0, 10)
    assert a == runner.trial_seeds(0, 10)
    assert len(set(a)) == 10
    assert runner.trial_seeds(0, 3) == a[:3]
    assert runner.trial_seeds(1, 3) != a[:3]


def test_run_rows(small_result):
    cfg = small_result.config
    rows = small_result.rows
    assert len(rows) == 2 * 3 * 1 * 2 * 2
    for r in rows:
        assert set(output.TRIAL_COLUMNS) <= set(r)
        assert r["nmse"] > 0 and math.isfinite(r["nmse_db"])
        assert r["lambda"] == pytest.approx(1 / (10 * 10 ** (r["measured_snr_db"] / 10)), rel=1e-12)
    # measured SNR of additive noise is close to the target
    for r in rows:
        assert abs(r["measured_snr_db"] - r["snr_db"]) < 1.5
    assert small_result.info["num_eval_points"] == 16
    assert small_result.info["trial_seeds"] == runner.trial_seeds(cfg.seed, cfg.trials)
    paths = {r["path"] for r in rows if r["envelope"] != "uniform"}
    assert paths == {"dense"}
    assert {r["path"] for r in rows if r["envelope"] == "uniform"} == {"per-frequency"}


def test_cell_means_average_in_linear_scale(small_result):
    rows = [r for r in small_result.rows
            if (r["kernel"], r["envelope"], r["snr_db"]) == ("diffuse", "uniform", 20.0)]
    expected = 10 * np.log10(np.mean([r["nmse"] for r in rows]))
    assert small_result.mean_nmse_db("diffuse", "uniform", "additive_white", 20) == pytest.approx(expected)


def test_emit_results(tmp_path, small_result):
    paths = output.emit_results(small_result, tmp_path)
    assert sorted(p.name for p in paths.values()) == sorted(output.RESULT_FILES + ("timing.csv",))
    summary = output.read_csv(paths["nmse_vs_snr.csv"])
    assert len(summary) == 2 * 3 * 2
    assert list(summary[0]) == output.SUMMARY_COLUMNS
    table = output.read_csv(paths["table.csv"])
    assert [r["estimator"] for r in table] == ["diffuse", "directional"]
    assert list(table[0]) == ["estimator", "uniform", "exponential", "oracle"]
    assert float(table[0]["uniform"]) == pytest.approx(
        small_result.mean_nmse_db("diffuse", "uniform", "additive_white", 20.0), abs=1e-9)
    freq = output.read_csv(paths["nmse_per_frequency.csv"])
    assert len(freq) == 2 * 3 * 2 * 33
    assert float(freq[-1]["freq_hz"]) == pytest.approx(800 * 64 / 65)
    manifest = json.loads(paths["manifest.json"].read_text())
    assert manifest["seed"] == 3 and manifest["manifest_version"] == 1
    assert manifest["config"] == small_result.config.to_dict()
    timing = output.read_csv(paths["timing.csv"])
    assert len(timing) == len(small_result.rows) + 1


def test_empty_table_gives_header_only_csv(tmp_path):
    res = runner.RunResult(_small())
    paths = output.emit_results(res, tmp_path)
    assert paths["trials.csv"].read_text() == ",".join(output.TRIAL_COLUMNS) + "\n"


def test_manifest_reruns_to_identical_bytes(tmp_path, small_result):
    first = output.emit_results(small_result, tmp_path / "a")
    cfg = config.load_config(first["manifest.json"])
    assert cfg == small_result.config
    second = output.emit_results(runner.run_experiment(cfg), tmp_path / "b")
    for name in output.RESULT_FILES:
        assert first[name].read_bytes() == second[name].read_bytes(), name


def test_parallel_workers_match_serial(tmp_path):
    cfg = _small(trials=2, envelopes=["uniform", "exponential"], snr_db=[10.0])
    a = output.emit_results(runner.run_experiment(cfg), tmp_path / "a")
    b = output.emit_results(runner.run_experiment(cfg.replace(workers=2)), tmp_path / "b")
    for name in ("trials.csv", "nmse_vs_snr.csv", "nmse_per_frequency.csv", "table.csv"):
        assert a[name].read_bytes() == b[name].read_bytes()


def test_other_noise_models_run():
    cfg = _small(trials=1, snr_db=[10.0], envelopes=["uniform", "exponential"],
                 noise_models=["localized_white", "localized_pink", "wind", "none"],
                 noise_source=[1.0, 1.2, 0.3])
    res = runner.run_experiment(cfg)
    rows = {(r["kernel"], r["envelope"], r["noise"]): r for r in res.rows}
    assert len(rows) == 2 * 2 * 4
    for (k, e, m), r in rows.items():
        if m == "none":
            assert r["lambda"] == 0.0 and r["measured_snr_db"] == np.inf
        elif m.startswith("localized"):
            # the target applies to the whole recording, whose warm-up period carries
            # less signal, so the deconvolved data come out somewhat cleaner
            assert 9.0 <= r["measured_snr_db"] <= 15.0
        else:
            assert math.isfinite(r["measured_snr_db"])


def test_image_source_run():
    cfg = _small(data="image-source", room_dimensions=[5.4, 4.3, 3.2], room_corner=[-3.0, -2.3, -1.4],
                 rt60=0.36, tau_decay=None, trials=1, L=101, max_order=3, snr_db=[20.0],
                 envelopes=["uniform", "exponential-individual"], noise_models=["localized_pink"],
                 noise_source=[1.6, 1.2, 0.6])
    res = runner.run_experiment(cfg)
    assert res.info["tau_decay"] == 0.36
    assert res.info["reflection_coefficient"] == pytest.approx(0.79, abs=0.01)
    assert all(math.isfinite(r["nmse_db"]) for r in res.rows)


def test_fully_sampled_noise_free_grid_is_near_exact():
    # odd L: with even L the real-valued Nyquist kernel only represents fields
    # even about the origin, which caps the error near -29 dB
    cfg = config.preset("free-field-paper", trials=1, L=251, noise_models=["none"], snr_db=[40.0],
                        M=243, mic_placement="grid", envelopes=["uniform"])
    res = runner.run_experiment(cfg)
    for value in res.cell_means().values():
        assert value < -40


def test_grid_placement_too_many_mics():
    with pytest.raises(ConfigError):
        runner.run_experiment(_small(mic_placement="grid", M=17, trials=1))


def _synthetic_dataset(path, n=30, L=120):
    region = acoustics.Box.centered((0.6, 0.6, 0.2))
    pos = acoustics.sample_scene(region, n, 5)
    src = np.array([-1.2, -1.0, 0.1])
    rirs = np.stack([acoustics.free_field_rir(src, p, 1600.0, 343.0, L) for p in pos])
    ds = dataset.MeasuredRirDataset(pos, rirs, 1600.0, "ls-1", {"source_position": src.tolist(), "rt60": 0.05})
    dataset.save_dataset(ds, path)
    return ds


def test_dataset_roundtrip_and_split(tmp_path):
    ds = _synthetic_dataset(tmp_path / "ds")
    back = dataset.load_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(back.positions, ds.positions)
    np.testing.assert_array_equal(back.rirs, ds.rirs)
    assert back.source_id == "ls-1" and back.metadata["rt60"] == 0.05
    assert dataset.load_dataset(tmp_path / "ds" / "dataset.json").num_positions == 30
    mic, ev = dataset.split(back, 12, 4)
    np.testing.assert_array_equal(mic, dataset.split(back, 12, 4)[0])
    assert len(mic) == 12 and len(ev) == 18
    assert sorted(np.r_[mic, ev].tolist()) == list(range(30))
    for k in (30, 31, 0):
        with pytest.raises(dataset.DatasetError):
            dataset.split(back, k, 0)


def test_dataset_schema_errors(tmp_path):
    _synthetic_dataset(tmp_path / "ds")
    with pytest.raises(dataset.DatasetError):
        dataset.load_dataset(tmp_path / "nothing")
    meta = json.loads((tmp_path / "ds" / "dataset.json").read_text())
    meta["num_positions"] = 31
    (tmp_path / "ds" / "dataset.json").write_text(json.dumps(meta))
    with pytest.raises(dataset.DatasetError):
        dataset.load_dataset(tmp_path / "ds")
    del meta["fs"]
    (tmp_path / "ds" / "dataset.json").write_text(json.dumps(meta))
    with pytest.raises(dataset.DatasetError):
        dataset.load_dataset(tmp_path / "ds")
    with pytest.raises(dataset.DatasetError):
        dataset.MeasuredRirDataset(np.zeros((3, 3)), np.zeros((2, 5)), 1600.0)


def test_dataset_run(tmp_path):
    _synthetic_dataset(tmp_path / "ds")
    cfg = config.preset("measured-data", dataset_path=str(tmp_path / "ds"), L=120, trials=2,
                        snr_db=[0.0, 20.0])
    res = runner.run_experiment(cfg)
    assert res.info["tau_decay"] == 0.05
    assert res.info["num_eval_points"] is None
    assert all(r["lambda"] >= 1e-3 for r in res.rows)
    assert len(res.rows) == 2 * 2 * 2 * 2


def test_oracle_suites_pass():
    for r in oracles.run_suite("all"):
        assert r["passed"], r
    with pytest.raises(KeyError):
        oracles.run_suite("nope")


def test_cli_run_and_env_override(tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(_small(trials=1, snr_db=[10.0], envelopes=["uniform"]).to_dict()))
    assert cli.main(["run", str(cfg_path), "--output", str(tmp_path / "out"), "--quiet"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "table.csv" in out["files"]
    assert (tmp_path / "out" / "trials.csv").is_file()
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", str(cfg_path), "--seed", "4", "--trials", "1", "--quiet"]) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 4


def test_cli_validate_show_oracle_dataset(tmp_path, capsys):
    assert cli.main(["validate", "free-field-paper"]) == 0
    assert json.loads(capsys.readouterr().out) == {"valid": True, "name": "free-field-paper"}
    assert cli.main(["show", "reverberant-paper"]) == 0
    assert json.loads(capsys.readouterr().out)["rt60"] == 0.36
    assert cli.main(["oracle", "spectral"]) == 0
    assert json.loads(capsys.readouterr().out)[0]["passed"]
    _synthetic_dataset(tmp_path / "ds")
    assert cli.main(["dataset", "split", str(tmp_path / "ds"), "--mics", "5", "--seed", "1"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert len(res["mics"]) == 5 and len(res["eval"]) == 25


def test_cli_errors_are_json(tmp_path, capsys):
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert cli.main(["frobnicate"]) == 2
    json.loads(capsys.readouterr().err)
    assert cli.main(["dataset", "split", str(tmp_path), "--mics", "3", "--seed", "0"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "DatasetError"
