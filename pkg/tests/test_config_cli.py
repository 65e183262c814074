import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipeline import full_run, run, snapshot
from somnoscat.bilstm import NetworkConfig
from somnoscat.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, filterbank_curves, main
from somnoscat.config import DATA_DIR_ENV, PipelineConfig, load_config, parse_config, render_config
from somnoscat.features import FeatureSet, extract_features, feature_names, load_features
from somnoscat.record_io import generate_synthetic, load_annotations, load_predictions


def test_render_parse_round_trip():
    cfg = PipelineConfig(data_dir="/tmp/x", seed=4, feature_set="physio75", net=NetworkConfig(2, 8, 0.3, False))
    assert parse_config(render_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    fs=st.sampled_from([f.value for f in FeatureSet]),
    layers=st.integers(1, 4),
    hidden=st.integers(1, 300),
    bidir=st.booleans(),
    lr=st.floats(1e-6, 1.0),
    target_dim=st.integers(1, 100),
    data_dir=st.text("abcxyz/_-.", min_size=1, max_size=20),
)
def test_round_trip_property(seed, fs, layers, hidden, bidir, lr, target_dim, data_dir):
    cfg = PipelineConfig(data_dir=data_dir, seed=seed, feature_set=fs).with_overrides(
        **{"net.layers": layers, "net.hidden": hidden, "net.bidirectional": bidir,
           "train.lr": lr, "scatter.target_dim": target_dim}
    )
    assert parse_config(render_config(cfg)) == cfg


def test_sections_and_comments(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# demo\nseed = 7\n[net]\nhidden = 12  # small\nbidirectional = no\n[train]\nepochs = 4\n")
    cfg = load_config(path)
    assert (cfg.seed, cfg.net.hidden, cfg.net.bidirectional, cfg.train.epochs) == (7, 12, False, 4)
    assert cfg.train_config().seed == 7


@pytest.mark.parametrize("text", ["bogus = 1", "net.width = 3", "[model]\nx = 1", "seed 4", "feature_set = raw"])
def test_bad_config_rejected(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_data_dir_from_environment(monkeypatch):
    monkeypatch.setenv(DATA_DIR_ENV, "/srv/psg")
    assert PipelineConfig().data_dir == "/srv/psg"
    monkeypatch.delenv(DATA_DIR_ENV)
    assert PipelineConfig().data_dir == "data"


def test_feature_dims_follow_knobs():
    assert PipelineConfig(feature_set="scatter390").feature_dim == 390
    assert PipelineConfig().with_overrides(**{"scatter.target_dim": 10}).feature_dim == 75 + 60


@pytest.mark.parametrize("feature_set,dim", [("physio75", 75), ("scatter390", 390), ("all465", 465)])
def test_extract_dimensions(feature_set, dim):
    record, _ = generate_synthetic(0, 60, [(10, 20, "target")])
    values = extract_features(record, feature_set)
    assert values.shape == (12, dim) and np.all(np.isfinite(values))
    assert len(feature_names(feature_set)) == dim


@pytest.mark.slow
def test_full_night_dimensions():
    record, _ = generate_synthetic(1, 35 * 60, [])
    full = extract_features(record, "all465")
    assert full.shape == (420, 465)
    assert np.array_equal(extract_features(record, "physio75"), full[:, :75])


def test_pipeline_artifacts(tmp_path):
    assert full_run(tmp_path) == [EXIT_OK] * 5
    rec = tmp_path / "records" / "rec0000"
    fm = load_features(tmp_path / "features" / "rec0000.feat")
    assert fm.values.shape == (6, 75)
    probs = load_predictions(rec).probs
    assert probs.size == 1000 * fm.values.shape[0] == load_annotations(rec).labels.size
    assert np.all((probs >= 0) & (probs <= 1))
    assert (tmp_path / "models" / "current").read_text().strip() == "model.ckpt"
    report = list(csv.reader((tmp_path / "reports" / "report.csv").open()))
    assert report[0] == ["fold", "AUPRC", "AUROC"] and report[1][0] == "all"


def test_pipeline_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    full_run(a)
    full_run(b)
    sa, sb = snapshot(a), snapshot(b)
    assert sa.keys() == sb.keys() and len(sa) > 0
    assert all(sa[k] == sb[k] for k in sa)


def test_ensemble_of_one_equals_single_model(tmp_path):
    full_run(tmp_path)
    single = load_predictions(tmp_path / "records" / "rec0001").probs
    manifest = tmp_path / "models" / "one.json"
    manifest.write_text(json.dumps({"members": ["model.ckpt"]}))
    assert run(tmp_path, "predict", "--model", str(manifest)) == EXIT_OK
    assert load_predictions(tmp_path / "records" / "rec0001").probs.tobytes() == single.tobytes()


def test_cross_validation_and_holdout(tmp_path):
    assert run(tmp_path, "synth", "--records", "6", "--duration", "30") == EXIT_OK
    assert run(tmp_path, "extract", "--feature-set", "physio75") == EXIT_OK
    args = ["--feature-set", "physio75", "--epochs", "2", "--hidden", "3", "--layers", "1", "--cv", "3", "--pretrain-select", "10"]
    assert run(tmp_path, "train", *args) == EXIT_OK
    models = tmp_path / "models"
    manifest = json.loads((models / "ensemble.json").read_text())
    assert manifest["members"] == ["fold01.ckpt", "fold02.ckpt", "fold03.ckpt"]
    assert sorted(manifest["folds"].values()) == [1, 1, 2, 2, 3, 3]
    scores = list(csv.DictReader((models / "feature_scores.csv").open()))
    assert len(scores) == 75 and sum(1 for r in scores if r["rank"]) == 10
    assert len((tmp_path / "reports" / "cv.csv").read_text().splitlines()) == 1 + 3 + 2
    assert run(tmp_path, "predict", "--holdout") == EXIT_OK
    assert run(tmp_path, "evaluate", "--folds", str(models / "ensemble.json")) == EXIT_OK
    rows = list(csv.reader((tmp_path / "reports" / "report.csv").open()))
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "Mean", "STD"]


def test_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "extract") == EXIT_DATA
    assert run(tmp_path, "train") == EXIT_DATA
    with pytest.raises(SystemExit) as err:
        main(["train", "--no-such-flag"])
    assert err.value.code == EXIT_USAGE
    assert run(tmp_path, "synth", "--records", "2", "--duration", "10") == EXIT_OK
    assert run(tmp_path, "extract", "--feature-set", "physio75") == EXIT_OK
    assert run(tmp_path, "train", "--feature-set", "all465", "--epochs", "1") == EXIT_DATA
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert run(tmp_path, "show-config", "--config", str(bad)) == EXIT_USAGE


def test_extract_skips_broken_record(tmp_path):
    assert run(tmp_path, "synth", "--records", "2", "--duration", "10") == EXIT_OK
    (tmp_path / "records" / "rec0001" / "ch03.f32").unlink()
    assert run(tmp_path, "extract", "--feature-set", "physio75") == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "features").iterdir()) == ["rec0000.feat"]


def test_show_config_round_trips(tmp_path, capsys):
    assert run(tmp_path, "show-config", "--hidden", "9", "--seed", "3", "--feature-set", "scatter390") == EXIT_OK
    cfg = parse_config(capsys.readouterr().out)
    assert (cfg.net.hidden, cfg.seed, cfg.feature_set, cfg.data_dir) == (9, 3, "scatter390", str(tmp_path))


def test_filterbank_outputs(tmp_path):
    curves = filterbank_curves()
    assert len(curves) == 22
    assert [c[0] for c in curves][:2] == ["bank1_00", "bank1_01"] and curves[-1][0] == "bank2_07"
    assert run(tmp_path, "plot-filterbank", "--out", str(tmp_path / "fb")) == EXIT_OK
    rows = list(csv.reader((tmp_path / "fb" / "filterbank.csv").open()))
    assert rows[0] == ["omega_Hz", "filter_id", "magnitude"]
    assert len({r[1] for r in rows[1:]}) == 22 and len(rows) == 1 + 22 * 1001
    assert (tmp_path / "fb" / "filterbank.svg").read_text().startswith("<svg")


@pytest.mark.slow
def test_cross_validated_auprc_on_separable_data(tmp_path):
    assert run(tmp_path, "synth", "--records", "20", "--duration", "60") == EXIT_OK
    assert run(tmp_path, "extract", "--jobs", "4") == EXIT_OK
    args = ["--cv", "5", "--pretrain-select", "40", "--epochs", "10", "--hidden", "16", "--layers", "1"]
    assert run(tmp_path, "train", *args) == EXIT_OK
    rows = {r[0]: r for r in csv.reader((tmp_path / "reports" / "cv.csv").open())}
    assert float(rows["Mean"][1]) >= 0.95
