from pathlib import Path

import pytest

from wifinids import cli, evaluation, ingest, train


def run(argv, out_dir):
    return cli.main(list(argv) + ["--out-dir", str(out_dir)])


def only_dir(base, prefix):
    found = sorted(Path(base).glob(f"{prefix}-*"))
    assert len(found) == 1, found
    return found[0]


@pytest.fixture
def splits_dir(tmp_path):
    assert run(["synth", "--classes", "2", "--n", "60", "--seed", "3", "--format", "splits"], tmp_path / "s") == 0
    return only_dir(tmp_path / "s", "synth")


def test_synth_raw_deterministic(tmp_path, capsys):
    argv = ["synth", "--classes", "8", "--n", "2000", "--seed", "7"]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    a = only_dir(tmp_path / "a", "synth") / "synthetic.csv"
    b = only_dir(tmp_path / "b", "synth") / "synthetic.csv"
    assert a.read_bytes() == b.read_bytes()
    records = list(ingest.parse_csv(a))
    assert len(records) == 16_000
    assert "16,000 records" in capsys.readouterr().out


def test_synth_splits(splits_dir):
    for name in ingest.SPLIT_NAMES:
        assert (splits_dir / f"{name}.csv").is_file()
    # 120 records: 36 test, then 25 validation from the remaining 84
    sizes = [len(ingest.load_split(splits_dir / f"{n}.csv")) for n in ingest.SPLIT_NAMES]
    assert sizes == [59, 25, 36]


def test_preprocess_merges_files(tmp_path, capsys):
    x, y = evaluation.generate_imbalanced(20, 8, 3, seed=1)
    half = len(y) // 2
    evaluation.write_raw_csv(tmp_path / "a.csv", x[:half], y[:half], extra_columns=4)
    evaluation.write_raw_csv(tmp_path / "b.csv", x[half:], y[half:], seed=1)
    code = run(["preprocess", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")], tmp_path / "out")
    assert code == 0
    out = capsys.readouterr().out
    # 3:1 is already below the default 8:1 target, so nothing is dropped
    assert f"{len(y):,}" in out
    d = only_dir(tmp_path / "out", "preprocess")
    total = sum(len(ingest.load_split(d / f"{n}.csv")) for n in ingest.SPLIT_NAMES)
    assert total == len(y)
    assert "ratio" in (d / "config.txt").read_text()
    assert "8.0" in (d / "config.txt").read_text()
    assert (d / "scaler.txt").is_file() and (d / "run.log").is_file()


def test_preprocess_unknown_label(tmp_path, capsys):
    x, y = evaluation.generate_synthetic(3, 2, seed=1)
    path = tmp_path / "raw.csv"
    evaluation.write_raw_csv(path, x, y)
    text = path.read_text().replace("De-Authentication", "Botnet", 1)
    path.write_text(text)
    assert run(["preprocess", str(path)], tmp_path / "out") != 0
    assert "Botnet" in capsys.readouterr().err


def test_preprocess_missing_file(tmp_path, capsys):
    assert run(["preprocess", str(tmp_path / "nope.csv")], tmp_path / "out") == 1
    assert "not found" in capsys.readouterr().err


def test_train_defaults_and_summary(tmp_path, splits_dir, capsys):
    code = run(["train", "--data-dir", str(splits_dir), "--max-epochs", "2"], tmp_path / "out")
    assert code == 0
    out = capsys.readouterr().out
    assert "10,770" in out
    d = only_dir(tmp_path / "out", "train")
    clf = train.load_model(d / "model.wnm")
    assert (clf.technique, clf.architecture, clf.task) == ("gaf", "2d-2l", "binary")
    cfg = (d / "config.txt").read_text()
    for line in ("batch-size = 256", "lr = 0.001", "patience = 3", "max-epochs = 2"):
        assert line in cfg
    assert (d / "epochs.csv").read_text().count("\n") == 3


def test_train_data_dir_from_env(tmp_path, splits_dir, monkeypatch):
    monkeypatch.setenv("WIFINIDS_DATA_DIR", str(splits_dir))
    assert run(["train", "--max-epochs", "1", "--arch", "1d-1l"], tmp_path / "out") == 0


def test_invalid_technique_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        run(["train", "--data-dir", str(tmp_path), "--technique", "wavelet"], tmp_path / "out")
    assert err.value.code == 2
    msg = capsys.readouterr().err
    for t in ("cyclic", "circulant", "grayscale-circulant", "correlation", "gaf"):
        assert t in msg


def test_train_missing_splits(tmp_path, capsys):
    assert run(["train", "--data-dir", str(tmp_path)], tmp_path / "out") == 1
    assert "train.csv" in capsys.readouterr().err


def test_config_file(tmp_path, splits_dir):
    cfg = tmp_path / "run.conf"
    cfg.write_text(f"# desk run\ndata-dir = {splits_dir}\narch = 1d-2l\nmax_epochs = 1\n")
    assert run(["train", "--config", str(cfg)], tmp_path / "out") == 0
    d = only_dir(tmp_path / "out", "train")
    assert train.load_model(d / "model.wnm").architecture == "1d-2l"


def test_config_file_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.conf"
    cfg.write_text("colour = blue\n")
    assert run(["train", "--config", str(cfg)], tmp_path / "out") == 2
    assert "colour" in capsys.readouterr().err


@pytest.fixture
def trained(tmp_path, splits_dir):
    assert run(["train", "--data-dir", str(splits_dir), "--max-epochs", "2"], tmp_path / "t") == 0
    return only_dir(tmp_path / "t", "train") / "model.wnm"


def test_eval_and_report(tmp_path, splits_dir, trained, capsys):
    test_csv = str(splits_dir / "test.csv")
    argv = ["eval", "--model", str(trained), "--data", test_csv, "--against-published",
            "--train-data", str(splits_dir / "train.csv")]
    assert run(argv, tmp_path / "e") == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "published AWID3 reference" in out
    d = only_dir(tmp_path / "e", "eval")
    assert (d / "confusion.csv").read_text().startswith("true\\pred,Normal,Attack")
    assert run(["report", str(d / "metrics.csv")], tmp_path / "r") == 0
    table = (only_dir(tmp_path / "r", "report") / "comparison.csv").read_text().splitlines()
    assert table[1].startswith("gaf,2D-2L,") and table[1].endswith(",*")


def test_eval_task_mismatch(tmp_path, splits_dir, trained, capsys):
    argv = ["eval", "--model", str(trained), "--data", str(splits_dir / "test.csv"), "--task", "multiclass"]
    assert run(argv, tmp_path / "e") == 1
    assert "task" in capsys.readouterr().err


def test_eval_corrupt_model(tmp_path, splits_dir, trained, capsys):
    data = bytearray(trained.read_bytes())
    data[40] ^= 1
    trained.write_bytes(bytes(data))
    assert run(["eval", "--model", str(trained), "--data", str(splits_dir / "test.csv")], tmp_path / "e") == 1
    assert "checksum" in capsys.readouterr().err


def test_bench(tmp_path, capsys):
    argv = ["bench", "--arch", "1d-1l", "--records", "1000", "--reps", "1"]
    assert run(argv, tmp_path / "b") == 0
    assert "forward-only" in capsys.readouterr().out
    assert (only_dir(tmp_path / "b", "bench") / "latency.json").is_file()


def test_preview(tmp_path, splits_dir, capsys):
    pgm = tmp_path / "x.pgm"
    argv = ["preview", "--data", str(splits_dir / "test.csv"), "--technique", "correlation", "--pgm", str(pgm)]
    assert run(argv, tmp_path / "p") == 0
    assert pgm.read_bytes().startswith(b"P5")
    assert run(["preview", "--data", str(splits_dir / "test.csv"), "--index", "9999"], tmp_path / "p") == 1


def test_run_dir_hash_ignores_out_dir(tmp_path):
    parser = cli.build_parser()
    a = parser.parse_args(["synth", "--out-dir", "x", "--threads", "1"])
    b = parser.parse_args(["synth", "--out-dir", "y", "--threads", "4"])
    c = parser.parse_args(["synth", "--seed", "1"])
    assert cli.config_hash(a) == cli.config_hash(b) != cli.config_hash(c)
