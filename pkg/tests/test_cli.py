import itertools

import numpy as np
import pytest

from sleepfields import bench
from sleepfields.cli import main
from sleepfields.core import load_dataset


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("d") / "synth.csv"
    assert main(["synth", "--states", "3", "--dim", "3", "--sequences", "6", "--length", "30", "--seed", "2", "--out", str(path)]) == 0
    return path


def test_synth_writes_dataset(synth_csv):
    d = load_dataset(synth_csv)
    assert len(d.sequences) == 6 and d.m == 3 and d.n_epochs == 180


def test_train_predict(tmp_path, synth_csv, capsys):
    model = tmp_path / "crf.txt"
    out = tmp_path / "pred.csv"
    assert main(["train", "--data", str(synth_csv), "--model", "crf", "--max-iter", "20", "--out", str(model)]) == 0
    assert main(["predict", "--model-file", str(model), "--data", str(synth_csv), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sequence_id,epoch_index,label"
    assert len(lines) == 181
    assert "accuracy" in capsys.readouterr().out


@pytest.mark.parametrize("extractor,flags", [("fcm", ["--clusters", "4"]), ("dbn", ["--layers", "5", "--epochs", "2"])])
def test_extract(tmp_path, synth_csv, extractor, flags):
    out = tmp_path / "f.csv"
    assert main(["extract", extractor, "--data", str(synth_csv), "--out", str(out), *flags]) == 0
    d = load_dataset(out)
    assert d.m == (4 if extractor == "fcm" else 3)
    np.testing.assert_allclose(d.epochs().sum(1), 1, atol=1e-9)


def test_cv_is_byte_identical(tmp_path, synth_csv, monkeypatch):
    args = ["cv", "--data", str(synth_csv), "--model", "crf", "--folds", "3", "--max-iter", "20", "--scenario", "fcm", "--clusters", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    # fake clocks that make each fold look like it took several hours, differently per run
    for out, step in ((a, 3600 * 2.5), (b, 3600 * 7.25)):
        ticks = itertools.count(0, step)
        monkeypatch.setattr(bench.time, "perf_counter", lambda: next(ticks))
        assert main([*args, "--out", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["confusion.csv", "report.csv", "report.txt", "timing.csv"]
    for n in ["confusion.csv", "report.csv", "report.txt"]:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    assert (a / "timing.csv").read_text().splitlines()[1] == "1,2.50"
    assert (b / "timing.csv").read_text().splitlines()[1] == "1,7.25"


def test_sweep_writes_reports(tmp_path, synth_csv):
    out = tmp_path / "s"
    args = ["sweep", "--data", str(synth_csv), "--model", "cnf", "--folds", "2", "--max-iter", "5", "--param", "gates", "--values", "2,3", "--out", str(out)]
    assert main(args) == 0
    assert (out / "sweep.csv").read_text().startswith("Fold,acc g=2,acc g=3")
    assert (out / "gates=3" / "report.csv").exists()
    assert "hours" not in (out / "sweep.txt").read_text()
    assert (out / "gates=3" / "timing.csv").exists()


def test_gradcheck(capsys):
    assert main(["gradcheck", "--model", "crf"]) == 0
    assert "crf" in capsys.readouterr().out


def test_exit_codes(tmp_path, synth_csv):
    assert main(["cv", "--data", str(synth_csv), "--folds", "1"]) == 2
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("sequence_id,epoch_index,label,f0\ns,0,A,oops\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m")]) == 3
    with pytest.raises(SystemExit):
        main(["train"])
