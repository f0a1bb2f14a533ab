import json
import subprocess
import sys

import numpy as np
import pytest

from sgcoarse.cli import main, read_metrics
from conftest import STATION_COLUMNS, station_rows, write_csv

FILES = ("stations.csv", "trips.csv", "weather.csv", "holidays.txt", "ground_truth.json")


@pytest.fixture(scope="module")
def gen_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--stations", "24", "--days", "60", "--seed", "3", "--out", str(out)]) == 0
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


# -- generate ---------------------------------------------------------------------


def test_generate_defaults_writes_all_files(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--out", tmp_path / "d")
    assert code == 0
    assert all((tmp_path / "d" / f).is_file() for f in FILES)
    truth = json.loads((tmp_path / "d" / "ground_truth.json").read_text())
    assert (truth["n_stations"], truth["n_days"], truth["seed"]) == (64, 400, 7)


def test_generate_is_byte_identical(tmp_path, capsys):
    for d in "ab":
        run(capsys, "generate", "--stations", 12, "--days", 25, "--seed", 1, "--out", tmp_path / d)
    for f in FILES:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_generate_records_signal(tmp_path, capsys):
    run(capsys, "generate", "--stations", 12, "--days", 25, "--signal", 0, "--out", tmp_path)
    assert json.loads((tmp_path / "ground_truth.json").read_text())["signal_strength"] == 0.0


def test_generate_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "generate", "--stations", 12, "--days", 25, "--out", blocker / "sub")
    assert code != 0 and "error" in err


# -- train --------------------------------------------------------------------------


def test_train_artifacts(gen_dir, tmp_path, capsys):
    code, out, err = run(capsys, "train", "--model", 0, "--data", gen_dir, "--epochs", 10,
                         "--hidden", 8, "--out", tmp_path)
    assert code == 0
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,val_loss,train_acc,val_acc"
    rows = read_metrics(tmp_path / "metrics.csv")
    assert [m.epoch for m in rows] == list(range(1, 11))
    assert "warning" in err and "[9,10]" in err
    summary = (tmp_path / "summary.txt").read_text()
    assert summary.startswith("mean ± std over epochs [9,10]") and summary.strip() == out.strip()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["model_id"] == 0 and manifest["seed"] == 0
    assert manifest["config"]["epochs"] == 10 and manifest["finished"] is not None
    assert len(manifest["dataset_fingerprint"]) == 64
    params = np.load(tmp_path / "params.npz")
    assert len(params["train_idx"]) == 48 and len(params["val_idx"]) == 12


def test_train_rerun_is_byte_identical(gen_dir, tmp_path, capsys):
    for d in "ab":
        assert run(capsys, "train", "--model", 4, "--data", gen_dir, "--epochs", 3, "--hidden", 8,
                   "--clusters", 4, "--seed", 5, "--out", tmp_path / d)[0] == 0
    for f in ("metrics.csv", "summary.txt", "params.npz"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["dataset_fingerprint"] == b["dataset_fingerprint"]


@pytest.mark.parametrize("bad", [["--model", "11"], ["--model", "-1"], ["--model", "1", "--lr", "-0.1"],
                                 ["--model", "1", "--batch-size", "0"]])
def test_train_bad_flags(gen_dir, tmp_path, capsys, bad):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", str(gen_dir), "--out", str(tmp_path), *bad])
    assert exc.value.code != 0


def test_train_missing_data(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--model", 1, "--data", tmp_path / "nope", "--out", tmp_path / "r")
    assert code != 0 and err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sgcoarse", "train", "--model", "11", "--data", str(tmp_path),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode != 0 and "invalid choice" in r.stderr


# -- evaluate -----------------------------------------------------------------------


def test_evaluate_reference_baseline(reference_dir, tmp_path, capsys):
    assert run(capsys, "train", "--model", 0, "--data", reference_dir, "--epochs", 0, "--hidden", 4,
               "--out", tmp_path)[0] == 0
    code, out, _ = run(capsys, "evaluate", "--run", tmp_path, "--data", reference_dir)
    assert code == 0
    assert "majority baseline 0.3126" in out and "on 723 graphs" in out


def test_evaluate_untrained_is_chance(tmp_path, capsys):
    data = tmp_path / "data"
    run(capsys, "generate", "--stations", 16, "--days", 300, "--seed", 2, "--out", data)
    run(capsys, "train", "--model", 1, "--data", data, "--epochs", 0, "--hidden", 16, "--out", tmp_path / "r")
    _, out, _ = run(capsys, "evaluate", "--run", tmp_path / "r", "--data", data)
    acc = float(next(l for l in out.splitlines() if l.startswith("accuracy")).split()[1])
    assert abs(acc - 1 / 6) <= 0.1


def encode_labels_in_temperatures(data):
    """Rewrite temperatures so each class sits at its own well-separated point."""
    latent = json.loads((data / "ground_truth.json").read_text())["latent_class"]
    lines = (data / "weather.csv").read_text().splitlines()
    out = [lines[0]]
    for line in lines[1:]:
        f = line.split(",")
        c = latent[f[0]]
        lo = 20.0 * (c // 3)
        mean = lo + 10.0 * (c % 3)
        f[3:6] = [str(mean), str(mean + 5), str(lo)]
        out.append(",".join(f))
    (data / "weather.csv").write_text("\n".join(out) + "\n")


def test_evaluate_memorized_run(tmp_path, capsys):
    data = tmp_path / "data"
    run(capsys, "generate", "--stations", 12, "--days", 30, "--seed", 4, "--out", data)
    encode_labels_in_temperatures(data)
    run(capsys, "train", "--model", 1, "--data", data, "--epochs", 100, "--lr", 0.01, "--weight-decay", 0,
        "--batch-size", 8, "--hidden", 32, "--out", tmp_path / "r")
    _, out, _ = run(capsys, "evaluate", "--run", tmp_path / "r", "--data", data, "--split", "train")
    assert "accuracy          1.0000" in out


def test_evaluate_missing_run(gen_dir, tmp_path, capsys):
    code, _, err = run(capsys, "evaluate", "--run", tmp_path, "--data", gen_dir)
    assert code != 0 and "missing" in err


# -- cluster-inspect ------------------------------------------------------------------


def table_rows(out):
    return [l.split() for l in out.splitlines()[1:-1]]


def test_cluster_inspect_64_stations(tmp_path, capsys):
    run(capsys, "generate", "--stations", 64, "--days", 20, "--out", tmp_path)
    code, out, _ = run(capsys, "cluster-inspect", "--data", tmp_path, "--k", 5, "--clusters", 32, "--seed", 1)
    assert code == 0
    rows = table_rows(out)
    assert len(rows) == 32 and sum(int(r[1]) for r in rows) == 64
    assert out.splitlines()[-1].startswith("NCut = ")
    again = run(capsys, "cluster-inspect", "--data", tmp_path, "--k", 5, "--clusters", 32, "--seed", 1)[1]
    assert again == out


def test_cluster_inspect_separated_blobs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    coords = np.vstack([rng.normal(0, 0.01, (10, 2)), rng.normal(10, 0.01, (10, 2))])
    rows = station_rows(20)
    for r, xy in zip(rows, coords):
        r[1:3] = xy.tolist()
    write_csv(tmp_path / "stations.csv", STATION_COLUMNS, rows)
    code, out, _ = run(capsys, "cluster-inspect", "--data", tmp_path, "--k", 3, "--clusters", 2)
    assert code == 0
    assert float(out.splitlines()[-1].split("=")[1]) == pytest.approx(0, abs=1e-9)
    assert sorted(int(r[1]) for r in table_rows(out)) == [10, 10]


def test_cluster_inspect_k_too_large(gen_dir, capsys):
    code, _, err = run(capsys, "cluster-inspect", "--data", gen_dir, "--k", 24)
    assert code != 0 and "k" in err
