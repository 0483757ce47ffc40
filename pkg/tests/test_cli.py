"""End-to-end runs of every subcommand on a small synthetic world."""

import csv
import io
import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from dynmap.applications import read_pgm, save_cells
from dynmap.cli import main
from dynmap.dataset import Dataset, GeoLocation, load_dataset, save_dataset


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "train.jsonl"), "--samples", "300", "--seed", "1"]) == 0
    assert main(["synth", "--out", str(d / "test.jsonl"), "--samples", "40", "--seed", "2"]) == 0
    assert main(["train", "--data", str(d / "train.jsonl"), "--out", str(d / "m.json"), "--epochs", "1"]) == 0
    return d


class TestPipeline:
    def test_synth_is_deterministic(self, workdir, tmp_path):
        main(["synth", "--out", str(tmp_path / "again.jsonl"), "--samples", "300", "--seed", "1"])
        assert (tmp_path / "again.jsonl").read_bytes() == (workdir / "train.jsonl").read_bytes()

    def test_synth_dims(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "d.jsonl"), "--samples", "5", "--dims", "3,4,2"]) == 0
        assert load_dataset(tmp_path / "d.jsonl").dims.as_dict() == {"overhead": 3, "places": 4, "transient": 2}

    def test_eval(self, workdir, capsys):
        assert main(["eval", "--data", str(workdir / "test.jsonl"), "--ckpt", str(workdir / "m.json")]) == 0
        rows = _rows(capsys.readouterr().out)
        assert [r["metric"] for r in rows] == ["top1", "top5", "within0.1", "within0.2"]
        assert all(0.0 <= float(r["value"]) <= 1.0 for r in rows)
        assert {r["model"] for r in rows} == {"sat+time+loc"}

    def test_knn(self, workdir, capsys):
        code = main(["knn", "--train", str(workdir / "train.jsonl"), "--test", str(workdir / "test.jsonl"),
                     "--k", "5", "--grid", "0.1,1,10"])
        assert code == 0
        rows = _rows(capsys.readouterr().out)
        assert len(rows) == 8
        assert {r["model"] for r in rows} == {"time+loc (k-NN)", "prior"}

    def test_knn_location_only_skips_grid(self, workdir, capsys):
        main(["knn", "--train", str(workdir / "train.jsonl"), "--test", str(workdir / "test.jsonl"),
              "--k", "5", "--features", "loc"])
        captured = capsys.readouterr()
        assert "time scales" not in captured.err
        assert _rows(captured.out)[0]["model"] == "loc (k-NN)"

    def test_localize(self, workdir, capsys):
        test = str(workdir / "test.jsonl")
        assert main(["localize", "--ckpt", str(workdir / "m.json"), "--queries", test, "--candidates", test]) == 0
        rows = _rows(capsys.readouterr().out)
        assert [(r["distance"], r["metric"]) for r in rows] == [
            (k, m) for k in ("places", "transient", "combine") for m in ("top1%", "top5%")]

    def test_verify_with_heatmaps(self, workdir, capsys):
        heat = workdir / "heat"
        assert main(["verify", "--ckpt", str(workdir / "m.json"), "--queries", str(workdir / "test.jsonl"),
                     "--heatmap-dir", str(heat), "--topk-percents", "1"]) == 0
        assert len(_rows(capsys.readouterr().out)) == 3
        assert len(list(heat.glob("*.csv"))) == len(list(heat.glob("*.pgm"))) == 40
        grid = read_pgm(heat / "s000000.pgm")
        assert grid.shape == (12, 24)
        assert len(_rows((heat / "s000000.csv").read_text())) == 288

    def test_retrieve_by_id(self, workdir, capsys):
        assert main(["retrieve", "--ckpt", str(workdir / "m.json"), "--gallery", str(workdir / "test.jsonl"),
                     "--lat", "10", "--lon", "20", "--month", "6", "--hour", "12",
                     "--overhead-from", "s000003", "--n", "4"]) == 0
        rows = _rows(capsys.readouterr().out)
        assert [r["rank"] for r in rows] == ["0", "1", "2", "3"]
        scores = [float(r["combine"]) for r in rows]
        assert scores == sorted(scores)

    def test_retrieve_by_file(self, workdir, capsys):
        vec = workdir / "vec.json"
        vec.write_text(json.dumps(load_dataset(workdir / "test.jsonl")[3].overhead.tolist()))
        args = ["retrieve", "--ckpt", str(workdir / "m.json"), "--gallery", str(workdir / "test.jsonl"),
                "--lat", "10", "--lon", "20", "--month", "6", "--hour", "12", "--n", "4", "--overhead-from"]
        main(args + ["s000003"])
        by_id = capsys.readouterr().out
        main(args + [str(vec)])
        assert capsys.readouterr().out == by_id

    def test_map(self, workdir):
        rng = np.random.default_rng(0)
        cells = [(GeoLocation(lat, lon), rng.normal(size=16)) for lat in (-30, 0, 30) for lon in (-90, 0, 90, 180)]
        save_cells(workdir / "cells.jsonl", cells, (3, 4))
        assert main(["map", "--ckpt", str(workdir / "m.json"), "--cells", str(workdir / "cells.jsonl"),
                     "--month", "6", "--hour", "12", "--attribute", "transient:0",
                     "--csv", str(workdir / "map.csv"), "--pgm", str(workdir / "map.pgm")]) == 0
        assert len(_rows((workdir / "map.csv").read_text())) == 12
        assert read_pgm(workdir / "map.pgm").shape == (3, 4)

    def test_module_entry_point(self, workdir):
        out = subprocess.run([sys.executable, "-m", "dynmap", "eval", "--data", str(workdir / "test.jsonl"),
                              "--ckpt", str(workdir / "m.json")], capture_output=True, text=True, check=True)
        assert out.stdout.startswith("model,metric,value")


class TestErrors:
    def test_missing_dataset(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "m.json")]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_malformed_dataset(self, tmp_path, capsys):
        (tmp_path / "bad.jsonl").write_text("{oops\n")
        assert main(["train", "--data", str(tmp_path / "bad.jsonl"), "--out", str(tmp_path / "m.json")]) == 1
        assert "line 1" in capsys.readouterr().err

    def test_dims_mismatch(self, workdir, tmp_path, capsys):
        main(["synth", "--out", str(tmp_path / "d.jsonl"), "--samples", "5", "--dims", "3,4,2"])
        assert main(["eval", "--data", str(tmp_path / "d.jsonl"), "--ckpt", str(workdir / "m.json")]) == 1

    def test_unknown_attribute(self, workdir, capsys):
        save_cells(workdir / "c1.jsonl", [(GeoLocation(0, 0), np.zeros(16))])
        assert main(["map", "--ckpt", str(workdir / "m.json"), "--cells", str(workdir / "c1.jsonl"),
                     "--month", "6", "--hour", "12", "--attribute", "transient:99",
                     "--csv", str(workdir / "x.csv")]) == 1

    def test_unknown_overhead_source(self, workdir, capsys):
        assert main(["retrieve", "--ckpt", str(workdir / "m.json"), "--gallery", str(workdir / "test.jsonl"),
                     "--lat", "0", "--lon", "0", "--month", "1", "--hour", "0", "--overhead-from", "nobody"]) == 1

    def test_localize_needs_matching_ids(self, workdir, tmp_path, capsys):
        data = load_dataset(workdir / "test.jsonl")
        renamed = Dataset(data.dims, tuple(replace(r, id="c" + r.id) for r in data))
        save_dataset(renamed, tmp_path / "cands.jsonl")
        assert main(["localize", "--ckpt", str(workdir / "m.json"), "--queries", str(workdir / "test.jsonl"),
                     "--candidates", str(tmp_path / "cands.jsonl")]) == 1
        assert "no candidate" in capsys.readouterr().err

    def test_bad_dims_flag(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["synth", "--out", str(tmp_path / "d.jsonl"), "--samples", "5", "--dims", "3,4"])
