import csv
import json

import jsonschema
import numpy as np
import pytest

from plregions import serialize as io
from plregions.cli import main
from plregions.data import write_idx

from conftest import MNIST_DIR, needs_mnist

INT_COLS = {"line", "n_regions", "n_crossings", "count", "n_regions_2d"}


def _typed_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in INT_COLS else float(v)) for k, v in r.items()} for r in rows]


def _manifest_ok(d):
    m = json.loads((d / "manifest.json").read_text())
    jsonschema.validate(m, io.load_schema("manifest"))
    return m


def test_init_and_count_line_csv(tmp_path):
    assert main(["init", "--arch", "6,8,8,1", "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    m = _manifest_ok(tmp_path / "a")
    assert m["seeds"] == {"seed": 3} and "init" in m["command"]
    net = str(tmp_path / "a" / "network.json")
    rc = main(["count-line", "--net", net, "--through-origin", "--lines", "7",
               "--format", "csv", "--out", str(tmp_path / "b")])
    assert rc == 0
    rows = _typed_csv(tmp_path / "b" / "count_line.csv")
    assert len(rows) == 7
    for r in rows:
        jsonschema.validate(r, io.load_schema("count_line"))
    _manifest_ok(tmp_path / "b")


def test_runs_are_bit_identical(tmp_path):
    for name in ("x", "y"):
        main(["init", "--arch", "5,6,1", "--seed", "1", "--out", str(tmp_path / name)])
        main(["count-line", "--net", str(tmp_path / name / "network.json"), "--lines", "4",
              "--seed", "2", "--out", str(tmp_path / name / "c")])
    assert ((tmp_path / "x" / "network.json").read_bytes()
            == (tmp_path / "y" / "network.json").read_bytes())
    assert ((tmp_path / "x" / "c" / "count_line.json").read_bytes()
            == (tmp_path / "y" / "c" / "count_line.json").read_bytes())


def test_sawtooth_perturb_enumerate_render(tmp_path):
    assert main(["sawtooth", "--n", "3", "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "sawtooth.json").read_text())
    assert rep["n_neurons"] == 13 and rep["pieces_on_unit_interval"] == 16
    assert main(["perturb", "--net", str(tmp_path / "s" / "network.json"), "--noise-sd", "0.1",
                 "--out", str(tmp_path / "p")]) == 0
    main(["init", "--arch", "2,8,8,1", "--bias-sd", "0.5", "--out", str(tmp_path / "n")])
    net = str(tmp_path / "n" / "network.json")
    assert main(["enumerate-plane", "--net", net, "--anchors", "axes", "--svg",
                 "--out", str(tmp_path / "e")]) == 0
    rep = json.loads((tmp_path / "e" / "enumerate_plane.json").read_text())
    jsonschema.validate(rep, io.load_schema("enumerate_plane"))
    assert rep["invariants_ok"]
    assert main(["render", "--arena", str(tmp_path / "e" / "arena.json"),
                 "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "regions.svg").read_text().count("<path") == rep["n_regions"]


def test_distance_uniform(tmp_path):
    main(["init", "--arch", "3,8,1", "--out", str(tmp_path / "n")])
    assert main(["distance", "--net", str(tmp_path / "n" / "network.json"), "--source",
                 "uniform-cube", "--count", "300", "--format", "csv",
                 "--out", str(tmp_path / "d")]) == 0
    jsonschema.validate(json.loads((tmp_path / "d" / "distance.json").read_text()),
                        io.load_schema("distance"))
    for r in _typed_csv(tmp_path / "d" / "distance_histogram.csv"):
        jsonschema.validate(r, io.load_schema("distance_histogram"))


def test_verify_theory_exit_codes(tmp_path):
    ok = main(["verify-theory", "--check", "grad-moment", "--seeds", "300",
               "--arch", "16,16,16,1", "--out", str(tmp_path / "ok")])
    assert ok == 0
    doc = json.loads((tmp_path / "ok" / "theory.json").read_text())
    jsonschema.validate(doc, io.load_schema("theory_report"))
    # three networks cannot pin the second moment to 5%
    bad = main(["verify-theory", "--check", "grad-moment", "--seeds", "3",
                "--arch", "4,2,2,2,1", "--out", str(tmp_path / "bad")])
    doc = json.loads((tmp_path / "bad" / "theory.json").read_text())
    assert doc["reports"][0]["passed"] is False
    assert bad == 3


def test_train_on_blobs(tmp_path):
    rc = main(["train", "--data", "blobs", "--widths", "6,6", "--epochs", "2", "--lines", "4",
               "--points", "50", "--schedule", "0,0.5,1,2", "--format", "csv",
               "--out", str(tmp_path / "t")])
    assert rc == 0
    rows = _typed_csv(tmp_path / "t" / "metrics.csv")
    assert [r["epoch_fraction"] for r in rows] == [0.0, 0.5, 1.0, 2.0]
    for r in rows:
        jsonschema.validate(r, io.load_schema("metrics"))
    _manifest_ok(tmp_path / "t")


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["bogus"]) == 1
    assert main(["init", "--out", str(tmp_path)]) == 1                 # missing --arch
    assert main(["init", "--arch", "a,b", "--out", str(tmp_path)]) == 1
    assert main(["count-line", "--net", "x", "--threads", "0"]) == 1


def test_data_errors_exit_2(tmp_path):
    assert main(["count-line", "--net", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"format": "plregions.network", "version": 9}))
    assert main(["perturb", "--net", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
    # MNIST-shaped IDX files with a wrong magic number
    d = tmp_path / "mn"
    d.mkdir()
    for img, lab in (("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
                     ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")):
        write_idx(d / lab, d / img, np.zeros((2, 4), np.uint8), [0, 1], (2, 2))
    main(["init", "--arch", "4,3,1", "--out", str(tmp_path / "n")])
    assert main(["count-line", "--net", str(tmp_path / "n" / "network.json"),
                 "--random-point", "mnist", "--mnist-dir", str(d), "--out", str(tmp_path)]) == 2


@needs_mnist
def test_count_line_on_mnist_points(tmp_path):
    main(["init", "--arch", "784,16,16,10", "--out", str(tmp_path / "n")])
    rc = main(["count-line", "--net", str(tmp_path / "n" / "network.json"), "--through-origin",
               "--random-point", "mnist", "--lines", "100", "--mnist-dir", str(MNIST_DIR),
               "--format", "csv", "--out", str(tmp_path / "c")])
    assert rc == 0
    assert len(_typed_csv(tmp_path / "c" / "count_line.csv")) == 100
