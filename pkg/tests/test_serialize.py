import csv
import json

import jsonschema
import numpy as np
import pytest

from plregions import serialize as io
from plregions.netgen import InitSpec, build_sawtooth, he_init
from plregions.network import ShapeError, hard_tanh
from plregions.region1d import count_regions_on_segment
from plregions.region2d import SliceFrame, enumerate_plane


@pytest.mark.parametrize("encoding", ["hex", "decimal"])
def test_round_trip_is_bit_exact(tmp_path, encoding):
    net = he_init(InitSpec((20, 16, 8, 3), 0.3, seed=9, activation=hard_tanh()))
    path = io.save_network(net, tmp_path / "n.json", encoding)
    back = io.load_network(path)
    X = np.random.default_rng(0).standard_normal((100, 20))
    assert net(X).tobytes() == back(X).tobytes()
    assert back.activation == net.activation
    assert back.metadata["seed"] == 9
    jsonschema.validate(json.loads(path.read_text()), io.load_schema("network"))


def test_sawtooth_round_trip_keeps_count(tmp_path):
    net = build_sawtooth(4)
    back = io.load_network(io.save_network(net, tmp_path / "s.json"))
    assert (count_regions_on_segment(back, [0.0], [1.0]).n_regions
            == count_regions_on_segment(net, [0.0], [1.0]).n_regions)


def test_version_mismatch(tmp_path):
    d = io.network_to_dict(build_sawtooth(1))
    d["version"] = 2
    with pytest.raises(io.NetworkFileError, match="version"):
        io.network_from_dict(d)


def test_edited_width_names_layer():
    d = io.network_to_dict(he_init(InitSpec((3, 4, 2))), "decimal")
    d["layers"][1]["weights"] = d["layers"][1]["weights"][:-1]
    with pytest.raises(ShapeError, match="layer 2"):
        io.network_from_dict(d)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    io.atomic_write(tmp_path / "a.txt", "one")
    io.atomic_write(tmp_path / "a.txt", "two")
    assert (tmp_path / "a.txt").read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_tables_and_manifest(tmp_path):
    rows = [{"line": 0, "n_regions": 3, "n_crossings": 2, "regions_per_neuron": 0.5}]
    p = io.write_table(tmp_path / "count_line", rows, "csv")
    with open(p) as fh:
        got = list(csv.DictReader(fh))
    assert got[0]["n_regions"] == "3"
    p = io.write_table(tmp_path / "count_line", rows, "json")
    for r in json.loads(p.read_text())["rows"]:
        jsonschema.validate(r, io.load_schema("count_line"))
    m = io.write_manifest(tmp_path, ["plregions", "x"], {"seed": 1})
    jsonschema.validate(json.loads(m.read_text()), io.load_schema("manifest"))


def test_arena_round_trip(tmp_path):
    net = he_init(InitSpec((2, 6, 6, 1), 0.5, seed=1))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 3.0))
    back = io.load_arena(io.save_arena(arena, tmp_path / "a.json"))
    assert back.n_regions == arena.n_regions
    np.testing.assert_array_equal(back.patterns, arena.patterns)
    np.testing.assert_array_equal(back.areas(), arena.areas())
