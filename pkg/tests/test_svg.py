import re
import time
import xml.etree.ElementTree as ET

import numpy as np

from plregions.netgen import InitSpec, he_init
from plregions.network import Network
from plregions.region2d import SliceFrame, enumerate_plane
from plregions.svg import SvgStyle, pattern_color, render_svg


def _paths(doc):
    root = ET.fromstring(doc)
    return [e for e in root.iter() if e.tag.endswith("path")]


def test_one_polygon_one_path():
    net = Network((np.array([[1.0, 0.0]]), np.array([[1.0]])), (np.array([9.0]), np.zeros(1)))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 2.0))
    assert len(_paths(render_svg(arena))) == 1


def test_two_polygons_share_the_chord():
    net = Network((np.array([[1.0, 0.0]]), np.array([[1.0]])), (np.array([0.0]), np.zeros(1)))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 2.0))
    paths = _paths(render_svg(arena, SvgStyle(size=100)))
    assert len(paths) == 2
    pts = [set(re.findall(r"[-\d.]+,[-\d.]+", p.get("d"))) for p in paths]
    shared = pts[0] & pts[1]
    assert shared == {"50.0000,0.0000", "50.0000,100.0000"}
    assert paths[0].get("fill") != paths[1].get("fill")


def test_anchor_markers():
    rng = np.random.default_rng(0)
    net = he_init(InitSpec((5, 4, 1), 0.1))
    arena = enumerate_plane(net, SliceFrame.through_points(*rng.standard_normal((3, 5))))
    root = ET.fromstring(render_svg(arena))
    assert sum(e.tag.endswith("circle") for e in root.iter()) == 3
    assert sum(e.tag.endswith("circle") for e in ET.fromstring(
        render_svg(arena, SvgStyle(anchors=False))).iter()) == 0


def test_color_is_a_function_of_pattern():
    p = np.array([0, 1, 1, 0], dtype=np.int8)
    assert pattern_color(p) == pattern_color(p.copy())
    assert re.fullmatch(r"#[0-9a-f]{6}", pattern_color(p))


def test_large_arena_renders_quickly():
    net = he_init(InitSpec((2, 64, 64, 1), 1.0, seed=0))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 6.0))
    assert arena.n_regions >= 5000
    t = time.perf_counter()
    doc = render_svg(arena)
    assert time.perf_counter() - t < 10
    assert len(doc) < 50e6
    assert len(_paths(doc)) == arena.n_regions
