"""Network files, reports, manifests and atomic writes."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import sys
import tempfile
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .network import Network, PiecewiseLinearActivation, ShapeError

FORMAT = "plregions.network"
VERSION = 1
ENCODINGS = ("hex", "decimal")


class NetworkFileError(ValueError):
    pass


def atomic_write(path, data: str | bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _encode(a: np.ndarray, encoding: str):
    flat = np.ascontiguousarray(a, dtype="<f8").ravel()
    if encoding == "hex":
        return flat.tobytes().hex()
    return [float(v) for v in flat]


def _decode(v, encoding: str) -> np.ndarray:
    if encoding == "hex":
        return np.frombuffer(bytes.fromhex(v), dtype="<f8").astype(np.float64)
    return np.asarray(v, dtype=np.float64)


def network_to_dict(net: Network, encoding: str = "hex") -> dict:
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}")
    return {
        "format": FORMAT,
        "version": VERSION,
        "encoding": encoding,
        "architecture": list(net.layer_sizes),
        "activation": net.activation.to_dict(),
        "layers": [{"weights": _encode(w, encoding), "biases": _encode(b, encoding)}
                   for w, b in zip(net.weights, net.biases)],
        "metadata": _plain(net.metadata),
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != FORMAT:
        raise NetworkFileError(f"not a network file (format {d.get('format')!r})")
    if d.get("version") != VERSION:
        raise NetworkFileError(f"unsupported network file version {d.get('version')!r}, "
                               f"expected {VERSION}")
    enc = d.get("encoding", "decimal")
    if enc not in ENCODINGS:
        raise NetworkFileError(f"unknown encoding {enc!r}")
    arch = [int(n) for n in d["architecture"]]
    layers = d["layers"]
    if len(layers) != len(arch) - 1:
        raise ShapeError(f"architecture {arch} needs {len(arch) - 1} layers, file has "
                         f"{len(layers)}")
    ws, bs = [], []
    for j, layer in enumerate(layers):
        w = _decode(layer["weights"], enc)
        b = _decode(layer["biases"], enc)
        if w.size != arch[j + 1] * arch[j]:
            raise ShapeError(f"layer {j + 1}: {w.size} weights, expected "
                             f"{arch[j + 1]}x{arch[j]} = {arch[j + 1] * arch[j]}")
        if b.size != arch[j + 1]:
            raise ShapeError(f"layer {j + 1}: {b.size} biases, expected {arch[j + 1]}")
        ws.append(w.reshape(arch[j + 1], arch[j]))
        bs.append(b)
    act = PiecewiseLinearActivation.from_dict(d["activation"])
    return Network(tuple(ws), tuple(bs), act, d.get("metadata", {}))


def save_network(net: Network, path, encoding: str = "hex") -> Path:
    return atomic_write(path, json.dumps(network_to_dict(net, encoding), indent=1))


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(_plain(obj), indent=1, sort_keys=True))


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or (list(rows[0].keys()) if rows else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _plain(r.get(k)) for k in columns})
    return atomic_write(path, buf.getvalue())


def write_table(path_stem, rows: list[dict], fmt: str) -> Path:
    if fmt == "csv":
        return write_csv(Path(f"{path_stem}.csv"), rows)
    return write_json(Path(f"{path_stem}.json"), {"rows": rows})


def manifest(argv: list[str], seeds: dict, extra: dict | None = None) -> dict:
    from . import kernels
    from .netgen import GENERATOR
    import scipy
    return {
        "command": list(argv),
        "seeds": seeds,
        "generator": GENERATOR,
        "kernel_backend": kernels.BACKEND,
        "versions": {"plregions": _version(), "python": sys.version.split()[0],
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "platform": platform.platform()},
        "created": datetime.now(timezone.utc).isoformat(),
        **(extra or {}),
    }


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.1.0"


def write_manifest(out_dir, argv, seeds, extra=None) -> Path:
    return write_json(Path(out_dir) / "manifest.json", manifest(argv, seeds, extra))


def load_schema(name: str) -> dict:
    """One of the JSON schemas shipped with the package."""
    return json.loads(resources.files("plregions").joinpath("schemas", f"{name}.json")
                      .read_text(encoding="utf-8"))


def arena_to_dict(arena) -> dict:
    return {
        "side": arena.side,
        "origin": arena.frame.origin,
        "directions": arena.frame.U.T,
        "anchors": arena.frame.anchors,
        "vertices": arena.vertices,
        "polygons": [p.tolist() for p in arena.polygons],
        "patterns": arena.patterns,
        "edges": arena.edges,
        "edge_label": arena.edge_label,
        "edge_polys": arena.edge_polys,
        "vertex_gen": arena.vertex_gen,
        "out_A": arena.out_A,
        "out_c": arena.out_c,
        "widths": list(arena.widths),
        "snapped": list(arena.snapped),
        "thin": list(arena.thin),
        "skipped": list(arena.skipped),
    }


def arena_from_dict(d: dict):
    from .region2d import PlaneArena, SliceFrame
    frame = SliceFrame(d["origin"], np.asarray(d["directions"], dtype=float).T, d["side"],
                       d.get("anchors"))
    ints = lambda k, w: np.asarray(d[k], dtype=np.int64).reshape(-1, w)
    return PlaneArena(frame, np.asarray(d["vertices"], dtype=float).reshape(-1, 2),
                      tuple(np.asarray(p, dtype=np.int64) for p in d["polygons"]),
                      np.asarray(d["patterns"], dtype=np.int8).reshape(len(d["polygons"]), -1),
                      np.asarray(d["out_A"], dtype=float), np.asarray(d["out_c"], dtype=float),
                      ints("edges", 2), ints("edge_label", 2), ints("edge_polys", 2),
                      ints("vertex_gen", 2), tuple(d["widths"]),
                      tuple(tuple(t) for t in d["snapped"]), tuple(d["thin"]),
                      tuple(tuple(t) for t in d.get("skipped", ())))


def save_arena(arena, path) -> Path:
    return write_json(path, arena_to_dict(arena))


def load_arena(path):
    with open(path, encoding="utf-8") as fh:
        return arena_from_dict(json.load(fh))
