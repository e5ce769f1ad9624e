"""Command-line interface.

Every subcommand writes its results and a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 usage error, 2 data error, 3 check or bound violated.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import serialize as io
from .boundary import SOURCES, ConfigurationError, SampleSpec, distance_histogram
from .data import Dataset, IdxError, find_mnist, load_mnist, synth_blobs
from .netgen import InitSpec, build_sawtooth, he_init, perturb
from .network import ACTIVATIONS, ShapeError
from .region1d import count_lines, count_regions_on_segment
from .region2d import SliceFrame, enumerate_plane, region_stats

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VIOLATION = 0, 1, 2, 3
CHECKS = ("grad-moment", "preact-moment", "log-grad", "open-path", "k1", "corollary-k1",
          "corollary-k2", "distance-lb", "tube", "crofton")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------- helpers

def _mnist(args, split="train") -> Dataset:
    d = find_mnist(args.mnist_dir)
    if d is None:
        raise ConfigurationError("MNIST files not found; pass --mnist-dir or set "
                                 "PLREGIONS_MNIST_DIR")
    return load_mnist(d, split)


def _emit(args, stem: str, rows: list[dict]) -> Path:
    return io.write_table(Path(args.out) / stem, rows, args.format)


def _finish(args, argv, extra=None):
    io.write_manifest(args.out, ["plregions"] + list(argv), {"seed": args.seed}, extra)


def _frame(args, net) -> SliceFrame:
    """Slice square from ``--anchors``: mnist exemplars, random points, or the first two axes."""
    rng = np.random.default_rng(args.seed)
    if args.anchors == "mnist":
        data = _mnist(args)
        if data.dim != net.input_dim:
            raise ShapeError(f"MNIST has dimension {data.dim}, network expects {net.input_dim}")
        pts = [data.inputs[rng.choice(np.flatnonzero(data.labels == c))] for c in args.classes]
        if len(pts) != 3:
            raise UsageError("--classes needs exactly three labels")
        return SliceFrame.through_points(*pts, side_factor=args.side_factor)
    if args.anchors == "random":
        return SliceFrame.through_points(*rng.standard_normal((3, net.input_dim)),
                                         side_factor=args.side_factor)
    return SliceFrame.axis_aligned(net.input_dim, args.side)


# ---------------------------------------------------------------- subcommands

def cmd_init(args, argv):
    if len(args.arch) < 2:
        raise UsageError("--arch needs at least input and output sizes")
    bias = args.bias_sd[0] if len(args.bias_sd) == 1 else args.bias_sd
    spec = InitSpec(args.arch, bias, args.weight_law, args.weight_gain, args.seed,
                    ACTIVATIONS[args.activation]())
    net = he_init(spec)
    io.save_network(net, Path(args.out) / "network.json", args.encoding)
    _finish(args, argv, {"architecture": list(args.arch)})
    print(f"network {net.layer_sizes} written to {args.out}/network.json")
    return EXIT_OK


def cmd_sawtooth(args, argv):
    net = build_sawtooth(args.n)
    part = count_regions_on_segment(net, [0.0], [1.0])
    io.save_network(net, Path(args.out) / "network.json", args.encoding)
    report = {"n": args.n, "n_neurons": net.n_neurons, "pieces_on_unit_interval": part.n_regions}
    io.write_json(Path(args.out) / "sawtooth.json", report)
    _finish(args, argv)
    print(json.dumps(report))
    return EXIT_OK


def cmd_perturb(args, argv):
    net = perturb(io.load_network(args.net), args.noise_sd, args.seed)
    io.save_network(net, Path(args.out) / "network.json", args.encoding)
    _finish(args, argv)
    return EXIT_OK


def cmd_count_line(args, argv):
    net = io.load_network(args.net)
    rng = np.random.default_rng(args.seed)
    n, d = args.lines, net.input_dim
    if args.random_point == "mnist":
        data = _mnist(args)
        if data.dim != d:
            raise ShapeError(f"MNIST has dimension {data.dim}, network expects {d}")
        P = data.inputs[rng.choice(len(data), size=n)]
    elif args.random_point == "uniform":
        P = rng.random((n, d))
    else:
        P = rng.standard_normal((n, d))
    if args.through_origin:
        lines = [(np.zeros(d), p) for p in P]
    else:
        V = rng.standard_normal((n, d))
        lines = list(zip(P, V / np.linalg.norm(V, axis=1, keepdims=True)))
    if args.segment:
        parts = [count_regions_on_segment(net, a, a + b) for a, b in lines]
    else:
        parts = count_lines(net, lines, args.threads, args.filtered)
    rows = [{"line": i, "n_regions": p.n_regions, "n_crossings": p.n_crossings,
             "regions_per_neuron": p.n_regions / net.n_hidden} for i, p in enumerate(parts)]
    _emit(args, "count_line", rows)
    r = np.array([row["regions_per_neuron"] for row in rows])
    summary = {"lines": n, "n_hidden": net.n_hidden, "mean_regions_per_neuron": float(r.mean()),
               "se": float(r.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0}
    io.write_json(Path(args.out) / "summary.json", summary)
    _finish(args, argv)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_enumerate_plane(args, argv):
    net = io.load_network(args.net)
    frame = _frame(args, net)
    t0 = time.perf_counter()
    arena = enumerate_plane(net, frame)
    elapsed = time.perf_counter() - t0
    inv = arena.check_invariants()
    st = region_stats(arena)
    ok = bool(inv["area_conserved"] and inv["interior_edges_two_sided"]
              and inv["frame_edges_one_sided"] and inv["euler_ok"])
    report = {"n_regions": arena.n_regions, "side": frame.side, "seconds": elapsed,
              "edge_length": st.edge_length, "n_interior_vertices": st.n_vertices,
              "edge_density": st.edge_density, "vertex_density": st.vertex_density,
              "invariants": inv, "invariants_ok": ok}
    io.write_json(Path(args.out) / "enumerate_plane.json", report)
    io.save_arena(arena, Path(args.out) / "arena.json")
    if args.svg:
        from .svg import render_svg
        io.atomic_write(Path(args.out) / "regions.svg", render_svg(arena))
    _finish(args, argv)
    print(f"{arena.n_regions} regions, invariants {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_distance(args, argv):
    net = io.load_network(args.net)
    train = test = None
    if args.source != "uniform-cube":
        train = _mnist(args, "train")
        if args.source == "dataset-test":
            test = _mnist(args, "test")
    rep = distance_histogram(net, SampleSpec(args.source, args.count, args.seed), train, test,
                             args.bins, args.filtered, args.threads)
    io.write_json(Path(args.out) / "distance.json", rep.summary())
    c, e = rep.hist_counts, rep.hist_edges
    _emit(args, "distance_histogram", [{"log10_lo": float(e[i]), "log10_hi": float(e[i + 1]),
                                        "count": int(c[i])} for i in range(c.size)])
    _finish(args, argv)
    print(json.dumps(rep.summary()))
    return EXIT_OK


def _run_check(name: str, args):
    from . import theory as th
    seeds = args.seeds
    if name in ("grad-moment", "preact-moment", "log-grad", "open-path"):
        spec = InitSpec(args.arch, args.bias_sd[0], seed=args.seed)
        x = np.ones(spec.layer_sizes[0])
        fn = {"grad-moment": th.gradient_moment_check,
              "preact-moment": th.preactivation_moment_check,
              "log-grad": th.log_gradient_check,
              "open-path": th.open_path_probability}[name]
        return [fn(spec, x, n_seeds=seeds or 2000, seed=args.seed)]
    if name == "k1":
        out = []
        for i in range(args.k1_nets):
            net = he_init(InitSpec((2, 3, 3, 1), 0.5, seed=args.seed + i))
            out.append(th.expected_crossings_k1(net, 0.5, [-1.0, -1.0], [1.0, 1.0],
                                                n_bias_draws=seeds or 10_000, seed=args.seed))
        return out
    spec2 = InitSpec((2, 16, 16, 16, 1), 1.0, seed=args.seed)
    if name in ("corollary-k1", "corollary-k2"):
        return [th.corollary_bounds(spec2, 1 if name.endswith("1") else 2,
                                    n_seeds=seeds or 20, seed=args.seed)]
    if name == "distance-lb":
        return [th.distance_lower_bound(spec2, (0.0, 0.0), 1.0, n_seeds=seeds or 5,
                                        seed=args.seed)]
    net = he_init(spec2)
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 2.0))
    if name == "tube":
        return [th.tube_volume_check(arena, [2e-3, 2e-2], seed=args.seed)]
    return [th.crofton_check(net, arena, n_lines=seeds or 200, seed=args.seed)]


def cmd_verify_theory(args, argv):
    checks = args.check or list(CHECKS)
    reports = []
    for name in checks:
        for rep in _run_check(name, args):
            print(rep.line())
            reports.append(rep)
    io.write_json(Path(args.out) / "theory.json", {"reports": [r.to_dict() for r in reports]})
    if args.format == "csv":
        io.write_csv(Path(args.out) / "theory.csv",
                     [{k: r.to_dict()[k] for k in ("name", "kind", "theory", "estimate", "se",
                                                   "tolerance", "passed", "n_samples")}
                      for r in reports])
    _finish(args, argv, {"checks": checks})
    failed = [r.name for r in reports if not r.passed and r.kind != "report"]
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_train(args, argv):
    from .training import (TrainConfig, TrainingDiverged, dense_schedule, make_probes,
                           track_complexity, train)
    if args.data == "mnist":
        data, test = _mnist(args, "train"), _mnist(args, "test")
    else:
        full = synth_blobs(args.blob_classes, args.blob_count, args.blob_dim,
                           args.blob_separation, args.seed)
        cut = int(0.8 * len(full))
        data, test = full.subset(slice(0, cut)), full.subset(slice(cut, None))
    if args.net:
        net = io.load_network(args.net)
    else:
        arch = (data.dim,) + tuple(args.widths) + (data.n_classes,)
        net = he_init(InitSpec(arch, 1e-3, seed=args.seed))
    schedule = (dense_schedule(args.epochs) if args.schedule == "dense"
                else _floats(args.schedule))
    cfg = TrainConfig(args.optimizer, args.lr, args.batch_size, args.epochs, args.loss,
                      schedule, args.seed)
    try:
        cks = train(net, data, cfg, test)
    except TrainingDiverged as e:
        if e.last_good is not None:
            io.save_network(e.last_good.net, Path(args.out) / "last_good.json", args.encoding)
        print(f"plregions: training diverged: {e}", file=sys.stderr)
        return EXIT_DATA
    if args.lines or args.points:
        rows = track_complexity(cks, make_probes(data, args.lines, args.points, args.seed),
                                args.threads)
    else:
        rows = [{"epoch_fraction": c.epoch_fraction, "train_loss": c.train_loss,
                 "train_acc": c.train_acc, "test_loss": c.test_loss, "test_acc": c.test_acc}
                for c in cks]
    _emit(args, "metrics", rows)
    io.save_network(cks[-1].net, Path(args.out) / "network.json", args.encoding)
    _finish(args, argv, {"config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}})
    last = rows[-1]
    print(f"final test accuracy {last['test_acc']:.4f}")
    return EXIT_OK


def cmd_render(args, argv):
    from .svg import SvgStyle, render_svg
    if args.arena:
        arena = io.load_arena(args.arena)
    elif args.net:
        net = io.load_network(args.net)
        arena = enumerate_plane(net, _frame(args, net))
    else:
        raise UsageError("render needs --arena or --net")
    io.atomic_write(Path(args.out) / "regions.svg", render_svg(arena, SvgStyle(size=args.size)))
    _finish(args, argv)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".", help="output directory")
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--mnist-dir", default=None)
    g.add_argument("--encoding", choices=io.ENCODINGS, default="hex",
                   help="float encoding of saved networks")

    p = _Parser(prog="plregions", description="Linear-region complexity of piecewise-linear "
                                               "networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("init", parents=[common], help="draw and save a random network")
    s.add_argument("--arch", type=_ints, required=True, help="layer sizes, e.g. 784,32,32,10")
    s.add_argument("--bias-sd", type=_floats, default=(1e-3,))
    s.add_argument("--weight-law", choices=("normal", "two-point"), default="normal")
    s.add_argument("--weight-gain", type=float, default=2.0)
    s.add_argument("--activation", choices=sorted(ACTIVATIONS), default="relu")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("sawtooth", parents=[common], help="build the sawtooth network")
    s.add_argument("--n", type=int, default=4)
    s.set_defaults(func=cmd_sawtooth)

    s = sub.add_parser("perturb", parents=[common], help="add Gaussian noise to all parameters")
    s.add_argument("--net", required=True)
    s.add_argument("--noise-sd", type=float, default=0.1)
    s.set_defaults(func=cmd_perturb)

    s = sub.add_parser("count-line", parents=[common], help="exact region counts along lines")
    s.add_argument("--net", required=True)
    s.add_argument("--through-origin", action="store_true")
    s.add_argument("--random-point", choices=("mnist", "uniform", "gaussian"), default="uniform")
    s.add_argument("--lines", type=int, default=100)
    s.add_argument("--segment", action="store_true",
                   help="count on the segment from the point instead of the infinite line")
    s.add_argument("--filtered", action="store_true",
                   help="drop crossings where the output gradient does not change")
    s.set_defaults(func=cmd_count_line)

    for name, func, hlp in (("enumerate-plane", cmd_enumerate_plane, "exact 2-D region map"),
                            ("render", cmd_render, "draw a 2-D region map as SVG")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--net", required=name == "enumerate-plane")
        s.add_argument("--anchors", choices=("mnist", "random", "axes"), default="random")
        s.add_argument("--classes", type=_ints, default=(0, 1, 2))
        s.add_argument("--side-factor", type=float, default=2.0)
        s.add_argument("--side", type=float, default=2.0, help="square side for --anchors axes")
        if name == "render":
            s.add_argument("--arena")
            s.add_argument("--size", type=int, default=800)
        else:
            s.add_argument("--svg", action="store_true")
        s.set_defaults(func=func)

    s = sub.add_parser("distance", parents=[common], help="distances to region boundaries")
    s.add_argument("--net", required=True)
    s.add_argument("--source", choices=SOURCES, default="gaussian")
    s.add_argument("--count", type=int, default=10_000)
    s.add_argument("--bins", type=int, default=50)
    s.add_argument("--filtered", action="store_true")
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("verify-theory", parents=[common], help="Monte-Carlo theory checks")
    s.add_argument("--check", action="append", choices=CHECKS)
    s.add_argument("--seeds", type=int, default=None, help="Monte-Carlo sample count")
    s.add_argument("--arch", type=_ints, default=(32, 32, 32, 32, 32, 32, 1))
    s.add_argument("--bias-sd", type=_floats, default=(0.0,))
    s.add_argument("--k1-nets", type=int, default=5)
    s.set_defaults(func=cmd_verify_theory)

    s = sub.add_parser("train", parents=[common], help="train and track complexity")
    s.add_argument("--net")
    s.add_argument("--widths", type=_ints, default=(32, 32, 32))
    s.add_argument("--data", choices=("mnist", "blobs"), default="mnist")
    s.add_argument("--blob-classes", type=int, default=2)
    s.add_argument("--blob-count", type=int, default=500)
    s.add_argument("--blob-dim", type=int, default=2)
    s.add_argument("--blob-separation", type=float, default=4.0)
    s.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--loss", choices=("softmax-ce", "mse"), default="softmax-ce")
    s.add_argument("--schedule", default="dense",
                   help="'dense' or comma-separated epoch fractions")
    s.add_argument("--lines", type=int, default=100, help="probe lines per checkpoint")
    s.add_argument("--points", type=int, default=1000, help="probe points per checkpoint")
    s.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    if getattr(args, "threads", 1) < 1:
        print("plregions: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args, argv)
    except UsageError as e:
        print(f"plregions: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxError, io.NetworkFileError, ShapeError, ConfigurationError, FileNotFoundError,
            json.JSONDecodeError, KeyError) as e:
        print(f"plregions: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"plregions: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
