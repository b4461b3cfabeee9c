"""Command-line surface.

Subcommands: ``grid {info,neighbors,dump}``, ``project {depth,render,equirect,
digit,batch}``, ``stm gather``, ``train smnist``, ``eval {cls,seg}``,
``bench gather``.  Long-form flags only; ``--seed`` and ``--threads`` are
global.  Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import healpix, io as hio, models, patches
from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    NumericError,
    ParseError,
)
from .mesh import normalize_mesh
from .nn import functional as F
from .nn.autodiff import Tensor
from .projection import (
    depth_channels,
    digit_projector,
    equirect_resample,
    raycast_hits,
)
from .render import render_projection, render_views
from .signal import SphericalSignal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _limit_threads(n):
    if n is None:
        return
    try:
        import threadpoolctl
    except ImportError:
        print("warning: threadpoolctl unavailable; --threads ignored", file=sys.stderr)
        return
    threadpoolctl.threadpool_limits(limits=int(n))


def build_parser() -> _Parser:
    parser = _Parser(prog="healconv",
                     description="Spherical signals on HEALPix grids for standard CNNs")
    parser.add_argument("--seed", type=int, default=42, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS thread count (1 = deterministic single-thread)")
    top = parser.add_subparsers(dest="command", required=True)

    grid = top.add_parser("grid", help="grid inspection").add_subparsers(
        dest="subcommand", required=True)
    g_info = grid.add_parser("info", help="pixel and seven-neighbor counts")
    g_info.add_argument("--level", type=int, required=True)
    g_nb = grid.add_parser("neighbors", help="print the 8 neighbor slots of one pixel")
    g_nb.add_argument("--level", type=int, required=True)
    g_nb.add_argument("--pix", type=int, required=True)
    g_dump = grid.add_parser("dump", help="write pixel centers as CSV")
    g_dump.add_argument("--level", type=int, required=True)
    g_dump.add_argument("--out", required=True)

    project = top.add_parser("project", help="produce spherical signals").add_subparsers(
        dest="subcommand", required=True)
    p_depth = project.add_parser("depth", help="6-channel depth projection of a mesh")
    p_depth.add_argument("--mesh", required=True)
    p_depth.add_argument("--level", type=int, required=True)
    p_depth.add_argument("--out", required=True)
    p_render = project.add_parser("render", help="12-view rendering projection of a mesh")
    p_render.add_argument("--mesh", required=True)
    p_render.add_argument("--level", type=int, required=True)
    p_render.add_argument("--res", type=int, default=128)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--dump-views", default=None, metavar="DIR",
                          help="also write the 12 gray views as PGM files")
    p_eq = project.add_parser("equirect", help="resample an equirectangular panorama")
    p_eq.add_argument("--img", required=True, help="binary PPM (P6) or PGM (P5)")
    p_eq.add_argument("--level", type=int, required=True)
    p_eq.add_argument("--mode", choices=("bilinear", "nearest"), default="bilinear")
    p_eq.add_argument("--out", required=True)
    p_eq.add_argument("--labels", action="store_true",
                      help="treat the image as a label map (u8 output, nearest mode)")
    p_digit = project.add_parser("digit", help="project one digit from an IDX file")
    p_digit.add_argument("--idx", required=True)
    p_digit.add_argument("--index", type=int, required=True)
    p_digit.add_argument("--level", type=int, required=True)
    p_digit.add_argument("--out", required=True)
    p_batch = project.add_parser("batch", help="project a directory of OFF meshes")
    p_batch.add_argument("--mesh-dir", required=True)
    p_batch.add_argument("--level", type=int, required=True)
    p_batch.add_argument("--kind", choices=("depth", "render", "both"), required=True)
    p_batch.add_argument("--out-dir", required=True)
    p_batch.add_argument("--res", type=int, default=128)
    p_batch.add_argument("--force", action="store_true",
                         help="overwrite outputs that already exist")

    stm = top.add_parser("stm", help="gather layout debugging").add_subparsers(
        dest="subcommand", required=True)
    s_gather = stm.add_parser("gather", help="dump the 3x(3n) patch tensor of a signal")
    s_gather.add_argument("--level", type=int, required=True)
    s_gather.add_argument("--in", dest="infile", required=True)
    s_gather.add_argument("--out", required=True)

    train = top.add_parser("train", help="training pipelines").add_subparsers(
        dest="subcommand", required=True)
    t_smnist = train.add_parser("smnist", help="train the spherical digit classifier")
    t_smnist.add_argument("--train-images", required=True)
    t_smnist.add_argument("--train-labels", required=True)
    t_smnist.add_argument("--test-images", required=True)
    t_smnist.add_argument("--test-labels", required=True)
    t_smnist.add_argument("--level", type=int, default=4)
    t_smnist.add_argument("--epochs", type=int, default=20)
    t_smnist.add_argument("--batch-size", type=int, default=64)
    t_smnist.add_argument("--lr", type=float, default=0.01)
    t_smnist.add_argument("--momentum", type=float, default=0.9)
    t_smnist.add_argument("--weight-decay", type=float, default=1e-4)
    t_smnist.add_argument("--limit-train", type=int, default=None)
    t_smnist.add_argument("--limit-test", type=int, default=None)
    t_smnist.add_argument("--model-config", default=None)
    t_smnist.add_argument("--out-dir", required=True)

    ev = top.add_parser("eval", help="evaluate checkpoints").add_subparsers(
        dest="subcommand", required=True)
    e_cls = ev.add_parser("cls", help="classification accuracy on IDX data")
    e_cls.add_argument("--images", required=True)
    e_cls.add_argument("--labels", required=True)
    e_cls.add_argument("--checkpoint", required=True)
    e_cls.add_argument("--model-config", required=True)
    e_cls.add_argument("--limit", type=int, default=None)
    e_seg = ev.add_parser("seg", help="segmentation metrics over paired .sphs dirs")
    e_seg.add_argument("--signals", required=True)
    e_seg.add_argument("--labels", required=True)
    e_seg.add_argument("--checkpoint", required=True)
    e_seg.add_argument("--model-config", required=True)
    e_seg.add_argument("--out", default=None, help="also write a CSV report")

    bench = top.add_parser("bench", help="micro-benchmarks").add_subparsers(
        dest="subcommand", required=True)
    b_gather = bench.add_parser("gather", help="gather + conv throughput")
    b_gather.add_argument("--level", type=int, required=True)
    b_gather.add_argument("--channels", type=int, default=64)
    b_gather.add_argument("--iterations", type=int, default=10)

    return parser


# ---------------------------------------------------------------------------
# command bodies

def cmd_grid_info(args):
    level = args.level
    print(f"level {level}: n_pix={healpix.n_pixels(level)} "
          f"seven_neighbor_pixels={healpix.seven_neighbor_count(level)}")


def cmd_grid_neighbors(args):
    slots = healpix.neighbors(args.level, args.pix)
    names = ("SW", "W", "NW", "N", "NE", "E", "SE", "S")
    print(" ".join(f"{n}={v}" for n, v in zip(names, slots)))


def cmd_grid_dump(args):
    grid = healpix.grid_level(args.level)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("pix,x,y,z\n")
        for p in range(grid.n_pix):
            x, y, z = grid.centers[p]
            fh.write(f"{p},{x:.17g},{y:.17g},{z:.17g}\n")
    print(f"wrote {grid.n_pix} centers to {args.out}")


def cmd_project_depth(args):
    mesh = normalize_mesh(hio.load_off(args.mesh))
    sig = depth_channels(mesh, args.level)
    hio.write_sphs(args.out, sig)
    print(f"wrote {args.out}: level {sig.level}, {sig.channels} channels")


def cmd_project_render(args):
    mesh = normalize_mesh(hio.load_off(args.mesh))
    hits = raycast_hits(mesh, args.level)
    renders = render_views(mesh, resolution=args.res)
    if args.dump_views:
        os.makedirs(args.dump_views, exist_ok=True)
        for r in range(12):
            hio.write_pgm(os.path.join(args.dump_views, f"view_{r:02d}.pgm"),
                          renders.images[r])
    sig, stats = render_projection(mesh, args.level, renders, hits=hits,
                                   return_stats=True)
    hio.write_sphs(args.out, sig)
    print(f"wrote {args.out}: level {sig.level}, 1 channel "
          f"(sampled={stats['sampled']} fallback={stats['fallback']} miss={stats['miss']})")


def cmd_project_equirect(args):
    lower = args.img.lower()
    img = hio.read_pgm(args.img) if lower.endswith(".pgm") else hio.read_ppm(args.img)
    if args.labels:
        sig = equirect_resample(img, args.level, "nearest")
        sig = SphericalSignal(sig.level, sig.data.reshape(sig.n_pix, -1)[:, :1].astype(np.uint8))
    else:
        sig = equirect_resample(img, args.level, args.mode)
        if sig.data.dtype == np.uint8:
            sig = SphericalSignal(sig.level, sig.data.astype(np.float32) / 255.0)
    hio.write_sphs(args.out, sig)
    print(f"wrote {args.out}: level {sig.level}, {sig.channels} channels ({args.mode})")


def cmd_project_digit(args):
    images = hio.load_idx(args.idx)
    if images.ndim != 3:
        raise ContractError(f"{args.idx} does not contain images")
    if not 0 <= args.index < len(images):
        raise ContractError(f"index {args.index} out of range [0, {len(images)})")
    sig = digit_projector(args.level).project(images[args.index])
    hio.write_sphs(args.out, sig)
    print(f"wrote {args.out}: digit {args.index} at level {args.level}")


def cmd_project_batch(args):
    names = sorted(f for f in os.listdir(args.mesh_dir) if f.lower().endswith(".off"))
    os.makedirs(args.out_dir, exist_ok=True)
    failures = 0
    produced = 0
    skipped = 0
    for name in names:
        stem = os.path.splitext(name)[0]
        out_path = os.path.join(args.out_dir, f"{stem}.sphs")
        if os.path.exists(out_path) and not args.force:
            skipped += 1
            continue
        try:
            mesh = normalize_mesh(hio.load_off(os.path.join(args.mesh_dir, name)))
            parts = []
            if args.kind in ("depth", "both"):
                parts.append(depth_channels(mesh, args.level).data)
            if args.kind in ("render", "both"):
                hits = raycast_hits(mesh, args.level)
                renders = render_views(mesh, resolution=args.res)
                parts.append(render_projection(mesh, args.level, renders, hits=hits).data)
            sig = SphericalSignal(args.level, np.concatenate(parts, axis=1))
            hio.write_sphs(out_path, sig)
            produced += 1
            print(f"ok   {name} -> {out_path} ({sig.channels} channels)")
        except Exception as exc:  # log per-file, keep the batch going
            failures += 1
            print(f"FAIL {name}: {exc}", file=sys.stderr)
    print(f"batch done: {produced} written, {skipped} skipped, {failures} failed")
    if failures:
        raise NumericError(f"{failures} meshes failed") from None


def cmd_stm_gather(args):
    sig = hio.read_sphs(args.infile)
    if sig.level != args.level:
        raise ContractError(f"signal level {sig.level} != --level {args.level}")
    pt = patches.gather(
        SphericalSignal(sig.level, sig.data.astype(np.float32)),
        patches.patch_grid(sig.level),
    )
    hio.write_patch_tensor(args.out, pt)
    print(f"wrote {args.out}: patch tensor 3 x {pt.data.shape[1]} x {pt.channels}")


def cmd_train_smnist(args):
    from .train import TrainConfig, train_smnist

    cfg = TrainConfig(
        train_images=args.train_images, train_labels=args.train_labels,
        test_images=args.test_images, test_labels=args.test_labels,
        out_dir=args.out_dir, level=args.level, epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay, seed=args.seed,
        limit_train=args.limit_train, limit_test=args.limit_test,
        model_config=args.model_config,
    )
    report = train_smnist(cfg)
    print(f"final test accuracy {report['test_accuracy']:.4f} "
          f"({report['parameters']} parameters, {report['seconds']:.1f}s)")


def cmd_eval_cls(args):
    from .train import eval_classifier_idx

    report = eval_classifier_idx(args.images, args.labels, args.checkpoint,
                                 args.model_config, limit=args.limit)
    print(f"accuracy {report['accuracy']:.4f} on {report['count']} samples "
          f"(loss {report['loss']:.4f})")


def cmd_eval_seg(args):
    from .train import eval_segmentation

    report = eval_segmentation(args.signals, args.labels, args.checkpoint,
                               args.model_config)
    print(f"{'class':>8} {'iou':>8}")
    for cls, iou in sorted(report["iou_per_class"].items()):
        print(f"{cls:>8} {iou:>8.4f}")
    print(f"pixel accuracy {report['pixel_accuracy']:.4f}  "
          f"mIoU {report['miou']:.4f}  ({report['count']} signals)")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("class,iou\n")
            for cls, iou in sorted(report["iou_per_class"].items()):
                fh.write(f"{cls},{iou:.6f}\n")
            fh.write(f"pixel_accuracy,{report['pixel_accuracy']:.6f}\n")
            fh.write(f"miou,{report['miou']:.6f}\n")


def cmd_bench_gather(args):
    if args.iterations <= 0:
        raise ConfigError("iterations must be positive")
    level = args.level
    channels = args.channels
    grid = patches.patch_grid(level)
    n = grid.n_pix
    rng = np.random.default_rng(args.seed)
    x = Tensor(rng.standard_normal((1, n, channels)).astype(np.float32))
    w = Tensor(rng.standard_normal((3, 3, channels, channels)).astype(np.float32))

    t_gather = 0.0
    t_conv = 0.0
    checksum = 0.0
    for _ in range(args.iterations):
        t0 = time.perf_counter()
        p = x.data[0][grid.rows]
        p[grid.rows < 0] = 0
        t1 = time.perf_counter()
        out = F.spherical_conv(x, w, None, grid)
        t2 = time.perf_counter()
        t_gather += t1 - t0
        t_conv += t2 - t1
        checksum += float(out.data.sum(dtype=np.float64))
    per_iter_gather = t_gather / args.iterations
    per_iter_conv = t_conv / args.iterations
    bytes_moved = args.iterations * n * 9 * channels * 4 * 2  # gather read + write
    px_per_s = n / (per_iter_gather + per_iter_conv)
    print(f"level {level}  channels {channels}  iterations {args.iterations}")
    print(f"gather {per_iter_gather * 1e3:.3f} ms/layer  "
          f"conv {per_iter_conv * 1e3:.3f} ms/layer")
    print(f"throughput {px_per_s:,.0f} pixels/s  bytes_moved {bytes_moved}")
    print(f"checksum {checksum:.6e}")


_COMMANDS = {
    ("grid", "info"): cmd_grid_info,
    ("grid", "neighbors"): cmd_grid_neighbors,
    ("grid", "dump"): cmd_grid_dump,
    ("project", "depth"): cmd_project_depth,
    ("project", "render"): cmd_project_render,
    ("project", "equirect"): cmd_project_equirect,
    ("project", "digit"): cmd_project_digit,
    ("project", "batch"): cmd_project_batch,
    ("stm", "gather"): cmd_stm_gather,
    ("train", "smnist"): cmd_train_smnist,
    ("eval", "cls"): cmd_eval_cls,
    ("eval", "seg"): cmd_eval_seg,
    ("bench", "gather"): cmd_bench_gather,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    np.random.seed(args.seed % (2**32))
    handler = _COMMANDS[(args.command, args.subcommand)]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ContractError, DomainError, IndexError,
            FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
