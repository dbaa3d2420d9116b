"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 data-contract violation (bad sizes, mismatched weights, out-of-range ids).
"""
import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import class_weights as cw
from . import graph, metrics, netpbm, pipeline, weights
from .errors import ContractError, FormatError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONTRACT = 0, 1, 2, 3
IGNORE_ID = 255


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value):
    return "-" if np.isnan(value) else f"{value:.6f}"


def _map(args, fn, items):
    # results come back in input order whatever the worker count
    if args.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _read_labels(path):
    labels = netpbm.read(path)
    if labels.ndim != 2:
        raise FormatError(f"{path}: label maps must be P5 graymaps")
    return labels.astype(np.int64)


def _pgm_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p.name for p in directory.glob("*.pgm"))


def cmd_info(args, out):
    net = graph.build_lmd(args.num_classes)
    strides = dict(graph.output_strides(net))
    out.write(f"{'layer':<10} {'kind':<11} {'in':>5} {'out':>5} {'dil':>3} {'bn+relu':>7} {'stride':>6} {'params':>9}\n")
    for layer in net.layers:
        if layer.kind == graph.CONV:
            params = 9 * layer.in_c * layer.out_c + layer.out_c + (4 * layer.out_c if layer.bn_relu else 0)
            out.write(
                f"{layer.name:<10} {layer.kind:<11} {layer.in_c:>5} {layer.out_c:>5} {layer.dilation:>3} "
                f"{'yes' if layer.bn_relu else 'no':>7} {strides[layer.name]:>6} {params:>9}\n"
            )
        else:
            extra = ""
            if layer.kind == graph.MAXUNPOOL:
                extra = f"  <- {net.layers[layer.unpool_source].name}"
            out.write(f"{layer.name:<10} {layer.kind:<11} {'':>5} {'':>5} {'':>3} {'':>7} {strides[layer.name]:>6} {0:>9}{extra}\n")
    total = graph.param_count(net)
    size = weights.encoded_size(net)
    rf_h, rf_w, stride = graph.receptive_field(net)
    out.write(f"total parameters: {total}\n")
    out.write(f"parameter bytes (float32): {4 * total} ({4 * total / 1e6:.2f} MB)\n")
    out.write(f"model file size (.lmdw): {size} ({size / 1e6:.2f} MB)\n")
    out.write(f"encoder receptive field: {rf_h}x{rf_w}\n")
    out.write(f"encoder output stride: {stride}\n")
    return EXIT_OK


def cmd_init_weights(args, out):
    net = graph.build_lmd(args.num_classes)
    weights.save(weights.random_init(net, args.seed), args.output)
    out.write(f"wrote {args.output} ({weights.encoded_size(net)} bytes, seed {args.seed})\n")
    return EXIT_OK


def _infer_labels(args, image):
    net = graph.build_lmd(args.num_classes)
    store = weights.load(args.weights, net)
    graph.check_input(net, pipeline.image_to_tensor(image))
    return graph.forward(net, store, pipeline.image_to_tensor(image)).labels


def _read_image(path):
    image = netpbm.read(path)
    if image.ndim != 3:
        raise FormatError(f"{path}: expected a P6 color image")
    h, w = image.shape[:2]
    if h % 8 or w % 8:
        raise ContractError(f"{path}: image size {h}x{w} must be a multiple of 8 in both dims")
    return image


def cmd_infer(args, out):
    image = _read_image(args.image)
    labels = _infer_labels(args, image)
    netpbm.write(args.output, labels.astype(np.uint8))
    out.write(f"wrote {args.output} ({labels.shape[0]}x{labels.shape[1]})\n")
    return EXIT_OK


def _post_config(args):
    return pipeline.PostprocessConfig(
        lane_class_id=args.lane_class,
        connectivity=args.connectivity,
        min_pixels=args.min_pixels,
        merge_threshold=args.merge_threshold,
        blocks=args.blocks,
    )


def cmd_detect(args, out):
    image = _read_image(args.image)
    if args.labels_in:
        labels = _read_labels(args.labels_in)
        if labels.shape != image.shape[:2]:
            raise ContractError(
                f"label map {labels.shape[0]}x{labels.shape[1]} does not match image "
                f"{image.shape[0]}x{image.shape[1]}"
            )
    elif args.weights:
        labels = _infer_labels(args, image)
    else:
        raise UsageError("detect needs --weights or --labels-in")
    result = pipeline.postprocess(labels, _post_config(args))
    report = pipeline.format_report(result)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    netpbm.write(out_dir / f"{stem}.labels.pgm", labels.astype(np.uint8))
    netpbm.write(out_dir / f"{stem}.overlay.ppm", pipeline.render_overlay(image, result))
    (out_dir / f"{stem}.report.txt").write_text(report)
    out.write(report)
    return EXIT_OK


def cmd_postprocess(args, out):
    labels = _read_labels(args.labels)
    result = pipeline.postprocess(labels, _post_config(args))
    report = pipeline.format_report(result)
    if args.groups_out:
        if result.group_map.max(initial=0) > 255:
            raise ContractError("more than 255 groups cannot be stored in a P5 map")
        netpbm.write(args.groups_out, result.group_map.astype(np.uint8))
    if args.overlay:
        if args.image:
            base = netpbm.read(args.image)
            if base.ndim != 3 or base.shape[:2] != labels.shape:
                raise ContractError("--image must be a P6 image of the label map's size")
        else:
            base = np.zeros(labels.shape + (3,), dtype=np.uint8)
        netpbm.write(args.overlay, pipeline.render_overlay(base, result))
    if args.report:
        Path(args.report).write_text(report)
    out.write(report)
    return EXIT_OK


def cmd_evaluate(args, out):
    names = _pgm_files(args.pred_dir)
    if not names:
        raise FileNotFoundError(f"no .pgm files in {args.pred_dir}")
    gt_dir = Path(args.gt_dir)
    for name in names:
        if not (gt_dir / name).is_file():
            raise FileNotFoundError(f"no ground truth for {name} in {gt_dir}")
    extra = sorted(set(_pgm_files(gt_dir)) - set(names))
    if extra:
        raise FileNotFoundError(f"no prediction for {extra[0]} in {args.pred_dir}")

    def one(name):
        pred = _read_labels(Path(args.pred_dir) / name)
        gt = _read_labels(gt_dir / name)
        if pred.shape != gt.shape:
            raise ContractError(f"{name}: prediction {pred.shape} and ground truth {gt.shape} differ in size")
        return metrics.accumulate(metrics.ConfusionMatrix(args.num_classes), pred, gt, args.ignore)

    cm = metrics.ConfusionMatrix(args.num_classes)
    for part in _map(args, one, names):
        cm = cm + part
    acc, mean_acc = metrics.class_accuracy(cm)
    ious, miou = metrics.iou(cm)
    out.write(f"images: {len(names)}  pixels: {cm.total}\n")
    out.write(f"{'class':>5} {'accuracy':>10} {'iou':>10}\n")
    for c in range(args.num_classes):
        out.write(f"{c:>5} {_fmt(acc[c]):>10} {_fmt(ious[c]):>10}\n")
    out.write(f"class avg: {_fmt(mean_acc)}\n")
    out.write(f"mIoU: {_fmt(miou)}\n")
    return EXIT_OK


def _parse_scale(text):
    try:
        cid, factor = text.split(":")
        return int(cid), float(factor)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected CLASS:FACTOR, got {text!r}") from None


def cmd_class_weights(args, out):
    names = _pgm_files(args.label_dir)
    if not names:
        raise FileNotFoundError(f"no .pgm files in {args.label_dir}")
    maps = _map(args, lambda n: _read_labels(Path(args.label_dir) / n), names)
    freqs = cw.class_frequencies(maps, args.num_classes, args.ignore)
    w = cw.median_frequency_weights(freqs)
    for cid, factor in args.scale:
        w = cw.scale_class_weight(w, cid, factor)
    out.write(f"images: {len(names)}\n")
    out.write("class p_c w_c\n")
    for c, (p, wc) in enumerate(zip(freqs.p, w.w)):
        p_text = "-" if p is None else repr(float(p))
        out.write(f"{c} {p_text} {float(wc)!r}\n")
    return EXIT_OK


def _add_post_flags(p):
    p.add_argument("--lane-class", type=int, default=pipeline.CLASS_LANE)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--min-pixels", type=int, default=8)
    p.add_argument("--merge-threshold", type=float, default=None,
                   help="merge cost threshold in pixels (default: 5%% of the image diagonal)")
    p.add_argument("--blocks", type=int, default=32, help="horizontal bands for lane candidates")


def build_parser():
    parser = _Parser(prog="lmd", description="Lane marking detection: inference, grouping, fitting.")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS threads and worker threads for multi-file commands")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="print the layer table, parameter count and receptive field")
    p.add_argument("--num-classes", type=int, default=12)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("init-weights", help="write seeded random weights")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-classes", type=int, default=3)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("infer", help="segment a P6 image into a P5 label map")
    p.add_argument("image")
    p.add_argument("--weights", required=True)
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("detect", help="segment, group and fit lanes; write labels, overlay and report")
    p.add_argument("image")
    p.add_argument("--weights")
    p.add_argument("--labels-in", help="skip inference and use this P5 label map")
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--out-dir", default=".")
    _add_post_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("postprocess", help="group and fit lanes in a P5 label map")
    p.add_argument("labels")
    p.add_argument("--image", help="P6 background for --overlay")
    p.add_argument("--overlay")
    p.add_argument("--groups-out")
    p.add_argument("--report")
    _add_post_flags(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", help="per-class accuracy and IoU over matching P5 files")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--ignore", type=int, default=IGNORE_ID)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("class-weights", help="median frequency balancing weights")
    p.add_argument("label_dir")
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--ignore", type=int, default=IGNORE_ID)
    p.add_argument("--scale", type=_parse_scale, action="append", default=[],
                   metavar="CLASS:FACTOR", help="multiply one class weight (repeatable)")
    p.set_defaults(func=cmd_class_weights)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            parser.error("--threads must be >= 1")
    except SystemExit as exc:
        # argparse exits on --help (0) and on usage errors (EXIT_USAGE)
        return exc.code
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args, out)
    except UsageError as exc:
        print(f"lmd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"lmd: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OSError, FormatError) as exc:
        print(f"lmd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
