"""Command-line entry point: fit, perturb, eval, analyze.

Every command writes a manifest.json next to its outputs (started before the
work, finalized after) carrying content digests of the inputs, the seed, and
the tool version, so a run is replayable from the manifest alone. Failures
print a machine-readable error JSON to stderr; exit codes are 0 success,
2 usage/config error, 3 numerical divergence, 4 I/O error.

SKELFIT_THREADS caps the per-instance fan-out of ``eval`` (0 or unset means
one worker per CPU). Results are always reduced in input order, so the
thread count never changes the output.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .ccd import active_backend
from .cloud import PointCloud, add_gaussian_noise, farthest_point_sample, subsample
from .errors import ArgumentError, DivergenceError, ParseError, SkelfitError
from .fileio import load_annotations, load_cloud, save_cloud, save_xyz
from .metrics import (
    MatchConfig,
    MetricReport,
    das,
    miou,
    miou_counts,
    repeatability,
    skeleton_distance_histogram,
)
from .optim import FitConfig, fit
from .skeleton import sample_edges, skeleton_from_json, skeleton_to_json
from .svgplot import histogram_chart, line_chart

EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems through the JSON emitter
        raise ArgumentError(message)


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(65536), b""):
                h.update(chunk)
    except OSError as exc:
        raise ParseError(f"cannot read input: {exc.strerror}", path) from None
    return h.hexdigest()


def _sha256_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


class Manifest:
    """Run record, written before the work starts and finalized after."""

    def __init__(self, path, command, argv, inputs, seed, config_digest=None):
        self.path = path
        self.t0 = time.perf_counter()
        self.data = {
            "command": command,
            "argv": [str(a) for a in argv],
            "config_digest": config_digest,
            "input_digests": {str(p): _sha256_file(p) for p in inputs},
            "seed": seed,
            "version": __version__,
            "started_at": _utcnow(),
            "finished_at": None,
            "status": "running",
            "outputs": {},
            "warnings": [],
            "wall_time_s": None,
        }
        _write_json(self.path, self.data)

    def warn(self, message: str) -> None:
        self.data["warnings"].append(message)

    def finalize(self, status: str, outputs: dict | None = None) -> None:
        self.data["status"] = status
        self.data["finished_at"] = _utcnow()
        self.data["wall_time_s"] = time.perf_counter() - self.t0
        if outputs:
            self.data["outputs"] = {k: _sha256_file(v) for k, v in outputs.items()}
        _write_json(self.path, self.data)


def _load_config_json(path) -> dict:
    if not os.path.exists(path):
        raise ArgumentError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"config file is not valid JSON ({exc.msg}): {path}")


def _write_reconstruction(path, subclouds) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in range(subclouds.n_edges):
            for p in subclouds.subcloud(e):
                fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {e}\n")


def cmd_fit(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    raw_config = _load_config_json(args.config)
    config = FitConfig.from_json(raw_config)
    inputs = [args.input, args.config] + ([args.anchors] if args.anchors else [])
    manifest = Manifest(
        os.path.join(args.out, "manifest.json"),
        "fit",
        args.effective_argv,
        inputs,
        config.seed,
        config_digest=_sha256_obj(raw_config),
    )
    try:
        cloud = load_cloud(args.input, args.format)
        if args.anchors:
            anchors = load_cloud(args.anchors, "xyz").points
        else:
            # materialize the default anchor schedule so later runs on
            # perturbed clouds can share this initialization via --anchors
            centered = cloud.points - cloud.points.mean(axis=0)
            d2 = (centered * centered).sum(axis=1)
            idx = farthest_point_sample(
                cloud, config.k, config.seed, start_index=int(np.argmax(d2))
            )
            anchors = cloud.points[idx]
        report = fit(cloud, config, anchors=anchors)

        anchors_path = os.path.join(args.out, "anchors.xyz")
        save_xyz(anchors_path, anchors)
        skeleton_path = os.path.join(args.out, "skeleton.json")
        report_path = os.path.join(args.out, "report.json")
        curve_path = os.path.join(args.out, "loss_curve.svg")
        recon_path = os.path.join(args.out, "reconstruction.xyz")
        _write_json(
            skeleton_path,
            skeleton_to_json(report.skeleton, report.activations, report.best_params.plan),
        )
        _write_json(report_path, report.to_json())
        history = np.asarray(report.history, dtype=np.float64)
        line_chart(
            curve_path,
            {
                "total": history[:, 0].tolist(),
                "fidelity": history[:, 1].tolist(),
                "coverage": history[:, 2].tolist(),
                "penalty": history[:, 3].tolist(),
            },
            title="loss curve",
            x_label="iteration",
            y_label="loss",
        )
        _write_reconstruction(recon_path, report.subclouds)
        outputs = {
            "anchors.xyz": anchors_path,
            "skeleton.json": skeleton_path,
            "report.json": report_path,
            "loss_curve.svg": curve_path,
            "reconstruction.xyz": recon_path,
        }
        if args.trace:
            from .ccd import ccd

            result = ccd(cloud, report.subclouds, report.activations, config.ccd, with_trace=True)
            trace_path = os.path.join(args.out, "trace.json")
            _write_json(trace_path, result.trace.to_json())
            outputs["trace.json"] = trace_path
        manifest.finalize("ok", outputs)
        return 0
    except SkelfitError:
        manifest.finalize("error")
        raise


def cmd_perturb(args) -> int:
    if args.mode == "noise":
        if args.magnitude < 0:
            raise ArgumentError(f"noise magnitude must be nonnegative, got {args.magnitude}")
    elif not 0.0 < args.magnitude <= 1.0:
        raise ArgumentError(f"subsample ratio must be in (0, 1], got {args.magnitude}")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    manifest = Manifest(
        os.path.join(out_dir, "manifest.json"),
        "perturb",
        args.effective_argv,
        [args.input],
        args.seed,
        config_digest=_sha256_obj({"mode": args.mode, "magnitude": args.magnitude}),
    )
    manifest.data["mode"] = args.mode
    manifest.data["magnitude"] = args.magnitude
    try:
        cloud = load_cloud(args.input, args.format)
        if args.mode == "noise":
            out = add_gaussian_noise(cloud, args.magnitude, args.seed)
        else:
            out = subsample(cloud, args.magnitude, args.seed)
        save_cloud(args.out, out, "xyz")
        manifest.finalize("ok", {os.path.basename(args.out): args.out})
        return 0
    except SkelfitError:
        manifest.finalize("error")
        raise


def _thread_count() -> int:
    raw = os.environ.get("SKELFIT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ArgumentError(f"SKELFIT_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ArgumentError("SKELFIT_THREADS must be nonnegative")
    return n if n > 0 else (os.cpu_count() or 1)


def _parallel_map(func, items):
    if len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(_thread_count(), len(items))) as pool:
        return list(pool.map(func, items))  # input order preserved


def _chunk(paths, size, what):
    if len(paths) == 0 or len(paths) % size != 0:
        raise ArgumentError(
            f"{what} expects inputs in groups of {size}, got {len(paths)} paths"
        )
    return [tuple(paths[i : i + size]) for i in range(0, len(paths), size)]


def cmd_eval(args) -> int:
    config = _load_config_json(args.config) if args.config else {}
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    manifest = Manifest(
        os.path.join(out_dir, "manifest.json"),
        "eval",
        args.effective_argv,
        list(args.inputs),
        config.get("seed"),
        config_digest=_sha256_obj(config),
    )
    try:
        if args.metric == "miou":
            match = MatchConfig(
                distance_threshold=config.get("distance_threshold", 0.1),
                matching=config.get("matching", "greedy"),
            )
            pairs = _chunk(args.inputs, 2, "miou (prediction, annotation)")

            def one_miou(pair):
                pred = load_cloud(pair[0], "xyz")
                anno = load_annotations(pair[1])
                return miou(pred.points, anno, match), miou_counts(pred.points, anno, match)

            results = _parallel_map(one_miou, pairs)
            scores = [r[0] for r in results]
            echo = {"distance_threshold": match.distance_threshold, "matching": match.matching}
            report = MetricReport("miou", scores, echo).to_json()
            if config.get("aggregate") == "pooled":
                tp = sum(r[1][0] for r in results)
                fp = sum(r[1][1] for r in results)
                fn = sum(r[1][2] for r in results)
                report["pooled"] = tp / (tp + fp + fn)
                report["config"]["aggregate"] = "pooled"
        elif args.metric == "das":
            pairs = _chunk(args.inputs, 2, "das (prediction, annotation)")
            if len(pairs) < 2:
                raise ArgumentError("das needs at least two (prediction, annotation) instances")
            loaded = _parallel_map(
                lambda pair: (load_cloud(pair[0], "xyz").points, load_annotations(pair[1])), pairs
            )
            ref_pred, ref_anno = loaded[0]

            def one_das(item):
                pred, anno = item
                forward = das(ref_pred, ref_anno, pred, anno)
                backward = das(pred, anno, ref_pred, ref_anno)
                return (forward + backward) / 2.0

            scores = _parallel_map(one_das, loaded[1:])
            report = MetricReport("das", scores, {"reference": str(pairs[0][0])}).to_json()
        else:  # repeatability
            triples = _chunk(
                args.inputs, 3, "repeatability (original kp, perturbed kp, original cloud)"
            )

            def one_rep(triple):
                original = load_cloud(triple[0], "xyz")
                perturbed = load_cloud(triple[1], "xyz")
                cloud = load_cloud(triple[2])
                return repeatability(
                    original.points, perturbed.points, cloud.bounding_box().diagonal
                )

            scores = _parallel_map(one_rep, triples)
            report = MetricReport("repeatability", scores, {"threshold": "0.1 * model size"}).to_json()
        _write_json(args.out, report)
        manifest.finalize("ok", {os.path.basename(args.out): args.out})
        return 0
    except SkelfitError:
        manifest.finalize("error")
        raise


def cmd_analyze(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    manifest = Manifest(
        os.path.join(args.out, "manifest.json"),
        "analyze",
        args.effective_argv,
        [args.input, args.skeleton],
        args.seed,
    )
    try:
        cloud = load_cloud(args.input, args.format)
        try:
            with open(args.skeleton, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid skeleton JSON: {exc.msg}", args.skeleton, exc.lineno)
        skeleton, _activations, plan = skeleton_from_json(doc)

        box = cloud.bounding_box()
        kp_box_diag = float(
            np.linalg.norm(skeleton.keypoints.max(axis=0) - skeleton.keypoints.min(axis=0))
        )
        ratio = kp_box_diag / box.diagonal if box.diagonal > 0 else float("inf")
        outside = np.any(
            (skeleton.keypoints < box.min - 0.25 * box.diagonal)
            | (skeleton.keypoints > box.max + 0.25 * box.diagonal)
        )
        if ratio > 2.0 or ratio < 0.25 or outside:
            manifest.warn(
                "skeleton and cloud appear to use different normalizations "
                f"(keypoint bbox diagonal {kp_box_diag:.3g} vs cloud {box.diagonal:.3g})"
            )

        rng = np.random.Generator(np.random.Philox(args.seed))
        bbox_pts = rng.uniform(box.min, box.max, size=(args.bbox_samples, 3))
        skeleton_samples = PointCloud(sample_edges(skeleton, plan).points)
        histogram_path = os.path.join(args.out, "histogram.json")
        svg_path = os.path.join(args.out, "histogram.svg")
        edges, counts = skeleton_distance_histogram(
            cloud,
            skeleton_samples,
            PointCloud(skeleton.keypoints),
            PointCloud(bbox_pts),
            bins=args.bins,
        )
        _write_json(
            histogram_path,
            {
                "bin_edges": [float(v) for v in edges],
                "series": {name: [int(c) for c in counts[name]] for name in ("skeleton", "keypoints", "bbox")},
            },
        )
        histogram_chart(
            svg_path,
            edges,
            counts,
            title="nearest-neighbor distances",
            x_label="distance",
            y_label="count",
        )
        manifest.finalize("ok", {"histogram.json": histogram_path, "histogram.svg": svg_path})
        return 0
    except SkelfitError:
        manifest.finalize("error")
        raise


def build_parser() -> _Parser:
    parser = _Parser(prog="skelfit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"skelfit {__version__} ({active_backend()} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a skeleton to a point cloud")
    p_fit.add_argument("--input", required=True, help="point cloud file (xyz/ply/npy)")
    p_fit.add_argument("--config", required=True, help="flat JSON fit config; requires 'k'")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--format", choices=("xyz", "ply", "npy"), help="override input format")
    p_fit.add_argument("--anchors", help="xyz file of k initial keypoint anchors (shared initialization)")
    p_fit.add_argument("--trace", action="store_true", help="dump the final coverage selection trace")
    p_fit.set_defaults(func=cmd_fit)

    p_pert = sub.add_parser("perturb", help="noise or subsample a point cloud")
    p_pert.add_argument("--input", required=True)
    p_pert.add_argument("--mode", required=True, choices=("noise", "subsample"))
    p_pert.add_argument("--magnitude", required=True, type=float, help="noise sigma or keep ratio")
    p_pert.add_argument("--seed", type=int, default=0)
    p_pert.add_argument("--out", required=True, help="output xyz file")
    p_pert.add_argument("--format", choices=("xyz", "ply", "npy"))
    p_pert.set_defaults(func=cmd_perturb)

    p_eval = sub.add_parser("eval", help="run a keypoint metric over instances")
    p_eval.add_argument("--metric", required=True, choices=("miou", "das", "repeatability"))
    p_eval.add_argument("--config", help="metric config JSON")
    p_eval.add_argument("--out", required=True, help="output report JSON")
    p_eval.add_argument(
        "inputs",
        nargs="+",
        help="miou/das: pred.xyz anno.json per instance; "
        "repeatability: orig.xyz perturbed.xyz cloud per instance",
    )
    p_eval.set_defaults(func=cmd_eval)

    p_an = sub.add_parser("analyze", help="nearest-distance histogram for a fitted skeleton")
    p_an.add_argument("--input", required=True, help="point cloud file")
    p_an.add_argument("--skeleton", required=True, help="skeleton JSON from fit")
    p_an.add_argument("--bbox-samples", type=int, default=3200)
    p_an.add_argument("--bins", type=int, default=32)
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--out", required=True, help="output directory")
    p_an.add_argument("--format", choices=("xyz", "ply", "npy"))
    p_an.set_defaults(func=cmd_analyze)
    return parser


def _emit_error(code: int, kind: str, message: str, path=None) -> None:
    payload = {"error": {"code": code, "kind": kind, "message": message}}
    if path is not None:
        payload["error"]["path"] = str(path)
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.effective_argv = list(argv) if argv is not None else sys.argv[1:]
        return args.func(args)
    except ArgumentError as exc:
        _emit_error(EXIT_USAGE, "usage", str(exc))
        return EXIT_USAGE
    except DivergenceError as exc:
        _emit_error(EXIT_DIVERGED, "divergence", str(exc))
        return EXIT_DIVERGED
    except (ParseError, OSError) as exc:
        path = getattr(exc, "path", None) or getattr(exc, "filename", None)
        _emit_error(EXIT_IO, "io", str(exc), path)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
