"""Batch command line: plan, mask, tokenmask, stitch, metrics, synth,
report, validate.

Defaults can come from a JSON config file (--config); explicit flags win.
Errors are emitted as machine-readable JSON on stderr with exit codes
2 (configuration), 3 (data), 4 (degenerate geometry).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    DegenerateGeometryError,
    EngineError,
    FormatError,
    ConsistencyError,
    ValidationError,
)
from .io import load_manifest, save_pointcloud, save_poses
from .metrics import CSV_COLUMNS, MetricReport, report_csv_rows
from .pipeline import (
    DEFAULT_MAX_POINTS_PER_FRAME,
    build_chunk_clouds,
    compute_metrics,
    run_stitch,
    write_suppression_masks,
    write_token_masks,
)
from .prior import NearHandParams
from .stitching import fuse, plan_chunks
from .synth import SynthConfig, generate, write_dataset


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_pair(text: str, name: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{name} expects two comma-separated values, got {text!r}")
    return float(parts[0]), float(parts[1])


def _near_hand(arg: str | None) -> NearHandParams | None:
    if arg is None:
        return None
    radius, threshold = _parse_pair(arg, "--near-hand")
    return NearHandParams(radius=int(radius), threshold=threshold)


def _write_json(path: Path | None, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _cmd_plan(args) -> int:
    plans = plan_chunks(args.frames, args.chunk, args.overlap)
    doc = {
        "frame_count": args.frames,
        "chunk_length": args.chunk,
        "overlap": args.overlap,
        "chunk_count": len(plans),
        "chunks": [
            {
                "chunk_id": p.chunk_id,
                "start": p.start,
                "end": p.end,
                "overlap_start": p.overlap[0] if len(p.overlap) else None,
                "overlap_end": p.overlap[-1] + 1 if len(p.overlap) else None,
            }
            for p in plans
        ],
    }
    _write_json(Path(args.out) if args.out else None, doc)
    return 0


def _cmd_mask(args) -> int:
    manifest = load_manifest(args.manifest)
    mode = args.mode.replace("-", "_")
    paths = write_suppression_masks(manifest, args.out, mode,
                                    near_hand=_near_hand(args.near_hand),
                                    threads=args.threads)
    print(f"wrote {len(paths)} suppression masks to {args.out}")
    return 0


def _cmd_tokenmask(args) -> int:
    masks = sorted(Path(args.masks).glob("*.pgm"))
    if not masks:
        raise ConsistencyError(f"no .pgm masks found under {args.masks}")
    h, w = _parse_pair(args.input_size, "--input-size")
    paths = write_token_masks(masks, args.out, (int(h), int(w)), args.patch,
                              threads=args.threads)
    print(f"wrote {len(paths)} token masks to {args.out}")
    return 0


def _cmd_stitch(args) -> int:
    manifest = load_manifest(args.manifest)
    plans, chunk_poses, result = run_stitch(manifest, min_overlap=args.min_overlap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "stitch.json", result.to_dict())
    save_poses(out / "trajectory.jsonl", sorted(result.global_poses.items()))
    clouds = build_chunk_clouds(manifest, plans, chunk_poses, args.max_points)
    cloud = fuse(clouds, result, voxel_size=args.voxel)
    if len(plans) > 255 and cloud.chunk_ids is not None:
        from .geometry import PointCloud

        cloud = PointCloud(cloud.points)  # uchar chunk property cannot hold >255 ids
    save_pointcloud(cloud, out / "fused.ply")
    print(f"stitched {len(plans)} chunks; fused cloud has {len(cloud)} points")
    return 0


def _cmd_metrics(args) -> int:
    manifest = load_manifest(args.manifest)
    kinds = ("dynamics", "fulltime") if args.eval == "both" else (args.eval,)
    report = compute_metrics(manifest, kinds=kinds, max_points_per_frame=args.max_points,
                             min_overlap=args.min_overlap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report.to_dict())
    rows = report_csv_rows(report, args.name)
    with open(out / "metrics.csv", "w", newline="", encoding="ascii") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote metrics for variant {args.name!r} to {out}")
    return 0


def _cmd_synth(args) -> int:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synth config {args.config}: {exc}") from exc
    if "onsets" in doc and doc["onsets"] is not None:
        doc["onsets"] = tuple(doc["onsets"])
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        config = SynthConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"invalid synth config: {exc}") from exc
    manifest_path = write_dataset(generate(config), args.out)
    print(f"synthetic dataset written; manifest at {manifest_path}")
    return 0


def _cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    doc = {
        "frame_count": manifest.frame_count,
        "fps": manifest.fps,
        "chunking": {"length": manifest.chunk_length, "overlap": manifest.chunk_overlap},
        "chunks": len(manifest.chunk_pose_paths),
        "tracks": len(manifest.load_tracks().tracks) if manifest.track_index_path else 0,
        "eval_masks": sorted(manifest.eval_mask_dirs),
        "valid": True,
    }
    _write_json(Path(args.out) if args.out else None, doc)
    return 0


def _cmd_report(args) -> int:
    rows = []
    for item in args.inputs:
        if "=" not in item:
            raise ConfigError(f"--inputs expects name=path entries, got {item!r}")
        name, path = item.split("=", 1)
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read metrics report {path}: {exc}") from exc
        rows.extend(report_csv_rows(MetricReport.from_dict(doc), name))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="ascii") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    show = ["variant", "mask_kind", "e_cen_mean", "b_all", "b_static",
            "d_all", "c_den", "c_occ", "c_od", "scale_mean"]

    def cell(value):
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.6f}"
        return str(value)

    table = [[cell(r[c]) for c in show] for r in rows]
    widths = [max(len(show[i]), *(len(row[i]) for row in table)) if table else len(show[i])
              for i in range(len(show))]
    print("  ".join(h.ljust(w) for h, w in zip(show, widths)))
    for row in table:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egostitch",
                     description="Chunked reconstruction post-processing toolkit")
    parser.add_argument("--config", help="JSON file with flag defaults (flags win)")
    parser.add_argument("--threads", type=int, default=None,
                        help="parallelism degree (default: machine)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compute the chunk plan")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--chunk", type=int, required=True)
    p.add_argument("--overlap", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("mask", help="write per-frame suppression masks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("dynamic-only", "cumulative"), required=True)
    p.add_argument("--near-hand", metavar="R,TAU", default=None,
                   help="enable the hand-proximity filter")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("tokenmask", help="pool pixel masks onto the token grid")
    p.add_argument("--masks", required=True, help="directory of .pgm masks")
    p.add_argument("--input-size", default="800,800", metavar="H,W")
    p.add_argument("--patch", type=int, default=14)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tokenmask)

    p = sub.add_parser("stitch", help="stitch chunks and fuse the cloud")
    p.add_argument("--manifest", required=True)
    p.add_argument("--voxel", type=float, default=0.0)
    p.add_argument("--max-points", type=int, default=DEFAULT_MAX_POINTS_PER_FRAME)
    p.add_argument("--min-overlap", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stitch)

    p = sub.add_parser("metrics", help="compute the evaluation metric report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--eval", choices=("dynamics", "fulltime", "both"), default="both")
    p.add_argument("--max-points", type=int, default=DEFAULT_MAX_POINTS_PER_FRAME)
    p.add_argument("--min-overlap", type=int, default=3)
    p.add_argument("--name", default="run", help="variant label for the CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", dest="config", default=None, help="SynthConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="comparison table across variants")
    p.add_argument("--inputs", nargs="+", required=True, metavar="NAME=METRICS_JSON")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="fully validate a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_validate)

    return parser


_EXIT_CODES = (
    (ConfigError, 2),
    (DegenerateGeometryError, 4),
    (FormatError, 3),
    (ConsistencyError, 3),
    (ValidationError, 3),
    (EngineError, 3),
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # config file provides defaults; explicit flags override on re-parse
        args, _ = parser.parse_known_args(argv)
        if getattr(args, "config", None) and args.command != "synth":
            try:
                defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(defaults, dict):
                raise ConfigError("config file must hold a JSON object")
            parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
        return args.func(args)
    except EngineError as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                break
        else:  # pragma: no cover - EngineError always matches above
            code = 3
        json.dump({"error": {"type": type(exc).__name__, "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return code
    except OSError as exc:
        json.dump({"error": {"type": "OSError", "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
