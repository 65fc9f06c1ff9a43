"""Batch command-line front end.

Subcommands: refine, phantom, evaluate, overwrite, census. Exit codes:
0 success, 2 bad config, 3 missing input, 4 landmark outside the DVF
domain, 5 geometry mismatch. Batch commands isolate per-item failures and
still exit 0; outputs are written atomically (temp + rename) and are
byte-identical on re-runs with identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from vesselmark import volume_io
from vesselmark.config import ConfigError, RunConfig, load_config
from vesselmark.errors import (
    GeometryMismatchError,
    MalformedRowError,
    MissingFileError,
    OutOfBoundsError,
    UnitMismatchError,
)
from vesselmark.evaluation import compute_tre, dataset_census, load_case
from vesselmark.grower import refine_with_fallback
from vesselmark.phantom import make_phantom_pair, save_phantom_pair
from vesselmark.volume import OrganMaskSet, overwrite_organ_intensities

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_OUTSIDE_DVF = 4
EXIT_GEOMETRY = 5


def _write_text_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _find_case_volume(case_dir: Path, stem: str) -> Path:
    for suffix in (".nii.gz", ".nii", ".raw"):
        p = case_dir / f"{stem}{suffix}"
        if p.exists():
            return p
    raise MissingFileError(f"no {stem} volume found in {case_dir}")


def _read_seed_rows(path: Path):
    if not path.exists():
        raise MissingFileError(f"seeds file {path} not found")
    lines = path.read_text().splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != [
        "id", "image", "x_mm", "y_mm", "z_mm",
    ]:
        raise MalformedRowError(1, "expected header id,image,x_mm,y_mm,z_mm")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 5:
            raise MalformedRowError(lineno, f"expected 5 fields, got {len(fields)}")
        rows.append(
            (int(fields[0]), int(fields[1]),
             np.array([float(v) for v in fields[2:5]]))
        )
    return rows


def cmd_refine(cfg: RunConfig, args) -> int:
    case_dir = Path(args.case_dir)
    if not case_dir.is_dir():
        print(f"case directory {case_dir} not found", file=sys.stderr)
        return EXIT_MISSING_INPUT
    try:
        images = {
            1: volume_io.load_volume(_find_case_volume(case_dir, "image1")),
            2: volume_io.load_volume(_find_case_volume(case_dir, "image2")),
        }
        seeds = _read_seed_rows(Path(args.seeds_file))
    except (MissingFileError, MalformedRowError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_INPUT

    out_dir = Path(args.out_dir) if args.out_dir else case_dir / "refined"

    def run_one(row):
        seed_id, image_no, seed = row
        if image_no not in images:
            return (seed_id, image_no, seed, "error", "",
                    f"image must be 1 or 2, got {image_no}", None)
        try:
            point, trace = refine_with_fallback(
                images[image_no], seed, cfg.grow, cfg.vesselness, cfg.region_grow
            )
            return (seed_id, image_no, point, trace.outcome.value,
                    trace.source.value, "", trace)
        except Exception as exc:  # per-item isolation
            return (seed_id, image_no, seed, "error", "", str(exc), None)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_one, seeds))
    else:
        results = [run_one(row) for row in seeds]

    lines = ["id,image,x_mm,y_mm,z_mm,outcome,source,note"]
    for seed_id, image_no, point, outcome, source, note, trace in results:
        lines.append(
            f"{seed_id},{image_no},{point[0]!r},{point[1]!r},{point[2]!r},"
            f"{outcome},{source},{note}"
        )
        if trace is not None:
            _write_text_atomic(
                out_dir / f"trace_{seed_id}_img{image_no}.tsv",
                trace.to_table(cfg.grow),
            )
    _write_text_atomic(out_dir / "refined.csv", "\n".join(lines) + "\n")
    print(f"wrote {out_dir / 'refined.csv'} ({len(results)} seeds)")
    return EXIT_OK


def _read_landmark_points(path: Path):
    if not path.exists():
        raise MissingFileError(f"landmarks file {path} not found")
    lines = path.read_text().splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != [
        "id", "x_mm", "y_mm", "z_mm",
    ]:
        raise MalformedRowError(1, "expected header id,x_mm,y_mm,z_mm")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 4:
            raise MalformedRowError(lineno, f"expected 4 fields, got {len(fields)}")
        points.append((int(fields[0]), np.array([float(v) for v in fields[1:]])))
    return points


def cmd_phantom(cfg: RunConfig, args) -> int:
    try:
        image = volume_io.load_volume(args.image)
        landmarks = _read_landmark_points(Path(args.landmarks_file))
    except (MissingFileError, MalformedRowError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_INPUT
    if not landmarks:
        print("landmarks file holds no points", file=sys.stderr)
        return EXIT_MISSING_INPUT

    count = args.count if args.count else cfg.phantom_count
    master = cfg.phantom_master_seed
    child_seeds = np.random.SeedSequence(master).generate_state(count)
    out_dir = Path(args.out_dir)

    def run_one(i):
        lm_id, lm = landmarks[i % len(landmarks)]
        pair = make_phantom_pair(image, lm, int(child_seeds[i]))
        pair_dir = out_dir / f"pair_{i:03d}"
        save_phantom_pair(pair, pair_dir, cfg.volume_format)
        return lm_id

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            used = list(pool.map(run_one, range(count)))
    else:
        used = [run_one(i) for i in range(count)]

    suite = {
        "master_seed": master,
        "count": count,
        "source_image": str(args.image),
        "landmark_ids": [int(u) for u in used],
    }
    _write_text_atomic(
        out_dir / "suite.json", json.dumps(suite, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {count} phantom pairs to {out_dir}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    try:
        case = load_case(args.case_dir)
        dvf = volume_io.load_vector_field(args.dvf)
    except (MissingFileError, MalformedRowError, UnitMismatchError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_INPUT

    pairs = case.landmarks
    outside = [
        p.id for p in pairs if not dvf.geometry.contains_world(p.p1)
    ]
    if outside:
        print(
            "landmarks outside the DVF domain: "
            + ", ".join(str(i) for i in outside),
            file=sys.stderr,
        )
        return EXIT_OUTSIDE_DVF

    report = compute_tre(pairs, dvf, include_flagged=args.include_flagged)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.case_dir) / "tre"
    _write_text_atomic(
        out_dir / "tre_report.json",
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
    )
    _write_text_atomic(out_dir / "tre_report.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_overwrite(cfg: RunConfig, args) -> int:
    try:
        image = volume_io.load_volume(args.image)
    except MissingFileError as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING_INPUT

    entries = []
    for spec_arg in args.mask or []:
        if "=" not in spec_arg:
            print(f"--mask expects NAME=PATH, got {spec_arg!r}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        name, mask_path = spec_arg.split("=", 1)
        if name not in cfg.organ_fill:
            print(f"no organ_fill.{name} configured", file=sys.stderr)
            return EXIT_BAD_CONFIG
        try:
            mask_vol = volume_io.load_volume(mask_path)
        except MissingFileError as exc:
            print(exc, file=sys.stderr)
            return EXIT_MISSING_INPUT
        entries.append((name, mask_vol))

    try:
        mask_set = OrganMaskSet(
            image.geometry,
            [(vol.values > 0.5, cfg.organ_fill[name]) for name, vol in entries],
        )
        for _, vol in entries:
            if vol.geometry != image.geometry:
                raise GeometryMismatchError(
                    f"mask grid {vol.geometry.dims} != image grid {image.geometry.dims}"
                )
        result = overwrite_organ_intensities(image, mask_set)
    except GeometryMismatchError as exc:
        print(exc, file=sys.stderr)
        return EXIT_GEOMETRY

    volume_io.save_volume(result, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_census(cfg: RunConfig, args) -> int:
    dataset_dir = Path(args.dataset_dir)
    if not dataset_dir.is_dir():
        print(f"dataset directory {dataset_dir} not found", file=sys.stderr)
        return EXIT_MISSING_INPUT
    case_dirs = sorted(
        d for d in dataset_dir.iterdir()
        if d.is_dir() and (d / "landmarks.csv").exists()
    )
    if not case_dirs:
        print("warning: no case directories found", file=sys.stderr)
    cases = []
    for d in case_dirs:
        try:
            cases.append(load_case(d))
        except (MissingFileError, MalformedRowError, UnitMismatchError) as exc:
            print(f"skipping {d}: {exc}", file=sys.stderr)
    summary = dataset_census(cases)
    print(summary.to_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesselmark",
        description="Vessel-bifurcation landmark refinement and DIR evaluation",
    )
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument("--seed", type=int, help="override phantom master seed")
    parser.add_argument("--threads", type=int, help="parallel worker count")
    parser.add_argument(
        "--include-flagged", action="store_true",
        help="include flagged landmark pairs in evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="sphere-grow seed points to bifurcations")
    p.add_argument("case_dir")
    p.add_argument("seeds_file")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("phantom", help="generate warped phantom patch pairs")
    p.add_argument("image")
    p.add_argument("landmarks_file")
    p.add_argument("-n", "--count", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("evaluate", help="compute TRE for a DVF over a case")
    p.add_argument("case_dir")
    p.add_argument("dvf")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("overwrite", help="overwrite organ mask intensities")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--mask", action="append", metavar="NAME=PATH")
    p.set_defaults(func=cmd_overwrite)

    p = sub.add_parser("census", help="landmark census over a dataset directory")
    p.add_argument("dataset_dir")
    p.set_defaults(func=cmd_census)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_BAD_CONFIG
    if args.seed is not None:
        cfg.phantom_master_seed = args.seed
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    return args.func(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
