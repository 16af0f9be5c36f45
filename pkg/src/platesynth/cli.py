"""Command-line entry point: generate, subsample, split, stats, validate.

Every command prints a JSON document on stdout. Failures print a JSON error
on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, PlatesynthError
from .pipeline import (generate_dataset, load_config, load_manifest, save_manifest, split, stats,
                       subsample_views, validate)


def _ratios(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platesynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset")
    g.add_argument("--config", required=True, type=Path)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--scenes", required=True, type=int)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("subsample", help="keep k views per scene")
    s.add_argument("--manifest", required=True, type=Path)
    s.add_argument("--views", required=True, type=int)
    s.add_argument("--seed", required=True, type=int)
    s.add_argument("--out", type=Path, help="default: manifest_views<k>.json next to the input")

    p = sub.add_parser("split", help="assign scenes to train/val/test")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--ratios", type=_ratios, default=[0.6, 0.2, 0.2])
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", type=Path, help="default: splits.json next to the manifest")

    t = sub.add_parser("stats", help="dataset statistics report")
    t.add_argument("--manifest", required=True, type=Path)
    t.add_argument("--out", type=Path)

    v = sub.add_parser("validate", help="re-check a generated dataset")
    v.add_argument("--dir", required=True, type=Path)
    v.add_argument("--sample", type=float, default=1.0)
    v.add_argument("--seed", type=int, default=0)
    return parser


def _manifest_path(path: Path) -> Path:
    return path / "manifest.json" if path.is_dir() else path


def run(args: argparse.Namespace) -> tuple[dict, int]:
    if args.command == "generate":
        config = load_config(args.config)
        manifest = generate_dataset(config, args.seed, args.scenes, args.out, workers=args.workers)
        return {"scenes": len(manifest["scenes"]), "images": len(manifest["images"]),
                "manifest": str(args.out / "manifest.json"), "content_hash": manifest["content_hash"]}, 0
    if args.command == "subsample":
        src = _manifest_path(args.manifest)
        out = subsample_views(load_manifest(src), args.views, args.seed)
        dest = args.out or src.with_name(f"manifest_views{args.views}.json")
        save_manifest(out, dest)
        return {"images": len(out["images"]), "manifest": str(dest), "content_hash": out["content_hash"]}, 0
    if args.command == "split":
        src = _manifest_path(args.manifest)
        assignment = split(load_manifest(src), args.ratios, args.seed)
        dest = args.out or src.with_name("splits.json")
        dest.write_text(json.dumps(assignment.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return {"sizes": assignment.sizes, "splits": str(dest)}, 0
    if args.command == "stats":
        report = stats(load_manifest(_manifest_path(args.manifest)))
        if args.out:
            args.out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            return {"report": str(args.out), "scene_count": report["scene_count"]}, 0
        return report, 0
    if args.command == "validate":
        report = validate(args.dir, sample=args.sample, seed=args.seed)
        return report.to_dict(), 0 if report.ok else 1
    raise ConfigurationError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        payload, code = run(args)
    except PlatesynthError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(payload, indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
