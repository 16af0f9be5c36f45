"""End-to-end dataset generation, manifest bookkeeping, splits, stats and validation."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import multiprocessing
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .assets import NUTRITION_FIELDS, AssetLibrary, NutritionFacts, builtin_primitive_library
from .camera import RigConfig, build_rig, select_views
from .dynamics import SimParams, compose_dynamic_scene
from .errors import ConfigurationError, GenerationError, ManifestError, PlatesynthError, RangeError, RuleError
from .nutrition import DAILY_REFERENCE, aggregate, class_stats_from_entries, histogram, sum_facts
from .procedural import instantiate, parse_rules, rules_from_dict
from .rasters import read_mask_png, read_pfm, read_png, write_id_png, write_mask_png, write_pfm, write_rgb_png
from .render import BRIGHTNESS_RANGE, LightSpec, bbox2d_from_mask, render_view
from .scene import PlateSpec, derive_seed, make_rng

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_MAX_RETRIES = 3


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline configuration; ``to_dict`` is the manifest snapshot."""

    assets: dict = field(default_factory=lambda: {"builtin": {"seed": 0}})
    mode: str = "dynamic"
    plate: PlateSpec = field(default_factory=PlateSpec)
    sim: SimParams = field(default_factory=SimParams)
    max_items: int = 7
    rules: dict | None = None  # procedural rule document, inline
    rig: RigConfig = field(default_factory=RigConfig)
    light: LightSpec = field(default_factory=LightSpec)
    brightness_range: tuple[float, float] = BRIGHTNESS_RANGE
    views: tuple[int, ...] | None = None  # subset of rig views to render; None = all
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self):
        if self.mode not in ("dynamic", "procedural"):
            raise ConfigurationError(f"plating.mode must be 'dynamic' or 'procedural', got {self.mode!r}")
        if self.mode == "procedural" and self.rules is None:
            raise ConfigurationError("procedural mode needs plating.rules or plating.rules_file")
        if not isinstance(self.max_items, int) or self.max_items < 1:
            raise ConfigurationError("plating.max_items must be an integer >= 1")
        lo, hi = self.brightness_range
        if not BRIGHTNESS_RANGE[0] <= lo <= hi <= BRIGHTNESS_RANGE[1]:
            raise ConfigurationError(f"render.brightness_range must lie within {list(BRIGHTNESS_RANGE)}")
        if self.views is not None:
            if not self.views or len(set(self.views)) != len(self.views) or \
                    any(not 0 <= v < self.rig.n_views for v in self.views):
                raise ConfigurationError("output.views must be distinct indices into the rig")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise ConfigurationError("output.max_retries must be an integer >= 0")
        if set(self.assets) - {"builtin", "dir"} or len(self.assets) != 1:
            raise ConfigurationError("assets must have exactly one of 'builtin' or 'dir'")

    @property
    def view_indices(self) -> tuple[int, ...]:
        return tuple(self.views) if self.views is not None else tuple(range(self.rig.n_views))

    def rule_set(self):
        return rules_from_dict(self.rules)

    def to_dict(self) -> dict:
        rig = self.rig.to_dict()
        width, height = rig.pop("image_width_px"), rig.pop("image_height_px")
        plating = {"mode": self.mode, "plate": self.plate.to_dict(), "sim": self.sim.to_dict(),
                   "max_items": self.max_items}
        if self.rules is not None:
            plating["rules"] = self.rules
        return {
            "assets": self.assets,
            "plating": plating,
            "rig": rig,
            "render": {"resolution": [width, height], "light": self.light.to_dict(),
                       "brightness_range": list(self.brightness_range)},
            "output": {"views": list(self.views) if self.views is not None else None,
                       "max_retries": self.max_retries},
        }

    @classmethod
    def from_dict(cls, data: dict | None, base_dir: str | Path | None = None) -> "PipelineConfig":
        try:
            return cls._from_dict(data or {}, Path(base_dir) if base_dir else Path.cwd())
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid pipeline config: {exc}") from None

    @classmethod
    def _from_dict(cls, data: dict, base: Path) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("pipeline config must be a mapping")
        _only(data, ("assets", "plating", "rig", "render", "output"), "")
        kwargs: dict[str, Any] = {}

        assets = data.get("assets") or {"builtin": {"seed": 0}}
        _only(assets, ("builtin", "dir"), "assets.")
        if "dir" in assets:
            path = Path(assets["dir"])
            assets = {"dir": str(path if path.is_absolute() else (base / path))}
        else:
            builtin = assets.get("builtin") or {}
            _only(builtin, ("seed",), "assets.builtin.")
            assets = {"builtin": {"seed": int(builtin.get("seed", 0))}}
        kwargs["assets"] = assets

        plating = data.get("plating") or {}
        _only(plating, ("mode", "plate", "sim", "max_items", "rules", "rules_file"), "plating.")
        kwargs["mode"] = plating.get("mode", "dynamic")
        kwargs["plate"] = PlateSpec.from_dict(plating.get("plate") or {})
        kwargs["sim"] = SimParams.from_dict(plating.get("sim") or {})
        kwargs["max_items"] = plating.get("max_items", 7)
        if "rules" in plating and "rules_file" in plating:
            raise ConfigurationError("give plating.rules or plating.rules_file, not both")
        if "rules_file" in plating:
            path = Path(plating["rules_file"])
            path = path if path.is_absolute() else base / path
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(f"cannot read rules file {path}: {exc}") from None
            kwargs["rules"] = parse_rules(text).to_dict()
        elif "rules" in plating:
            kwargs["rules"] = rules_from_dict(plating["rules"]).to_dict()
        if kwargs.get("rules") is not None:
            # the rule set carries its own plate; plating.plate wins when given
            if "plate" in plating:
                kwargs["rules"] = dict(kwargs["rules"], plate=kwargs["plate"].to_dict())
            else:
                kwargs["plate"] = PlateSpec.from_dict(kwargs["rules"]["plate"])

        render = data.get("render") or {}
        _only(render, ("resolution", "light", "brightness_range"), "render.")
        width, height = render.get("resolution", (512, 512))
        rig = dict(data.get("rig") or {})
        for key in ("image_width_px", "image_height_px"):
            if key in rig:
                raise ConfigurationError(f"rig.{key} is set through render.resolution")
        kwargs["rig"] = RigConfig.from_dict({**rig, "image_width_px": int(width), "image_height_px": int(height)})
        kwargs["light"] = LightSpec.from_dict(render.get("light") or {})
        kwargs["brightness_range"] = tuple(float(b) for b in render.get("brightness_range", BRIGHTNESS_RANGE))

        output = data.get("output") or {}
        _only(output, ("views", "max_retries"), "output.")
        views = output.get("views")
        kwargs["views"] = tuple(int(v) for v in views) if views is not None else None
        kwargs["max_retries"] = output.get("max_retries", DEFAULT_MAX_RETRIES)
        return cls(**kwargs)


def _only(section: Any, allowed: Sequence[str], prefix: str) -> None:
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section {prefix.rstrip('.') or 'root'} must be a mapping")
    unknown = sorted(str(k) for k in section if k not in allowed)
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from None
    try:
        return PipelineConfig.from_dict(data, base_dir=path.parent)
    except RuleError as exc:
        raise ConfigurationError(f"plating rules: {exc}") from None


@lru_cache(maxsize=8)
def _library_for(assets_json: str) -> AssetLibrary:
    spec = json.loads(assets_json)
    if "dir" in spec:
        return AssetLibrary.from_directory(spec["dir"])
    return builtin_primitive_library(seed=spec["builtin"]["seed"])


def load_library(config: PipelineConfig) -> AssetLibrary:
    return _library_for(json.dumps(config.assets, sort_keys=True))


# ------------------------------------------------------------------ hashing

def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "content_hash"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


# --------------------------------------------------------------- generation

def scene_id_for(index: int) -> str:
    return f"scene_{index:05d}"


def view_id_for(index: int) -> str:
    return f"view_{index:02d}"


def compose_scene(config: PipelineConfig, library: AssetLibrary, seed: int):
    """Compose one scene (dynamic or procedural) with per-item brightness."""
    if config.mode == "dynamic":
        scene = compose_dynamic_scene(library, config.plate, config.sim, config.max_items, seed)
    else:
        scene = instantiate(config.rule_set(), library, make_rng(seed), scene_seed=seed)
    lo, hi = config.brightness_range
    brightness = make_rng(derive_seed(seed, "brightness")).uniform(lo, hi, size=len(scene.items))
    return scene.with_brightness(brightness)


def _generate_scene(config: PipelineConfig, master_seed: int, index: int, out_dir: Path) -> dict:
    """Compose, render and write one scene; retried with fresh seeds on failure."""
    library = load_library(config)
    scene_id = scene_id_for(index)
    errors = []
    for attempt in range(config.max_retries + 1):
        seed = derive_seed(master_seed, index) if attempt == 0 else derive_seed(master_seed, index, "retry", attempt)
        try:
            records = _write_scene(config, library, scene_id, index, seed, out_dir)
            records["scene"]["attempts"] = attempt + 1
            return records
        except PlatesynthError as exc:
            logger.warning("%s attempt %d (seed %d) failed: %s", scene_id, attempt + 1, seed, exc)
            errors.append(f"attempt {attempt + 1} (seed {seed}): {exc.kind}: {exc}")
    raise GenerationError(f"{scene_id} failed after {config.max_retries + 1} attempts: " + "; ".join(errors))


def _write_scene(config: PipelineConfig, library: AssetLibrary, scene_id: str, index: int, seed: int,
                 out_dir: Path) -> dict:
    scene_dir = out_dir / "scenes" / scene_id
    image_root = out_dir / "images" / scene_id
    for d in (scene_dir, image_root):
        if d.exists():
            shutil.rmtree(d)
    scene = compose_scene(config, library, seed)
    if not scene.items:
        raise GenerationError(f"{scene_id}: scene has no items")
    nutrition = aggregate(scene, library)
    cameras = build_rig(scene.plate, config.rig, make_rng(derive_seed(seed, "rig")))

    scene_dir.mkdir(parents=True)
    _write_json(scene_dir / "scene.json", scene.to_dict())
    _write_json(scene_dir / "nutrition.json", nutrition.to_dict())
    rel = lambda p: p.relative_to(out_dir).as_posix()  # noqa: E731

    items = []
    for it in scene.items:
        asset = library[it.asset_id]
        items.append({"instance_id": it.instance_id, "asset_id": it.asset_id,
                      "semantic_class": asset.semantic_class,
                      "semantic_id": library.semantic_id(asset.semantic_class)})
    images = []
    for v in config.view_indices:
        view_id = view_id_for(v)
        camera = cameras[v]
        bundle = render_view(scene, camera, library, light=config.light)
        vdir = image_root / view_id
        (vdir / "amodal").mkdir(parents=True)
        paths = {"rgb": vdir / "rgb.png", "depth": vdir / "depth.pfm", "semantic": vdir / "semantic.png",
                 "instance": vdir / "instance.png", "annotations": vdir / "annotations.json"}
        write_rgb_png(paths["rgb"], bundle.rgb)
        write_pfm(paths["depth"], bundle.depth)
        write_id_png(paths["semantic"], bundle.semantic)
        write_id_png(paths["instance"], bundle.instance)
        amodal_paths = {}
        annotations = []
        for item in items:
            iid = item["instance_id"]
            apath = vdir / "amodal" / f"{iid}.png"
            write_mask_png(apath, bundle.amodal[iid])
            amodal_paths[str(iid)] = rel(apath)
            box = bundle.bbox2d[iid]
            visible = int((bundle.instance == iid).sum())
            annotations.append({**item, "bbox2d": box.to_list() if box else None,
                                "bbox3d": bundle.bbox3d[iid].to_dict(), "brightness": bundle.brightness[iid],
                                "visible_pixels": visible, "amodal_pixels": int(bundle.amodal[iid].sum())})
        _write_json(paths["annotations"], {"scene_id": scene_id, "view_id": view_id, "camera": camera.to_dict(),
                                           "light": config.light.to_dict(), "items": annotations})
        hashes = {k: file_sha256(p) for k, p in paths.items()}
        hashes.update({f"amodal/{iid}": file_sha256(out_dir / p) for iid, p in amodal_paths.items()})
        images.append({"scene_id": scene_id, "view_id": view_id, "view_index": v,
                       "paths": {**{k: rel(p) for k, p in paths.items()}, "amodal": amodal_paths,
                                 "nutrition": rel(scene_dir / "nutrition.json")},
                       "camera": camera.to_dict(), "sha256": hashes})

    record = {"scene_id": scene_id, "index": index, "seed": seed, "mode": scene.mode,
              "items": [{"instance_id": i["instance_id"], "asset_id": i["asset_id"],
                         "semantic_class": i["semantic_class"]} for i in items],
              "rejected": [dict(r) for r in scene.rejected],
              "nutrition": nutrition.totals.to_dict(),
              "paths": {"scene": rel(scene_dir / "scene.json"), "nutrition": rel(scene_dir / "nutrition.json")},
              "sha256": {"scene": file_sha256(scene_dir / "scene.json"),
                         "nutrition": file_sha256(scene_dir / "nutrition.json")}}
    return {"scene": record, "images": images}


def _scene_task(args) -> dict:
    config_dict, master_seed, index, out_dir = args
    config = PipelineConfig.from_dict(config_dict)
    return _generate_scene(config, master_seed, index, Path(out_dir))


def legend_for(library: AssetLibrary) -> dict:
    return {"semantic": {"0": "background", **{str(library.semantic_id(c)): c for c in library.classes}},
            "instance": "0 is background (plate, table); otherwise the scene's instance_id",
            "assets": {a.asset_id: {"semantic_class": a.semantic_class, "display_name": a.display_name,
                                    "nutrition": a.nutrition.to_dict()} for a in library}}


def generate_dataset(config: PipelineConfig, master_seed: int, n_scenes: int, out_dir: str | Path,
                     workers: int = 1) -> dict:
    """Generate ``n_scenes`` scenes into ``out_dir`` and write ``manifest.json``.

    Scene ``s`` always uses seeds derived from ``(master_seed, s)``, so the
    output does not depend on ``workers`` or on how many scenes are requested.
    """
    if n_scenes < 1:
        raise RangeError(f"scene count must be >= 1, got {n_scenes}")
    if workers < 1:
        raise RangeError(f"workers must be >= 1, got {workers}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    library = load_library(config)
    snapshot = config.to_dict()

    results: list[dict | None] = [None] * n_scenes
    failures: list[str] = []
    if workers == 1:
        for s in range(n_scenes):
            try:
                results[s] = _generate_scene(config, master_seed, s, out)
            except GenerationError as exc:
                failures.append(str(exc))
    else:
        ctx = multiprocessing.get_context("spawn")  # fork is unsafe once numba threads exist
        tasks = [(snapshot, master_seed, s, str(out.resolve())) for s in range(n_scenes)]
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_scene_task, t) for t in tasks]
            for s, fut in enumerate(futures):
                try:
                    results[s] = fut.result()
                except GenerationError as exc:
                    failures.append(str(exc))
    if failures:
        raise GenerationError(f"{len(failures)} of {n_scenes} scenes failed: " + " | ".join(failures))

    manifest = {
        "format_version": FORMAT_VERSION,
        "tool": {"name": "platesynth", "version": __version__},
        "master_seed": master_seed,
        "config": snapshot,
        "views_per_scene": len(config.view_indices),
        "legend": legend_for(library),
        "scenes": [r["scene"] for r in results],
        "images": [img for r in results for img in r["images"]],
        "provenance": [{"op": "generate", "scenes": n_scenes}],
    }
    manifest["content_hash"] = content_hash(manifest)
    _write_json(out / "manifest.json", manifest)
    return manifest


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    for key in ("scenes", "images", "legend"):
        if key not in manifest:
            raise ManifestError(f"{path}: manifest lacks '{key}'")
    return manifest


def save_manifest(manifest: dict, path: str | Path) -> None:
    manifest = dict(manifest)
    manifest["content_hash"] = content_hash(manifest)
    _write_json(Path(path), manifest)


# ------------------------------------------------------- subsample / split

def images_by_scene(manifest: dict) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {s["scene_id"]: [] for s in manifest["scenes"]}
    for img in manifest["images"]:
        out.setdefault(img["scene_id"], []).append(img)
    return out


def subsample_views(manifest: dict, k: int, seed: int) -> dict:
    """Keep ``k`` views per scene, chosen with a scene-derived seed."""
    if k < 1:
        raise RangeError(f"k must be >= 1, got {k}")
    grouped = images_by_scene(manifest)
    kept = []
    for scene_id, imgs in grouped.items():
        if len(imgs) < k:
            raise RangeError(f"{scene_id} has {len(imgs)} views, fewer than k={k}")
        imgs = sorted(imgs, key=lambda r: r["view_index"])
        picks = select_views(len(imgs), k, make_rng(derive_seed(seed, scene_id)))
        kept.extend(imgs[i] for i in picks)
    out = dict(manifest)
    out["images"] = kept
    out["views_per_scene"] = k
    out["provenance"] = list(manifest.get("provenance", [])) + [{"op": "subsample", "views": k, "seed": seed}]
    out["content_hash"] = content_hash(out)
    return out


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict[str, str]  # scene_id -> split name
    ratios: tuple[float, ...]
    seed: int

    @property
    def sizes(self) -> dict[str, int]:
        sizes = {name: 0 for name in SPLIT_NAMES[: len(self.ratios)]}
        for split_name in self.assignment.values():
            sizes[split_name] += 1
        return sizes

    def scenes(self, split_name: str) -> list[str]:
        return [s for s, name in self.assignment.items() if name == split_name]

    def to_dict(self) -> dict:
        return {"ratios": list(self.ratios), "seed": self.seed, "sizes": self.sizes,
                "assignment": dict(self.assignment)}


def largest_remainder(ratios: Sequence[float], total: int) -> list[int]:
    """Integer apportionment of ``total``; remainder ties go to the earlier split."""
    quotas = [Fraction(r).limit_denominator(10**9) * total for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    leftover = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def split_scene_ids(scene_ids: Sequence[str], ratios: Sequence[float], seed: int) -> SplitAssignment:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != len(SPLIT_NAMES):
        raise RangeError(f"expected {len(SPLIT_NAMES)} ratios (train, val, test), got {len(ratios)}")
    if any(not math.isfinite(r) or r < 0 for r in ratios):
        raise RangeError(f"ratios must be finite and >= 0, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RangeError(f"ratios must sum to 1, got {sum(ratios)!r}")
    nonzero = sum(r > 0 for r in ratios)
    if len(scene_ids) < nonzero:
        raise RangeError(f"{len(scene_ids)} scenes cannot fill {nonzero} non-empty splits")
    sizes = largest_remainder(ratios, len(scene_ids))
    order = make_rng(derive_seed(seed, "split")).permutation(len(scene_ids))
    assignment = {}
    pos = 0
    for name, size in zip(SPLIT_NAMES, sizes):
        for i in order[pos: pos + size]:
            assignment[scene_ids[int(i)]] = name
        pos += size
    return SplitAssignment({s: assignment[s] for s in scene_ids}, ratios, seed)


def split(manifest: dict, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> SplitAssignment:
    return split_scene_ids([s["scene_id"] for s in manifest["scenes"]], ratios, seed)


# -------------------------------------------------------------------- stats

def stats(manifest: dict) -> dict:
    assets = manifest["legend"]["assets"]
    scenes = manifest["scenes"]
    per_scene_totals = [s["nutrition"] for s in scenes]
    counts = [len(s["items"]) for s in scenes]
    report: dict[str, Any] = {
        "scene_count": len(scenes),
        "image_count": len(manifest["images"]),
        "item_count": sum(counts),
        "mean_items_per_scene": sum(counts) / len(scenes) if scenes else 0.0,
        "histograms": {k: histogram([t[k] for t in per_scene_totals]) for k in NUTRITION_FIELDS},
    }
    report["histograms"]["ingredient_count"] = histogram(counts, integer=True)
    # scenes containing each asset, averaged over every asset in the library
    appearances = {a: 0 for a in assets}
    for s in scenes:
        for a in {i["asset_id"] for i in s["items"]}:
            appearances[a] = appearances.get(a, 0) + 1
    report["scenes_per_asset"] = appearances
    report["mean_scenes_per_item"] = sum(appearances.values()) / len(appearances) if appearances else 0.0
    cs = class_stats_from_entries(
        [(i["semantic_class"], assets[i["asset_id"]]["nutrition"]["mass_g"]) for i in s["items"]] for s in scenes)
    report["class_stats"] = cs.to_dict()
    report["daily_reference_lines"] = dict(DAILY_REFERENCE)
    return report


# --------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    checks: dict[str, dict[str, int]] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    sampled_images: int = 0

    MAX_FAILURES = 200

    @property
    def ok(self) -> bool:
        return all(c["violations"] == 0 for c in self.checks.values())

    def tally(self, name: str, passed: bool, message: str | None = None) -> None:
        c = self.checks.setdefault(name, {"checked": 0, "violations": 0})
        c["checked"] += 1
        if not passed:
            c["violations"] += 1
            if message and len(self.failures) < self.MAX_FAILURES:
                self.failures.append(f"{name}: {message}")

    def to_dict(self) -> dict:
        return {"ok": self.ok, "sampled_images": self.sampled_images, "checks": self.checks,
                "failures": list(self.failures)}


def validate(out_dir: str | Path, sample: float = 1.0, seed: int = 0) -> ValidationReport:
    """Re-check a generated dataset on disk. ``sample`` is the fraction of
    images whose rasters are decoded and checked; file existence, scene files
    and nutrition are always checked in full."""
    if not 0.0 <= sample <= 1.0:
        raise RangeError(f"sample must lie in [0, 1], got {sample}")
    root = Path(out_dir)
    manifest = load_manifest(root)
    report = ValidationReport()
    report.tally("manifest_hash", manifest.get("content_hash") == content_hash(manifest),
                 "manifest content hash does not match its body")
    legend_ids = {int(k) for k in manifest["legend"]["semantic"]}
    assets = manifest["legend"]["assets"]
    scenes = {s["scene_id"]: s for s in manifest["scenes"]}

    for s in manifest["scenes"]:
        for rel_path in s["paths"].values():
            report.tally("file_existence", (root / rel_path).is_file(), f"missing {rel_path}")
        _check_nutrition(root, s, assets, report)

    images = manifest["images"]
    for img in images:
        for rel_path in _image_paths(img):
            report.tally("file_existence", (root / rel_path).is_file(), f"missing {rel_path}")

    n_sample = len(images) if sample >= 1.0 else int(round(sample * len(images)))
    picks = range(len(images)) if n_sample == len(images) else \
        sorted(make_rng(derive_seed(seed, "validate")).choice(len(images), size=n_sample, replace=False))
    for i in picks:
        img = images[int(i)]
        if all((root / p).is_file() for p in _image_paths(img)):
            _check_image(root, img, scenes[img["scene_id"]], legend_ids, report)
            report.sampled_images += 1
    return report


def _image_paths(img: dict) -> list[str]:
    paths = [p for k, p in img["paths"].items() if k != "amodal"]
    return paths + list(img["paths"]["amodal"].values())


def _check_nutrition(root: Path, scene: dict, assets: dict, report: ValidationReport) -> None:
    path = root / scene["paths"]["nutrition"]
    if not path.is_file():
        return
    data = json.loads(path.read_text(encoding="utf-8"))
    expected = sum_facts(NutritionFacts.from_dict(assets[i["asset_id"]]["nutrition"]) for i in scene["items"])
    ok = data["ingredient_count"] == len(scene["items"]) and all(
        math.isclose(data["totals"][k], getattr(expected, k), rel_tol=1e-9, abs_tol=1e-12)
        for k in NUTRITION_FIELDS)
    report.tally("nutrition_additivity", ok, f"{scene['paths']['nutrition']} totals differ from item sum")


def _check_image(root: Path, img: dict, scene: dict, legend_ids: set[int], report: ValidationReport) -> None:
    where = f"{img['scene_id']}/{img['view_id']}"
    cam = img["camera"]
    shape = (cam["image_height_px"], cam["image_width_px"])
    rgb = read_png(root / img["paths"]["rgb"])
    depth = read_pfm(root / img["paths"]["depth"])
    semantic = read_png(root / img["paths"]["semantic"]).astype(np.int64)
    instance = read_png(root / img["paths"]["instance"]).astype(np.int64)
    annotations = json.loads((root / img["paths"]["annotations"]).read_text(encoding="utf-8"))
    amodal = {int(k): read_mask_png(root / p) for k, p in img["paths"]["amodal"].items()}

    dims_ok = rgb.shape == (*shape, 3) and depth.shape == shape and semantic.shape == shape \
        and instance.shape == shape and all(m.shape == shape for m in amodal.values())
    report.tally("raster_dimensions", dims_ok, f"{where}: raster shapes disagree with {shape}")
    if not dims_ok:
        return

    declared = {i["instance_id"]: i for i in annotations["items"]}
    scene_ids = {i["instance_id"] for i in scene["items"]}
    inst_values = set(np.unique(instance).tolist()) - {0}
    sem_values = set(np.unique(semantic).tolist())
    report.tally("legend_closure", inst_values <= scene_ids and set(declared) == scene_ids,
                 f"{where}: undeclared instance id(s) {sorted(inst_values - scene_ids)}")
    report.tally("legend_closure", sem_values <= legend_ids,
                 f"{where}: undeclared semantic id(s) {sorted(sem_values - legend_ids)}")

    # one label per pixel: instance foreground, semantic foreground and
    # finite depth on items must coincide
    fg = instance > 0
    report.tally("mask_partition", bool(np.array_equal(fg, semantic > 0)),
                 f"{where}: instance and semantic foregrounds differ")
    report.tally("mask_partition", bool(np.all(np.isfinite(depth[fg]))),
                 f"{where}: non-finite depth on item pixels")

    for iid, item in declared.items():
        visible = instance == iid
        mask = amodal.get(iid)
        report.tally("visible_subset_amodal", mask is not None and not np.any(visible & ~mask),
                     f"{where}: instance {iid} visible outside its amodal mask")
        report.tally("semantic_consistency", bool(np.all(semantic[visible] == item["semantic_id"])),
                     f"{where}: instance {iid} has mixed semantic ids")
        box = bbox2d_from_mask(visible)
        report.tally("bbox_tightness", (box.to_list() if box else None) == item["bbox2d"],
                     f"{where}: instance {iid} bbox2d {item['bbox2d']} != tight box "
                     f"{box.to_list() if box else None}")
