"""Food assets: OBJ + JSON loading, built-in primitive stand-ins, and sampling."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AssetLookupError, AssetValidationError, ConfigurationError, MeshParseError
from .geometry import Hull, aabb, mass_properties

logger = logging.getLogger(__name__)

NUTRITION_FIELDS = ("mass_g", "calories_kcal", "carbs_g", "fat_g", "protein_g")
META_FIELDS = ("asset_id", "display_name", "semantic_class", "albedo", "scale", "nutrition")
PRIMITIVE_KINDS = ("sphere", "box", "ellipsoid", "cylinder")

# fixed tessellation for primitives
SPHERE_SEGMENTS = 24
SPHERE_RINGS = 12
CYLINDER_SEGMENTS = 24


@dataclass(frozen=True)
class NutritionFacts:
    mass_g: float = 0.0
    calories_kcal: float = 0.0
    carbs_g: float = 0.0
    fat_g: float = 0.0
    protein_g: float = 0.0

    def __post_init__(self):
        for name in NUTRITION_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise AssetValidationError(f"expected a number, got {value!r}", field=name)
            if not math.isfinite(value) or value < 0:
                raise AssetValidationError(f"must be finite and >= 0, got {value!r}", field=name)
            object.__setattr__(self, name, float(value))

    @classmethod
    def from_dict(cls, data: Mapping) -> "NutritionFacts":
        if not isinstance(data, Mapping):
            raise AssetValidationError("must be an object", field="nutrition")
        missing = [k for k in NUTRITION_FIELDS if k not in data]
        if missing:
            raise AssetValidationError("missing required field", field=missing[0])
        return cls(**{k: data[k] for k in NUTRITION_FIELDS})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in NUTRITION_FIELDS}

    def __add__(self, other: "NutritionFacts") -> "NutritionFacts":
        return NutritionFacts(**{k: getattr(self, k) + getattr(other, k) for k in NUTRITION_FIELDS})


@dataclass(frozen=True, eq=False)
class FoodAsset:
    asset_id: str
    display_name: str
    semantic_class: str
    vertices: np.ndarray  # (V, 3) object space, metres
    triangles: np.ndarray  # (T, 3) int
    albedo: tuple[float, float, float]
    nutrition: NutritionFacts
    collision_hull: Hull = field(init=False)
    aabb_object: tuple[np.ndarray, np.ndarray] = field(init=False)

    def __post_init__(self):
        if not self.asset_id:
            raise AssetValidationError("must be non-empty", field="asset_id")
        if not self.semantic_class:
            raise AssetValidationError("must be non-empty", field="semantic_class")
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise AssetValidationError("need at least three 3D vertices", field="mesh")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) < 1:
            raise AssetValidationError("need at least one triangle", field="mesh")
        if not np.all(np.isfinite(verts)):
            raise AssetValidationError("non-finite vertex", field="mesh")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise AssetValidationError("face index out of range", field="mesh")
        albedo = tuple(float(c) for c in self.albedo)
        if len(albedo) != 3 or not all(0.0 <= c <= 1.0 for c in albedo):
            raise AssetValidationError("expected three values in [0, 1]", field="albedo")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "albedo", albedo)
        try:
            hull = Hull.from_points(verts)
        except Exception as exc:  # qhull: flat or degenerate input
            raise AssetValidationError(f"degenerate geometry ({exc.__class__.__name__})", field="mesh") from exc
        object.__setattr__(self, "collision_hull", hull)
        object.__setattr__(self, "aabb_object", aabb(verts))

    @property
    def extent(self) -> np.ndarray:
        lo, hi = self.aabb_object
        return hi - lo

    def mass_properties(self) -> tuple[float, np.ndarray, np.ndarray]:
        """(mass kg, centre of mass, inertia tensor) of the collision hull,
        density chosen so the mass matches the authored nutrition mass."""
        volume, com, inertia_unit = mass_properties(self.collision_hull.vertices, self.collision_hull.faces)
        mass = max(self.nutrition.mass_g, 1.0) / 1000.0
        return mass, com, inertia_unit * (mass / volume)

    def structure_key(self) -> tuple:
        return (self.asset_id, self.display_name, self.semantic_class, self.albedo,
                self.nutrition, self.vertices.tobytes(), self.triangles.tobytes())


class AssetLibrary:
    """Immutable ordered collection of assets with a class index."""

    def __init__(self, assets: Iterable[FoodAsset]):
        self._assets: tuple[FoodAsset, ...] = tuple(assets)
        self._by_id: dict[str, FoodAsset] = {}
        class_index: dict[str, list[str]] = {}
        for asset in self._assets:
            if asset.asset_id in self._by_id:
                raise ConfigurationError(f"duplicate asset_id {asset.asset_id!r}")
            self._by_id[asset.asset_id] = asset
            class_index.setdefault(asset.semantic_class, []).append(asset.asset_id)
        self._class_index = {k: tuple(v) for k, v in class_index.items()}

    @property
    def assets(self) -> tuple[FoodAsset, ...]:
        return self._assets

    @property
    def class_index(self) -> dict[str, tuple[str, ...]]:
        return dict(self._class_index)

    @property
    def asset_ids(self) -> list[str]:
        return [a.asset_id for a in self._assets]

    @property
    def classes(self) -> list[str]:
        """Semantic classes sorted by name; semantic id = position + 1."""
        return sorted(self._class_index)

    def semantic_id(self, semantic_class: str) -> int:
        return self.classes.index(semantic_class) + 1

    def __len__(self) -> int:
        return len(self._assets)

    def __iter__(self):
        return iter(self._assets)

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self._by_id

    def __getitem__(self, asset_id: str) -> FoodAsset:
        try:
            return self._by_id[asset_id]
        except KeyError:
            raise AssetLookupError(f"unknown asset id {asset_id!r}") from None

    @classmethod
    def from_directory(cls, root: str | Path) -> "AssetLibrary":
        root = Path(root)
        if not root.is_dir():
            raise ConfigurationError(f"asset library directory not found: {root}")
        assets = [load_asset(sub / "mesh.obj", sub / "meta.json")
                  for sub in sorted(p for p in root.iterdir() if p.is_dir())]
        if not assets:
            raise ConfigurationError(f"no assets found under {root}")
        return cls(assets)


def parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``v`` and ``f`` records of a Wavefront OBJ; faces must be triangles."""
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex needs three coordinates", lineno)
            try:
                xyz = tuple(float(x) for x in parts[1:4])
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {raw.strip()!r}", lineno) from None
            if not all(math.isfinite(c) for c in xyz):
                raise MeshParseError("non-finite vertex coordinate", lineno)
            vertices.append(xyz)
        elif tag == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise MeshParseError(f"face has {len(refs)} vertices; only triangles are supported", lineno)
            idx = []
            for ref in refs:
                try:
                    i = int(ref.split("/")[0])
                except ValueError:
                    raise MeshParseError(f"bad face index {ref!r}", lineno) from None
                i = i - 1 if i > 0 else len(vertices) + i
                if i < 0 or i >= len(vertices):
                    raise MeshParseError(f"face index {ref!r} out of range", lineno)
                idx.append(i)
            faces.append(tuple(idx))
    if not faces:
        raise MeshParseError("mesh contains no faces")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64)


def write_obj(path: str | Path, vertices, triangles) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(vertices, dtype=np.float64).tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_asset(mesh_file: str | Path, metadata_file: str | Path) -> FoodAsset:
    vertices, triangles = parse_obj(Path(mesh_file).read_text())
    try:
        meta = json.loads(Path(metadata_file).read_text())
    except json.JSONDecodeError as exc:
        raise AssetValidationError(f"invalid JSON ({exc.msg} at line {exc.lineno})", field="metadata") from exc
    if not isinstance(meta, dict):
        raise AssetValidationError("metadata must be a JSON object", field="metadata")
    for key in sorted(set(meta) - set(META_FIELDS)):
        logger.warning("%s: ignoring unknown metadata field %r", metadata_file, key)
    for key in ("asset_id", "semantic_class", "albedo", "nutrition"):
        if key not in meta:
            raise AssetValidationError("missing required field", field=key)
    scale = meta.get("scale", 1.0)
    if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not math.isfinite(scale) or scale <= 0:
        raise AssetValidationError(f"must be a positive number, got {scale!r}", field="scale")
    albedo = meta["albedo"]
    if not isinstance(albedo, list) or len(albedo) != 3 or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in albedo):
        raise AssetValidationError("expected [r, g, b]", field="albedo")
    return FoodAsset(
        asset_id=str(meta["asset_id"]),
        display_name=str(meta.get("display_name", meta["asset_id"])),
        semantic_class=str(meta["semantic_class"]),
        vertices=vertices * float(scale),
        triangles=triangles,
        albedo=tuple(albedo),
        nutrition=NutritionFacts.from_dict(meta["nutrition"]),
    )


def save_asset(asset: FoodAsset, directory: str | Path) -> Path:
    """Write ``mesh.obj`` + ``meta.json`` in the library layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_obj(directory / "mesh.obj", asset.vertices, asset.triangles)
    meta = {
        "asset_id": asset.asset_id,
        "display_name": asset.display_name,
        "semantic_class": asset.semantic_class,
        "albedo": list(asset.albedo),
        "nutrition": asset.nutrition.to_dict(),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return directory


# -- primitives ---------------------------------------------------------------

def _uv_sphere(segments: int, rings: int) -> tuple[np.ndarray, np.ndarray]:
    verts = [(0.0, 0.0, 1.0)]
    for r in range(1, rings):
        polar = math.pi * r / rings
        for s in range(segments):
            az = 2.0 * math.pi * s / segments
            verts.append((math.sin(polar) * math.cos(az), math.sin(polar) * math.sin(az), math.cos(polar)))
    verts.append((0.0, 0.0, -1.0))
    bottom = len(verts) - 1
    tris = []

    def ring(r, s):
        return 1 + (r - 1) * segments + (s % segments)

    for s in range(segments):
        tris.append((0, ring(1, s), ring(1, s + 1)))
    for r in range(1, rings - 1):
        for s in range(segments):
            a, b = ring(r, s), ring(r, s + 1)
            c, d = ring(r + 1, s), ring(r + 1, s + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    for s in range(segments):
        tris.append((bottom, ring(rings - 1, s + 1), ring(rings - 1, s)))
    return np.array(verts), np.array(tris, dtype=np.int64)


def _box(extents) -> tuple[np.ndarray, np.ndarray]:
    hx, hy, hz = (0.5 * e for e in extents)
    verts = np.array([[sx * hx, sy * hy, sz * hz]
                      for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
    # vertex index = 4*ix + 2*iy + iz
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return verts, np.array(tris, dtype=np.int64)


def _cylinder(radius: float, height: float, segments: int) -> tuple[np.ndarray, np.ndarray]:
    h = 0.5 * height
    verts = [(0.0, 0.0, h), (0.0, 0.0, -h)]
    for s in range(segments):
        az = 2.0 * math.pi * s / segments
        verts.append((radius * math.cos(az), radius * math.sin(az), h))
        verts.append((radius * math.cos(az), radius * math.sin(az), -h))
    tris = []
    for s in range(segments):
        t0, b0 = 2 + 2 * s, 3 + 2 * s
        t1, b1 = 2 + 2 * ((s + 1) % segments), 3 + 2 * ((s + 1) % segments)
        tris += [(0, t0, t1), (1, b1, b0), (t0, b0, b1), (t0, b1, t1)]
    return np.array(verts), np.array(tris, dtype=np.int64)


def _as_extents(kind: str, size_m) -> tuple[float, ...]:
    size = np.atleast_1d(np.asarray(size_m, dtype=np.float64))
    need = {"sphere": 1, "box": 3, "ellipsoid": 3, "cylinder": 2}[kind]
    if size.size == 1 and need > 1 and kind != "cylinder":
        size = np.repeat(size, need)
    if size.size != need:
        raise AssetValidationError(f"{kind} needs {need} extent value(s), got {size.size}", field="size_m")
    if not np.all(np.isfinite(size)) or np.any(size <= 0):
        raise AssetValidationError(f"extents must be positive, got {size.tolist()}", field="size_m")
    return tuple(float(s) for s in size)


def make_primitive_asset(kind: str, size_m, semantic_class: str, nutrition: NutritionFacts,
                         seed: int, asset_id: str | None = None,
                         display_name: str | None = None) -> FoodAsset:
    """Build a watertight primitive stand-in asset.

    ``size_m`` is the radius for a sphere, full (x, y, z) extents for a box,
    semi-axes for an ellipsoid, and (radius, height) for a cylinder.  The seed
    only picks the flat albedo colour.
    """
    if kind not in PRIMITIVE_KINDS:
        raise AssetValidationError(f"unknown primitive kind {kind!r}", field="kind")
    ext = _as_extents(kind, size_m)
    if kind == "sphere":
        unit, tris = _uv_sphere(SPHERE_SEGMENTS, SPHERE_RINGS)
        verts = unit * ext[0]
    elif kind == "ellipsoid":
        unit, tris = _uv_sphere(SPHERE_SEGMENTS, SPHERE_RINGS)
        verts = unit * np.array(ext)
    elif kind == "box":
        verts, tris = _box(ext)
    else:
        verts, tris = _cylinder(ext[0], ext[1], CYLINDER_SEGMENTS)
    rng = np.random.default_rng(seed)
    albedo = tuple(float(round(c, 6)) for c in rng.uniform(0.15, 0.95, size=3))
    if asset_id is None:
        asset_id = f"{semantic_class}_{kind}_{seed}"
    return FoodAsset(asset_id=asset_id, display_name=display_name or asset_id,
                     semantic_class=semantic_class, vertices=verts, triangles=tris,
                     albedo=albedo, nutrition=nutrition)


# Built-in desk-scale library: 8 assets, 4 classes.
_BUILTIN_SPECS: Sequence[tuple[str, str, object, tuple[float, ...]]] = (
    ("apple", "ellipsoid", (0.032, 0.032, 0.027), (150.0, 78.0, 20.7, 0.3, 0.4)),
    ("apple", "ellipsoid", (0.028, 0.028, 0.024), (105.0, 55.0, 14.6, 0.2, 0.3)),
    ("bread", "box", (0.060, 0.045, 0.018), (40.0, 106.0, 19.6, 1.3, 3.6)),
    ("bread", "box", (0.045, 0.045, 0.025), (35.0, 93.0, 17.2, 1.1, 3.2)),
    ("carrot", "cylinder", (0.012, 0.070), (60.0, 25.0, 5.8, 0.1, 0.6)),
    ("carrot", "cylinder", (0.010, 0.050), (45.0, 18.0, 4.3, 0.1, 0.4)),
    ("chicken", "box", (0.050, 0.035, 0.022), (85.0, 140.0, 0.0, 3.0, 26.4)),
    ("chicken", "ellipsoid", (0.030, 0.022, 0.014), (70.0, 115.0, 0.0, 2.5, 21.7)),
)


def builtin_primitive_library(seed: int = 0) -> AssetLibrary:
    assets = []
    for k, (cls, kind, size, nut) in enumerate(_BUILTIN_SPECS):
        assets.append(make_primitive_asset(
            kind, size, cls, NutritionFacts(*nut), seed=seed * 1000 + k,
            asset_id=f"{cls}_{k:02d}", display_name=f"{cls} #{k}"))
    return AssetLibrary(assets)


def sample_item_count(max_items: int, n_assets: int, rng: np.random.Generator, min_items: int = 3) -> int:
    hi = min(max_items, n_assets)
    lo = min(min_items, hi)
    return int(rng.integers(lo, hi + 1))


def sample_items(library: AssetLibrary, max_items: int, rng: np.random.Generator,
                 min_items: int = 3) -> list[str]:
    """Distinct asset ids; count uniform over {min(3, cap), ..., cap} where
    cap = min(max_items, library size)."""
    if len(library) == 0:
        raise ConfigurationError("cannot sample from an empty asset library")
    if max_items < 1:
        raise ConfigurationError(f"max_items must be >= 1, got {max_items}")
    count = sample_item_count(max_items, len(library), rng, min_items)
    picked = rng.choice(len(library), size=count, replace=False)
    ids = library.asset_ids
    return [ids[int(i)] for i in picked]
