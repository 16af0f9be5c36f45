"""Lambertian raycast renderer and per-view ground-truth annotations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._raycast import BVH, build_bvh, cast_primary
from .assets import AssetLibrary, FoodAsset
from .camera import CameraPose
from .errors import ConfigurationError
from .geometry import quat_to_matrix
from .plate import plate_mesh
from .scene import PlateSpec, Scene

PLATE_ALBEDO = (0.92, 0.92, 0.90)
TABLE_ALBEDO = (0.42, 0.31, 0.22)
TABLE_HALF_SIZE_M = 2.0
BRIGHTNESS_RANGE = (1.0, 2.0)


@dataclass(frozen=True)
class LightSpec:
    direction: tuple[float, float, float] = (0.3, -0.4, 1.0)  # toward the light
    ambient: float = 0.35
    diffuse: float = 0.65

    @property
    def unit_direction(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=np.float64)
        return d / np.linalg.norm(d)

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "ambient": self.ambient, "diffuse": self.diffuse}

    @classmethod
    def from_dict(cls, d: dict) -> "LightSpec":
        unknown = set(d) - {"direction", "ambient", "diffuse"}
        if unknown:
            raise ConfigurationError(f"unknown light keys: {sorted(unknown)}")
        out = cls(**{k: (tuple(v) if k == "direction" else v) for k, v in d.items()})
        if len(out.direction) != 3 or not np.linalg.norm(out.direction) > 0:
            raise ConfigurationError("light.direction must be a non-zero 3-vector")
        return out


@dataclass(frozen=True)
class Bbox2D:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Bbox3D:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        local = signs * np.asarray(self.half_extents)
        return local @ quat_to_matrix(self.orientation).T + np.asarray(self.center)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_extents": list(self.half_extents),
                "orientation": list(self.orientation)}


@dataclass
class RenderBundle:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, +inf background
    semantic: np.ndarray  # (H, W) uint16
    instance: np.ndarray  # (H, W) uint16
    amodal: dict[int, np.ndarray]  # instance id -> (H, W) bool
    bbox2d: dict[int, Bbox2D | None]
    bbox3d: dict[int, Bbox3D]
    brightness: dict[int, float]
    semantic_classes: dict[int, str] = field(default_factory=dict)  # instance id -> class

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def bbox2d_from_mask(mask) -> Bbox2D | None:
    """Tight inclusive box over the set pixels; None for an empty mask."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return Bbox2D(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def bbox3d_for_item(aabb_object, position, orientation) -> Bbox3D:
    """Object-space AABB carried rigidly by the pose (an oriented box)."""
    lo, hi = (np.asarray(x, dtype=np.float64) for x in aabb_object)
    rot = quat_to_matrix(orientation)
    center = rot @ ((lo + hi) / 2.0) + np.asarray(position, dtype=np.float64)
    half = (hi - lo) / 2.0
    return Bbox3D(tuple(float(c) for c in center), tuple(float(h) for h in half),
                  tuple(float(q) for q in orientation))


@lru_cache(maxsize=256)
def _asset_bvh(asset: FoodAsset) -> tuple[BVH, np.ndarray]:
    bvh = build_bvh(asset.vertices, asset.triangles)
    return bvh, _face_normals(asset.vertices, asset.triangles)


@lru_cache(maxsize=16)
def _static_bvhs(plate: PlateSpec) -> tuple[tuple[BVH, np.ndarray], tuple[BVH, np.ndarray]]:
    pv, pt = plate_mesh(plate)
    h = TABLE_HALF_SIZE_M
    cx, cy, _ = plate.center
    tv = np.array([[cx - h, cy - h, 0.0], [cx + h, cy - h, 0.0], [cx + h, cy + h, 0.0], [cx - h, cy + h, 0.0]])
    tt = np.array([[0, 1, 2], [0, 2, 3]])
    return (build_bvh(pv, pt), _face_normals(pv, pt)), (build_bvh(tv, tt), _face_normals(tv, tt))


def _face_normals(vertices, triangles) -> np.ndarray:
    tri = np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return n / np.linalg.norm(n, axis=1)[:, None]


def _trace(scene: Scene, camera: CameraPose, library: AssetLibrary, include_static: bool = True):
    instances = []  # (bvh, normals, rotation, translation, albedo)
    for item in scene.items:
        asset = library[item.asset_id]
        bvh, normals = _asset_bvh(asset)
        instances.append((bvh, normals, quat_to_matrix(item.orientation), np.asarray(item.position), asset.albedo))
    if include_static:
        (pb, pn), (tb, tn) = _static_bvhs(scene.plate)
        instances.append((pb, pn, np.eye(3), np.zeros(3), PLATE_ALBEDO))
        instances.append((tb, tn, np.eye(3), np.zeros(3), TABLE_ALBEDO))
    bvhs = [inst[0] for inst in instances]
    if not bvhs:
        h, w = camera.image_height_px, camera.image_width_px
        return (np.full((h, w), np.inf), np.full((h, w), -1, np.int32), np.full((h, w), -1, np.int32),
                np.ones((h, w)), np.zeros((0, h, w), bool), instances)
    node_off = np.cumsum([0] + [len(b.node_left) for b in bvhs])[:-1].astype(np.int64)
    tri_off = np.cumsum([0] + [len(b.tri_order) for b in bvhs])[:-1].astype(np.int64)
    cat = lambda name: np.ascontiguousarray(np.concatenate([getattr(b, name) for b in bvhs]))  # noqa: E731
    rot = np.ascontiguousarray(np.stack([inst[2] for inst in instances]))
    trans = np.ascontiguousarray(np.stack([inst[3] for inst in instances]).astype(np.float64))
    fwd = camera.forward
    rgt = camera.right
    down = -camera.up
    out = cast_primary(np.asarray(camera.position, dtype=np.float64), rgt, down, fwd, camera.focal_px,
                       camera.image_width_px / 2.0, camera.image_height_px / 2.0,
                       camera.image_width_px, camera.image_height_px, rot, trans, node_off, tri_off,
                       cat("node_min"), cat("node_max"), cat("node_left"), cat("node_right"),
                       cat("node_start"), cat("node_count"), cat("tri_verts"), len(scene.items))
    return (*out, instances)


def render_view(scene: Scene, camera: CameraPose, library: AssetLibrary, light: LightSpec | None = None,
                brightness=None) -> RenderBundle:
    """Render RGB, planar depth, id masks, amodal masks and boxes for one view.

    ``brightness`` is a per-item factor in [1, 2] (defaults to the scene's).
    """
    light = light or LightSpec()
    n_items = len(scene.items)
    if brightness is None:
        brightness = scene.brightness if scene.brightness else (1.0,) * n_items
    brightness = [float(b) for b in brightness]
    if len(brightness) != n_items:
        raise ConfigurationError(f"need {n_items} brightness factors, got {len(brightness)}")
    lo, hi = BRIGHTNESS_RANGE
    if any(not lo <= b <= hi for b in brightness):
        raise ConfigurationError(f"brightness factors must lie in [{lo}, {hi}]")

    t, inst, tri, cos_fwd, item_hit, instances = _trace(scene, camera, library)
    hit = inst >= 0
    depth = np.where(hit, t * cos_fwd, np.inf).astype(np.float32)

    # shading
    h, w = depth.shape
    rgb = np.zeros((h, w, 3))
    light_dir = light.unit_direction
    ray_dirs = _pixel_directions(camera)
    for k, (bvh, normals, rot, _, albedo) in enumerate(instances):
        sel = inst == k
        if not sel.any():
            continue
        n_world = normals[bvh.tri_order[tri[sel]]] @ rot.T
        # two-sided: face the normal toward the viewer
        facing = np.einsum("ij,ij->i", n_world, ray_dirs[sel])
        n_world[facing > 0] *= -1.0
        lambert = np.maximum(0.0, n_world @ light_dir)
        gain = brightness[k] if k < n_items else 1.0
        shade = (light.ambient + light.diffuse * lambert)[:, None]
        rgb[sel] = np.asarray(albedo) * gain * shade
    rgb8 = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)

    instance = np.zeros((h, w), dtype=np.uint16)
    semantic = np.zeros((h, w), dtype=np.uint16)
    amodal, boxes2d, boxes3d, factors, classes = {}, {}, {}, {}, {}
    for k, item in enumerate(scene.items):
        asset = library[item.asset_id]
        sel = inst == k
        instance[sel] = item.instance_id
        semantic[sel] = library.semantic_id(asset.semantic_class)
        amodal[item.instance_id] = item_hit[k].copy()
        boxes2d[item.instance_id] = bbox2d_from_mask(sel)
        boxes3d[item.instance_id] = bbox3d_for_item(asset.aabb_object, item.position, item.orientation)
        factors[item.instance_id] = brightness[k]
        classes[item.instance_id] = asset.semantic_class
    return RenderBundle(rgb=rgb8, depth=depth, semantic=semantic, instance=instance, amodal=amodal,
                        bbox2d=boxes2d, bbox3d=boxes3d, brightness=factors, semantic_classes=classes)


def amodal_masks(scene: Scene, camera: CameraPose, library: AssetLibrary) -> dict[int, np.ndarray]:
    """Full silhouette of every item, each traced against its own mesh only."""
    *_, item_hit, _ = _trace(scene, camera, library, include_static=False)
    return {item.instance_id: item_hit[k].copy() for k, item in enumerate(scene.items)}


def _pixel_directions(camera: CameraPose) -> np.ndarray:
    h, w = camera.image_height_px, camera.image_width_px
    f = camera.focal_px
    u = (np.arange(w) + 0.5 - w / 2.0) / f
    v = (np.arange(h) + 0.5 - h / 2.0) / f
    uu, vv = np.meshgrid(u, v)
    d = (uu[..., None] * camera.right + vv[..., None] * (-camera.up) + camera.forward)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_ray(camera: CameraPose, u: int, v: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space origin and unit direction through the centre of pixel (u, v)."""
    f = camera.focal_px
    x = (u + 0.5 - camera.image_width_px / 2.0) / f
    y = (v + 0.5 - camera.image_height_px / 2.0) / f
    d = x * camera.right - y * camera.up + camera.forward
    return np.asarray(camera.position, dtype=np.float64), d / np.linalg.norm(d)


def sample_brightness(n_items: int, rng: np.random.Generator) -> tuple[float, ...]:
    lo, hi = BRIGHTNESS_RANGE
    return tuple(float(b) for b in rng.uniform(lo, hi, size=n_items))
