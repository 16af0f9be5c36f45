"""Dynamic plating: segmented drop planning, rigid-body settling, rejection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _physics_kernels as K
from .assets import AssetLibrary, FoodAsset, sample_items
from .errors import ConfigurationError, GenerationError, PlanningError, SimulationDivergenceError
from .geometry import edge_samples, penetration_depth, point_hull_distance, quat_to_matrix, random_quaternion
from .plate import distance_to_plate, outer_radius, plate_pieces
from .scene import PlacedItem, PlateSpec, Scene, derive_seed, make_rng

logger = logging.getLogger(__name__)

PROBE_SPACING_M = 0.005
CONTACT_EPS_M = 1e-3


@dataclass(frozen=True)
class SimParams:
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    timestep_s: float = 1.0 / 240.0
    friction_coeff: float = 0.5
    restitution: float = 0.1
    settle_speed_eps: float = 0.01
    settle_hold_s: float = 0.5
    max_sim_s: float = 10.0
    drop_height_range_m: tuple[float, float] = (0.10, 0.30)
    drop_radius_frac: tuple[float, float] = (0.2, 0.7)
    segment_inset_frac: float = 0.1
    linear_damping: float = 0.2
    angular_damping: float = 1.0
    velocity_iterations: int = 20
    position_iterations: int = 10

    def __post_init__(self):
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        object.__setattr__(self, "drop_height_range_m", tuple(float(h) for h in self.drop_height_range_m))
        object.__setattr__(self, "drop_radius_frac", tuple(float(h) for h in self.drop_radius_frac))
        if len(self.gravity) != 3 or not all(math.isfinite(g) for g in self.gravity):
            raise ConfigurationError(f"gravity must be three finite numbers, got {self.gravity}")
        if not self.timestep_s > 0:
            raise ConfigurationError(f"timestep_s must be > 0, got {self.timestep_s}")
        if not self.settle_hold_s > 0:
            raise ConfigurationError(f"settle_hold_s must be > 0, got {self.settle_hold_s}")
        if not self.max_sim_s >= self.settle_hold_s:
            raise ConfigurationError("max_sim_s must be >= settle_hold_s")
        lo, hi = self.drop_height_range_m
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"drop_height_range_m must satisfy 0 <= min <= max, got {(lo, hi)}")
        rlo, rhi = self.drop_radius_frac
        if not 0 <= rlo <= rhi <= 1:
            raise ConfigurationError(f"drop_radius_frac must lie in [0, 1], got {(rlo, rhi)}")
        if not 0 <= self.segment_inset_frac < 0.5:
            raise ConfigurationError("segment_inset_frac must lie in [0, 0.5)")
        for name in ("friction_coeff", "restitution", "settle_speed_eps", "linear_damping", "angular_damping"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SimParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown sim keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class RigidState:
    position: tuple[float, float, float]  # object-frame origin
    orientation: tuple[float, float, float, float]
    linear_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angular_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DropEntry:
    asset_id: str
    segment_index: int
    drop_point: tuple[float, float]
    drop_height_m: float
    initial_orientation: tuple[float, float, float, float]


@dataclass(frozen=True)
class DropPlan:
    entries: tuple[DropEntry, ...]


@dataclass
class SettleReport:
    settled: list[tuple[str, RigidState]] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    steps_simulated: int = 0
    kinetic_energy_first_contact: float = 0.0
    kinetic_energy_final: float = 0.0

    @property
    def settled_ids(self) -> list[str]:
        return [a for a, _ in self.settled]

    @property
    def rejected_ids(self) -> list[str]:
        return [a for a, _ in self.rejected]


def segment_of(point_xy, plate: PlateSpec) -> int:
    """Angular segment index containing a plate-relative xy point."""
    ang = math.atan2(point_xy[1] - plate.center[1], point_xy[0] - plate.center[0]) % (2 * math.pi)
    return int(ang // (2 * math.pi / plate.segment_count)) % plate.segment_count


def plan_drops(items: list[str], plate: PlateSpec, params: SimParams, rng: np.random.Generator) -> DropPlan:
    if len(items) > plate.segment_count:
        raise PlanningError(f"{len(items)} items but only {plate.segment_count} plate segments; "
                            "raise segment_count")
    width = 2 * math.pi / plate.segment_count
    inset = params.segment_inset_frac * width
    r_lo, r_hi = (f * plate.radius_m for f in params.drop_radius_frac)
    h_lo, h_hi = params.drop_height_range_m
    segments = rng.choice(plate.segment_count, size=len(items), replace=False)
    entries = []
    for asset_id, seg in zip(items, segments):
        theta = (int(seg) + 0.0) * width + rng.uniform(inset, width - inset)
        # uniform by area over the annulus sector
        r = math.sqrt(rng.uniform(r_lo * r_lo, r_hi * r_hi))
        point = (plate.center[0] + r * math.cos(theta), plate.center[1] + r * math.sin(theta))
        entries.append(DropEntry(
            asset_id=asset_id, segment_index=int(seg), drop_point=point,
            drop_height_m=float(rng.uniform(h_lo, h_hi)),
            initial_orientation=tuple(float(c) for c in random_quaternion(rng))))
    return DropPlan(tuple(entries))


class _Shape:
    """Body-frame collision data for one asset."""

    def __init__(self, asset: FoodAsset):
        mass, com, inertia = asset.mass_properties()
        hull = asset.collision_hull
        self.com = com
        self.inv_mass = 1.0 / mass
        self.inv_inertia = np.linalg.inv(inertia)
        local = hull.vertices - com
        self.planes = hull.planes.copy()
        self.planes[:, 3] += self.planes[:, :3] @ com
        self.probes = np.vstack([local, edge_samples(hull, PROBE_SPACING_M) - com])
        self.bound_r = float(np.linalg.norm(local, axis=1).max())
        self.hull_local = local
        self.faces = hull.faces


def static_collision(plate: PlateSpec):
    """Packed planes/probes/bounds of the plate pieces for the contact kernel."""
    pieces = plate_pieces(plate)
    planes = [p.planes for p in pieces]
    probes = [np.vstack([p.vertices, edge_samples(p, PROBE_SPACING_M)]) for p in pieces]
    centers = np.array([p.vertices.mean(axis=0) for p in pieces])
    bounds = np.array([np.linalg.norm(p.vertices - c, axis=1).max() for p, c in zip(pieces, centers)])
    return (np.ascontiguousarray(np.vstack(planes)),
            np.cumsum([0] + [len(x) for x in planes]).astype(np.int64),
            np.ascontiguousarray(np.vstack(probes)),
            np.cumsum([0] + [len(x) for x in probes]).astype(np.int64),
            centers, bounds)


def _kinetic_energy(vel, omg, inv_mass, inv_inertia_body, quat, active) -> float:
    total = 0.0
    for i in range(len(vel)):
        if not active[i]:
            continue
        m = 1.0 / inv_mass[i]
        r = quat_to_matrix(quat[i])
        inertia = r @ np.linalg.inv(inv_inertia_body[i]) @ r.T
        total += 0.5 * m * float(vel[i] @ vel[i]) + 0.5 * float(omg[i] @ inertia @ omg[i])
    return total


def simulate(plan: DropPlan, plate: PlateSpec, library: AssetLibrary, params: SimParams) -> SettleReport:
    """Drop the planned items and run until every remaining body has settled."""
    report = SettleReport()
    if not plan.entries:
        return report
    # canonical body order: by asset id, then plan position
    order = sorted(range(len(plan.entries)), key=lambda k: (plan.entries[k].asset_id, k))
    entries = [plan.entries[k] for k in order]
    shapes = [_Shape(library[e.asset_id]) for e in entries]
    nb = len(entries)

    pos = np.zeros((nb, 3))
    quat = np.zeros((nb, 4))
    for i, (e, sh) in enumerate(zip(entries, shapes)):
        q = np.asarray(e.initial_orientation, dtype=np.float64)
        quat[i] = q / np.linalg.norm(q)
        lowest = (sh.hull_local @ quat_to_matrix(quat[i]).T)[:, 2].min()
        pos[i] = (e.drop_point[0], e.drop_point[1], plate.top_z_m + e.drop_height_m - lowest)
    vel = np.zeros((nb, 3))
    omg = np.zeros((nb, 3))
    active = np.ones(nb, dtype=np.bool_)
    inv_mass = np.array([s.inv_mass for s in shapes])
    inv_inertia = np.array([s.inv_inertia for s in shapes])
    probe_off = np.cumsum([0] + [len(s.probes) for s in shapes]).astype(np.int64)
    plane_off = np.cumsum([0] + [len(s.planes) for s in shapes]).astype(np.int64)
    probes = np.ascontiguousarray(np.vstack([s.probes for s in shapes]))
    planes = np.ascontiguousarray(np.vstack([s.planes for s in shapes]))
    bound_r = np.array([s.bound_r for s in shapes])
    static = static_collision(plate)
    cap = int(len(probes) * (nb + 8) + len(static[2]) * nb + 16)
    buf_i = np.zeros((cap, 2), dtype=np.int64)
    buf_f = np.zeros((cap, 7))
    gravity = np.array(params.gravity, dtype=np.float64)

    dt = params.timestep_s
    max_steps = int(math.ceil(params.max_sim_s / dt))
    hold_steps = int(math.ceil(params.settle_hold_s / dt))
    calm = np.zeros(nb, dtype=np.int64)
    status = [None] * nb
    ke_first = None
    step = 0

    r_out = outer_radius(plate)

    def _radial(i) -> float:
        return math.hypot(pos[i, 0] - plate.center[0], pos[i, 1] - plate.center[1])

    def _off_plate(i) -> bool:
        return _radial(i) > plate.radius_m

    while step < max_steps and active.any():
        nc = K.step(pos, quat, vel, omg, active, inv_mass, inv_inertia,
                    probes, probe_off, planes, plane_off, bound_r,
                    *static, gravity, dt, params.friction_coeff, params.restitution,
                    params.linear_damping, params.angular_damping,
                    params.velocity_iterations, params.position_iterations,
                    5e-4, 0.2, 2e-3, buf_i, buf_f)
        step += 1
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(quat))
                and np.all(np.isfinite(vel)) and np.all(np.isfinite(omg))):
            raise SimulationDivergenceError(step)
        if ke_first is None and nc > 0:
            ke_first = _kinetic_energy(vel, omg, inv_mass, inv_inertia, quat, active)
        lin = np.linalg.norm(vel, axis=1)
        ang = np.linalg.norm(omg, axis=1)
        # angular speed compared as surface speed so both tests are in m/s
        quiet = (lin < params.settle_speed_eps) & (ang * bound_r < params.settle_speed_eps)
        calm = np.where(quiet & active, calm + 1, 0)
        for i in range(nb):
            # fallen beside the plate: below its top and outside its lip
            if active[i] and pos[i, 2] < plate.top_z_m and _radial(i) > r_out:
                active[i] = False
                status[i] = "off_plate"
        if active.any() and np.all(calm[active] >= hold_steps):
            removed = [i for i in range(nb) if active[i] and _off_plate(i)]
            for i in removed:
                status[i] = "off_plate"
            if not removed:
                # resting but not supported at its lowest point: not a proper settle
                gaps = _support_gaps(pos, quat, shapes, active, plate)
                removed = [i for i in range(nb) if active[i] and gaps[i] > CONTACT_EPS_M]
                for i in removed:
                    status[i] = "unsettled"
            if not removed:
                for i in range(nb):
                    if active[i]:
                        active[i] = False
                        status[i] = "settled"
                break
            for i in removed:
                active[i] = False
            calm[:] = 0

    report.kinetic_energy_final = _kinetic_energy(vel, omg, inv_mass, inv_inertia, quat,
                                                  np.array([s == "settled" for s in status]))
    report.kinetic_energy_first_contact = ke_first or 0.0
    report.steps_simulated = step
    for i, e in enumerate(entries):
        if status[i] is None:
            status[i] = "off_plate" if _off_plate(i) else "unsettled"
        if status[i] == "settled":
            rot = quat_to_matrix(quat[i])
            origin = pos[i] - rot @ shapes[i].com
            report.settled.append((e.asset_id, RigidState(
                tuple(float(x) for x in origin), tuple(float(x) for x in quat[i]),
                tuple(float(x) for x in vel[i]), tuple(float(x) for x in omg[i]))))
        else:
            report.rejected.append((e.asset_id, status[i]))
    return report


def compose_dynamic_scene(library: AssetLibrary, plate: PlateSpec, params: SimParams, max_items: int,
                          seed: int, max_retries: int = 3, min_items: int = 3) -> Scene:
    """Sample, drop and settle items; regenerate with a derived seed when nothing settles."""
    if len(library) == 0:
        raise ConfigurationError("cannot compose a scene from an empty asset library")
    attempt_seed = seed
    for attempt in range(max_retries + 1):
        rng = make_rng(attempt_seed)
        items = sample_items(library, min(max_items, plate.segment_count), rng, min_items=min_items)
        plan = plan_drops(items, plate, params, rng)
        report = simulate(plan, plate, library, params)
        if report.settled:
            placed = tuple(
                PlacedItem(k + 1, asset_id, state.position, state.orientation)
                for k, (asset_id, state) in enumerate(sorted(report.settled, key=lambda s: items.index(s[0]))))
            rejected = tuple({"asset_id": a, "reason": r} for a, r in report.rejected)
            return Scene(plate=plate, items=placed, seed=attempt_seed, mode="dynamic", rejected=rejected)
        logger.info("scene seed %d: no item settled, retrying", attempt_seed)
        attempt_seed = derive_seed(seed, "retry", attempt + 1)
    raise GenerationError(f"no item settled after {max_retries + 1} attempts (seed {seed})")


def _support_gaps(pos, quat, shapes, active, plate: PlateSpec) -> dict[int, float]:
    world = {i: shapes[i].hull_local @ quat_to_matrix(quat[i]).T + pos[i]
             for i in range(len(shapes)) if active[i]}
    return _lowest_point_gaps(world, {i: shapes[i].faces for i in world}, plate)


def _lowest_point_gaps(world: dict, faces: dict, plate: PlateSpec) -> dict:
    gaps = {}
    for key, verts in world.items():
        lowest = verts[np.argmin(verts[:, 2])][None, :]
        best = float(distance_to_plate(lowest, plate)[0])
        for other, overts in world.items():
            if other != key and best > CONTACT_EPS_M:
                best = min(best, float(point_hull_distance(lowest, overts, faces[other])[0]))
        gaps[key] = best
    return gaps


def world_hull(asset: FoodAsset, item: PlacedItem) -> np.ndarray:
    rot = quat_to_matrix(item.orientation)
    return asset.collision_hull.vertices @ rot.T + np.asarray(item.position)


def support_gaps(scene: Scene, library: AssetLibrary) -> dict[int, float]:
    """Per instance: distance from the lowest hull point to the plate solid or
    to the nearest other item's hull (exact point-to-hull distances).
    Values at or below the contact tolerance are not refined further."""
    world = {it.instance_id: world_hull(library[it.asset_id], it) for it in scene.items}
    faces = {it.instance_id: library[it.asset_id].collision_hull.faces for it in scene.items}
    return _lowest_point_gaps(world, faces, scene.plate)


def max_interpenetration(scene: Scene, library: AssetLibrary) -> float:
    """Largest pairwise overlap depth among the scene's item hulls."""
    hulls = [world_hull(library[it.asset_id], it) for it in scene.items]
    worst = 0.0
    for i in range(len(hulls)):
        for j in range(i + 1, len(hulls)):
            lo_i, hi_i = hulls[i].min(0), hulls[i].max(0)
            lo_j, hi_j = hulls[j].min(0), hulls[j].max(0)
            if np.any(lo_i > hi_j) or np.any(lo_j > hi_i):
                continue
            worst = max(worst, penetration_depth(hulls[i], hulls[j]))
    return worst
