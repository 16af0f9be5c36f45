"""Rule-driven plating: YAML rules fix each item to a computed pose, no physics.

Rule kinds:

* ``explicit``: full poses listed verbatim.
* ``ring``: ``count`` items evenly spaced on a circle.
* ``grid``: ``rows x cols`` lattice centred on ``origin``, filled row-major.
* ``stack``: items piled vertically over ``base``.

Ring, grid and stack items rest on the plate top (or on the item below, for
stacks). All coordinates are world metres; angles are radians.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .assets import AssetLibrary
from .dynamics import max_interpenetration
from .errors import AssetLookupError, ConfigurationError, PlacementError, RuleError
from .geometry import quat_from_yaw, quat_multiply
from .scene import PlacedItem, PlateSpec, Scene, make_rng

logger = logging.getLogger(__name__)

KINDS = ("explicit", "ring", "grid", "stack")
TOP_LEVEL_KEYS = ("plate", "seed", "rules")
COMMON_KEYS = ("kind", "item", "count", "jitter", "on_plate")
KIND_KEYS = {
    "explicit": ("poses",),
    "ring": ("center", "radius_m", "start_angle", "yaw"),
    "grid": ("origin", "rows", "cols", "pitch_m", "yaw"),
    "stack": ("base", "vertical_gap_m", "yaw"),
}
DEFAULT_STACK_GAP_M = 0.001
UNIT_QUAT_TOL = 1e-6
_MISSING = object()


@dataclass(frozen=True)
class Jitter:
    """Uniform perturbation bounds: xy offset within a disc of ``pos_m`` and
    a yaw offset in ``[-yaw_rad, yaw_rad]``."""

    pos_m: float = 0.0
    yaw_rad: float = 0.0

    def to_dict(self) -> dict:
        return {"pos_m": self.pos_m, "yaw_rad": self.yaw_rad}


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {"position": list(self.position), "orientation": list(self.orientation)}


@dataclass(frozen=True)
class PlatingRule:
    kind: str
    item: str  # asset id, or a semantic class
    count: int
    params: dict[str, Any] = field(default_factory=dict)  # kind-specific, defaults filled in
    jitter: Jitter = field(default_factory=Jitter)
    on_plate: bool = True

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "item": self.item, "count": self.count}
        for key, value in self.params.items():
            if key == "poses":
                out[key] = [p.to_dict() for p in value]
            elif isinstance(value, tuple):
                out[key] = list(value)
            else:
                out[key] = value
        out["jitter"] = self.jitter.to_dict()
        out["on_plate"] = self.on_plate
        return out


@dataclass(frozen=True)
class PlatingRuleSet:
    plate: PlateSpec
    rules: tuple[PlatingRule, ...]
    seed: int | None = None

    @property
    def total_count(self) -> int:
        return sum(r.count for r in self.rules)

    def to_dict(self) -> dict:
        return {"plate": self.plate.to_dict(), "seed": self.seed, "rules": [r.to_dict() for r in self.rules]}


@dataclass(frozen=True)
class Placement:
    """One instantiated item with its rule-nominal pose kept for auditing."""

    rule_index: int
    asset_id: str
    nominal_position: tuple[float, float, float]
    nominal_orientation: tuple[float, float, float, float]
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]
    yaw_offset: float


# ---------------------------------------------------------------- parsing

def parse_rules(text: str | bytes) -> PlatingRuleSet:
    """Parse and fully validate a rule document.

    Every failure is a :class:`RuleError`; nothing else escapes.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise RuleError(f"YAML syntax error: {exc.problem or exc}", line=line, column=column, code="yaml") from None
    except (yaml.YAMLError, UnicodeDecodeError, ValueError, TypeError, RecursionError) as exc:
        raise RuleError(f"unreadable YAML: {exc.__class__.__name__}: {exc}", code="yaml") from None
    return rules_from_dict(doc)


def rules_from_dict(doc: Any) -> PlatingRuleSet:
    if not isinstance(doc, dict):
        raise RuleError(f"document must be a mapping, got {_type_name(doc)}", code="type")
    _reject_unknown(doc, TOP_LEVEL_KEYS, None)
    plate = _parse_plate(doc.get("plate"))
    seed = doc.get("seed")
    if seed is not None:
        if not _is_int(seed):
            raise RuleError(f"expected an integer, got {_type_name(seed)}", field="seed", code="type")
        if seed < 0:
            raise RuleError("must be >= 0", field="seed", code="range")
        seed = int(seed)
    rules_raw = doc.get("rules", _MISSING)
    if rules_raw is _MISSING:
        raise RuleError("missing required field", field="rules", code="missing")
    if not isinstance(rules_raw, list):
        raise RuleError(f"expected a list, got {_type_name(rules_raw)}", field="rules", code="type")
    if not rules_raw:
        raise RuleError("at least one rule is required", field="rules", code="range")
    rules = tuple(_parse_rule(i, raw, plate) for i, raw in enumerate(rules_raw))
    return PlatingRuleSet(plate=plate, rules=rules, seed=seed)


def serialize_rules(rules: PlatingRuleSet) -> str:
    return yaml.safe_dump(rules.to_dict(), sort_keys=False)


def _parse_plate(raw: Any) -> PlateSpec:
    if raw is None:
        return PlateSpec()
    if not isinstance(raw, dict):
        raise RuleError(f"expected a mapping, got {_type_name(raw)}", field="plate", code="type")
    _reject_unknown(raw, ("center", "radius_m", "rim_height_m", "top_z_m", "segment_count"), None, prefix="plate.")
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        name = f"plate.{key}"
        if key == "center":
            kwargs[key] = _vector(value, 3, None, name)
        elif key == "segment_count":
            kwargs[key] = _positive_int(value, None, name)
        elif key == "rim_height_m":
            kwargs[key] = _number(value, None, name, minimum=0.0)
        else:
            kwargs[key] = _positive(value, None, name)
    try:
        return PlateSpec(**kwargs)
    except ConfigurationError as exc:
        raise RuleError(str(exc), field="plate", code="range") from None


def _parse_rule(index: int, raw: Any, plate: PlateSpec) -> PlatingRule:
    if not isinstance(raw, dict):
        raise RuleError(f"expected a mapping, got {_type_name(raw)}", rule_index=index, code="type")
    kind = _required(raw, "kind", index)
    if not isinstance(kind, str) or kind not in KINDS:
        raise RuleError(f"unknown rule kind {kind!r} (expected one of {', '.join(KINDS)})",
                        rule_index=index, field="kind", code="unknown_kind")
    _reject_unknown(raw, COMMON_KEYS + KIND_KEYS[kind], index)
    item = _required(raw, "item", index)
    if not isinstance(item, str) or not item:
        raise RuleError("expected a non-empty string", rule_index=index, field="item", code="type")

    on_plate = raw.get("on_plate", True)
    if not isinstance(on_plate, bool):
        raise RuleError("expected true or false", rule_index=index, field="on_plate", code="type")
    jitter = _parse_jitter(raw.get("jitter"), index)

    centre_xy = (plate.center[0], plate.center[1])
    params: dict[str, Any] = {}
    if kind == "explicit":
        poses_raw = _required(raw, "poses", index)
        if not isinstance(poses_raw, list) or not poses_raw:
            raise RuleError("expected a non-empty list of poses", rule_index=index, field="poses", code="type")
        params["poses"] = tuple(_parse_pose(p, index, k) for k, p in enumerate(poses_raw))
        count = raw.get("count", len(params["poses"]))
        count = _positive_int(count, index, "count")
        if count != len(params["poses"]):
            raise RuleError(f"count {count} does not match {len(params['poses'])} poses",
                            rule_index=index, field="count", code="range")
    else:
        count = _positive_int(_required(raw, "count", index), index, "count")
        if kind == "ring":
            params["center"] = _vector(raw.get("center", centre_xy), 2, index, "center")
            params["radius_m"] = _positive(_required(raw, "radius_m", index), index, "radius_m")
            params["start_angle"] = _number(raw.get("start_angle", 0.0), index, "start_angle")
        elif kind == "grid":
            params["origin"] = _vector(raw.get("origin", centre_xy), 2, index, "origin")
            params["rows"] = _positive_int(_required(raw, "rows", index), index, "rows")
            params["cols"] = _positive_int(_required(raw, "cols", index), index, "cols")
            params["pitch_m"] = _positive(_required(raw, "pitch_m", index), index, "pitch_m")
            if count > params["rows"] * params["cols"]:
                raise RuleError(f"count {count} exceeds {params['rows']}x{params['cols']} grid cells",
                                rule_index=index, field="count", code="range")
        else:
            params["base"] = _vector(raw.get("base", centre_xy), 2, index, "base")
            params["vertical_gap_m"] = _positive(raw.get("vertical_gap_m", DEFAULT_STACK_GAP_M), index,
                                                 "vertical_gap_m")
        params["yaw"] = _number(raw.get("yaw", 0.0), index, "yaw")
    return PlatingRule(kind=kind, item=item, count=count, params=params, jitter=jitter, on_plate=on_plate)


def _parse_jitter(raw: Any, index: int) -> Jitter:
    if raw is None:
        return Jitter()
    if not isinstance(raw, dict):
        raise RuleError(f"expected a mapping, got {_type_name(raw)}", rule_index=index, field="jitter", code="type")
    _reject_unknown(raw, ("pos_m", "yaw_rad"), index, prefix="jitter.")
    return Jitter(pos_m=_number(raw.get("pos_m", 0.0), index, "jitter.pos_m", minimum=0.0),
                  yaw_rad=_number(raw.get("yaw_rad", 0.0), index, "jitter.yaw_rad", minimum=0.0))


def _parse_pose(raw: Any, index: int, k: int) -> Pose:
    name = f"poses[{k}]"
    if not isinstance(raw, dict):
        raise RuleError(f"expected a mapping, got {_type_name(raw)}", rule_index=index, field=name, code="type")
    _reject_unknown(raw, ("position", "orientation"), index, prefix=f"{name}.")
    if "position" not in raw:
        raise RuleError("missing required field", rule_index=index, field=f"{name}.position", code="missing")
    position = _vector(raw["position"], 3, index, f"{name}.position")
    orientation = _vector(raw.get("orientation", (1.0, 0.0, 0.0, 0.0)), 4, index, f"{name}.orientation")
    norm = math.sqrt(sum(c * c for c in orientation))
    if abs(norm - 1.0) > UNIT_QUAT_TOL:
        raise RuleError(f"quaternion norm {norm:.9g} is not 1", rule_index=index,
                        field=f"{name}.orientation", code="range")
    return Pose(position, orientation)


# small typed validators; every one raises RuleError on bad input

def _type_name(value: Any) -> str:
    return "null" if value is None else type(value).__name__


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _required(raw: dict, key: str, index: int | None) -> Any:
    if key not in raw:
        raise RuleError("missing required field", rule_index=index, field=key, code="missing")
    return raw[key]


def _reject_unknown(raw: dict, allowed: tuple[str, ...], index: int | None, prefix: str = "") -> None:
    unknown = [k for k in raw if k not in allowed]
    if unknown:
        names = ", ".join(sorted(repr(k) for k in unknown))
        raise RuleError(f"unknown key(s) {names}", rule_index=index, field=f"{prefix}{unknown[0]}",
                        code="unknown_key")


def _number(value: Any, index: int | None, name: str, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RuleError(f"expected a number, got {_type_name(value)}", rule_index=index, field=name, code="type")
    try:
        out = float(value)
    except OverflowError:
        out = math.inf
    if not math.isfinite(out):
        raise RuleError("must be finite", rule_index=index, field=name, code="range")
    if minimum is not None and out < minimum:
        raise RuleError(f"must be >= {minimum}, got {out}", rule_index=index, field=name, code="range")
    return out


def _positive(value: Any, index: int | None, name: str) -> float:
    out = _number(value, index, name)
    if out <= 0.0:
        raise RuleError(f"must be > 0, got {out}", rule_index=index, field=name, code="range")
    return out


def _positive_int(value: Any, index: int | None, name: str) -> int:
    if not _is_int(value):
        raise RuleError(f"expected an integer, got {_type_name(value)}", rule_index=index, field=name, code="type")
    if value < 1:
        raise RuleError(f"must be >= 1, got {value}", rule_index=index, field=name, code="range")
    return int(value)


def _vector(value: Any, n: int, index: int | None, name: str) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise RuleError(f"expected a list of {n} numbers", rule_index=index, field=name, code="type")
    return tuple(_number(v, index, name) for v in value)


# ---------------------------------------------------------- instantiation

def _resolve(selector: str, library: AssetLibrary) -> tuple[str, ...]:
    if selector in library:
        return (selector,)
    members = library.class_index.get(selector)
    if not members:
        raise AssetLookupError(f"item selector {selector!r} matches no asset id or semantic class")
    return members


def _nominal_xy(rule: PlatingRule) -> list[tuple[float, float]]:
    p = rule.params
    if rule.kind == "ring":
        cx, cy = p["center"]
        step = 2.0 * math.pi / rule.count
        return [(cx + p["radius_m"] * math.cos(p["start_angle"] + k * step),
                 cy + p["radius_m"] * math.sin(p["start_angle"] + k * step)) for k in range(rule.count)]
    if rule.kind == "grid":
        ox, oy = p["origin"]
        pitch = p["pitch_m"]
        cells = [(r, c) for r in range(p["rows"]) for c in range(p["cols"])][: rule.count]
        return [(ox + (c - (p["cols"] - 1) / 2.0) * pitch, oy + (r - (p["rows"] - 1) / 2.0) * pitch)
                for r, c in cells]
    if rule.kind == "stack":
        return [tuple(p["base"])] * rule.count
    return [pose.position[:2] for pose in p["poses"]]


def plan_placements(rules: PlatingRuleSet, library: AssetLibrary, rng: np.random.Generator) -> list[Placement]:
    """Resolve selectors, compute nominal poses and apply jitter.

    Random draws per item, in rule order: asset choice (class selectors only),
    then radius, angle and yaw for the jitter.
    """
    plate = rules.plate
    out: list[Placement] = []
    for index, rule in enumerate(rules.rules):
        candidates = _resolve(rule.item, library)
        xy = _nominal_xy(rule)
        stack_top = plate.top_z_m
        for k in range(rule.count):
            asset_id = candidates[int(rng.integers(len(candidates)))] if len(candidates) > 1 else candidates[0]
            asset = library[asset_id]
            lo, hi = asset.aabb_object
            if rule.kind == "explicit":
                pose = rule.params["poses"][k]
                nominal_pos, nominal_q = pose.position, pose.orientation
            else:
                if rule.kind == "stack":
                    z = stack_top - lo[2] + (rule.params["vertical_gap_m"] if k else 0.0)
                    stack_top = z + hi[2]
                else:
                    z = plate.top_z_m - lo[2]  # yaw keeps the lowest point fixed
                nominal_pos = (float(xy[k][0]), float(xy[k][1]), float(z))
                nominal_q = tuple(float(c) for c in quat_from_yaw(rule.params["yaw"]))

            radius = rule.jitter.pos_m * math.sqrt(rng.random())
            theta = 2.0 * math.pi * rng.random()
            yaw = rule.jitter.yaw_rad * (2.0 * rng.random() - 1.0)
            if rule.jitter.pos_m > 0.0 or rule.jitter.yaw_rad > 0.0:
                position = (nominal_pos[0] + radius * math.cos(theta), nominal_pos[1] + radius * math.sin(theta),
                            nominal_pos[2])
                q = quat_multiply(quat_from_yaw(yaw), np.asarray(nominal_q))
                orientation = tuple(float(c) for c in q / np.linalg.norm(q))
            else:
                position, orientation, yaw = nominal_pos, nominal_q, 0.0

            if rule.on_plate:
                dist = math.hypot(position[0] - plate.center[0], position[1] - plate.center[1])
                if dist > plate.radius_m:
                    raise PlacementError(
                        f"rule {index} ({rule.kind}) item {k}: position {dist:.4f} m from the plate centre "
                        f"exceeds radius {plate.radius_m} m")
            out.append(Placement(index, asset_id, nominal_pos, nominal_q, position, orientation, yaw))
    return out


def instantiate(rules: PlatingRuleSet, library: AssetLibrary, rng: np.random.Generator | None = None,
                scene_seed: int | None = None, check_overlap: bool = True) -> Scene:
    """Build a procedural scene. Without ``rng`` the rule set's own seed (or 0)
    drives the jitter. Overlapping items are logged, never corrected."""
    seed = scene_seed if scene_seed is not None else (rules.seed or 0)
    if rng is None:
        rng = make_rng(seed)
    placements = plan_placements(rules, library, rng)
    items = tuple(PlacedItem(k + 1, p.asset_id, p.position, p.orientation) for k, p in enumerate(placements))
    scene = Scene(plate=rules.plate, items=items, seed=seed, mode="procedural")
    if check_overlap and len(items) > 1:
        depth = max_interpenetration(scene, library)
        if depth > 0.0:
            logger.warning("procedural scene has interpenetrating items (max depth %.4f m); keeping poses as "
                           "authored", depth)
    return scene
