import itertools
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from platesynth.errors import AssetLookupError, PlacementError, RuleError
from platesynth.procedural import (Jitter, instantiate, parse_rules, plan_placements, rules_from_dict,
                                   serialize_rules)
from platesynth.scene import make_rng
from strategies import rule_docs

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "procedural_rules.yaml"


def doc(*rules, **top):
    return {"rules": list(rules), **top}


def plan(d, library, seed=0):
    return plan_placements(rules_from_dict(d), library, make_rng(seed))


def test_ring_rule_parses():
    rs = parse_rules("rules:\n  - {kind: ring, item: apple, count: 4, radius_m: 0.08}\n")
    assert len(rs.rules) == 1
    r = rs.rules[0]
    assert (r.kind, r.count, r.params["radius_m"], r.params["center"]) == ("ring", 4, 0.08, (0.0, 0.0))


def test_ring_equal_spacing(library):
    r = 0.08
    ps = plan(doc({"kind": "ring", "item": "apple_00", "count": 4, "radius_m": r, "center": [0.01, -0.02]}),
              library)
    for k, p in enumerate(ps):
        dx, dy = p.position[0] - 0.01, p.position[1] + 0.02
        assert math.hypot(dx, dy) == pytest.approx(r, abs=1e-9)
        expected = math.radians(90 * k)
        diff = math.atan2(math.sin(math.atan2(dy, dx) - expected), math.cos(math.atan2(dy, dx) - expected))
        assert abs(diff) <= 1e-9


def test_ring_start_angle(library):
    ps = plan(doc({"kind": "ring", "item": "apple_00", "count": 3, "radius_m": 0.05, "start_angle": 0.5}),
              library)
    angles = [math.atan2(p.position[1], p.position[0]) for p in ps]
    assert angles[0] == pytest.approx(0.5, abs=1e-12)
    assert (angles[1] - angles[0]) % (2 * math.pi) == pytest.approx(2 * math.pi / 3, abs=1e-9)


def test_grid_pitch(library):
    ps = plan(doc({"kind": "grid", "item": "bread_02", "count": 6, "rows": 2, "cols": 3, "pitch_m": 0.04}),
              library)
    assert len(ps) == 6
    pts = [p.position[:2] for p in ps]
    for i, a in enumerate(pts):
        nearest = min(math.dist(a, b) for j, b in enumerate(pts) if j != i)
        assert nearest == pytest.approx(0.04, abs=1e-9)
    # origin is the grid centre
    assert np.mean(pts, axis=0) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_grid_count_above_cells_rejected():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "grid", "item": "x", "count": 7, "rows": 2, "cols": 3, "pitch_m": 0.04}))
    assert err.value.code == "range" and err.value.field == "count"


def test_stack_items_rest_on_each_other(library):
    ps = plan(doc({"kind": "stack", "item": "bread_03", "count": 3, "vertical_gap_m": 0.002}), library)
    lo, hi = library["bread_03"].aabb_object
    height = hi[2] - lo[2]
    z = [p.position[2] for p in ps]
    assert z[0] + lo[2] == pytest.approx(0.02, abs=1e-12)  # default plate top
    for a, b in itertools.pairwise(z):
        assert b - a == pytest.approx(height + 0.002, abs=1e-12)


def test_explicit_poses_pass_through(library):
    q = (math.cos(0.3), 0.0, 0.0, math.sin(0.3))
    poses = [{"position": [0.01, 0.02, 0.05], "orientation": list(q)}, {"position": [-0.03, 0.0, 0.04]}]
    ps = plan(doc({"kind": "explicit", "item": "chicken_06", "poses": poses}), library)
    assert ps[0].position == (0.01, 0.02, 0.05) and ps[0].orientation == q
    assert ps[1].position == (-0.03, 0.0, 0.04) and ps[1].orientation == (1.0, 0.0, 0.0, 0.0)


def test_explicit_count_mismatch():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "explicit", "item": "x", "count": 2, "poses": [{"position": [0, 0, 0]}]}))
    assert err.value.field == "count"


def test_non_unit_quaternion_rejected():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "explicit", "item": "x",
                             "poses": [{"position": [0, 0, 0], "orientation": [1, 1, 0, 0]}]}))
    assert err.value.code == "range" and "orientation" in err.value.field


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_jitter_within_bounds(library, seed):
    ps = plan(doc({"kind": "ring", "item": "apple", "count": 5, "radius_m": 0.06,
                   "jitter": {"pos_m": 0.004, "yaw_rad": 0.2}}), library, seed)
    for p in ps:
        shift = math.dist(p.position[:2], p.nominal_position[:2])
        assert shift <= 0.004 + 1e-12 and p.position[2] == p.nominal_position[2]
        assert abs(p.yaw_offset) <= 0.2
        # orientation is the nominal (identity) turned by yaw_offset about z
        w, x, y, z = p.orientation
        assert (x, y) == pytest.approx((0.0, 0.0), abs=1e-15)
        assert 2 * math.atan2(z, w) == pytest.approx(p.yaw_offset, abs=1e-12)


def test_class_selector_draws_members(library):
    ps = plan(doc({"kind": "grid", "item": "apple", "count": 20, "rows": 4, "cols": 5, "pitch_m": 0.01}),
              library, seed=3)
    assert {p.asset_id for p in ps} == {"apple_00", "apple_01"}


def test_instantiate_is_deterministic(library):
    rs = parse_rules(EXAMPLE.read_text())
    a = instantiate(rs, library, scene_seed=11)
    b = instantiate(rs, library, scene_seed=11)
    c = instantiate(rs, library, scene_seed=12)
    assert a == b and a != c
    assert a.mode == "procedural" and [it.instance_id for it in a.items] == list(range(1, rs.total_count + 1))


def test_example_file(library):
    rs = parse_rules(EXAMPLE.read_text())
    assert [r.kind for r in rs.rules] == ["ring", "grid", "stack", "explicit"]
    assert rs.seed == 7 and rs.total_count == 9
    assert parse_rules(serialize_rules(rs)) == rs
    assert len(instantiate(rs, library).items) == 9


def test_overlap_warns_but_keeps_poses(library, caplog):
    rs = rules_from_dict(doc({"kind": "stack", "item": "apple_00", "count": 1},
                             {"kind": "stack", "item": "apple_00", "count": 1}))
    scene = instantiate(rs, library)
    assert scene.items[0].position == scene.items[1].position
    assert "interpenetrating" in caplog.text


def test_off_plate_position_rejected(library):
    with pytest.raises(PlacementError, match="exceeds radius"):
        plan(doc({"kind": "ring", "item": "apple_00", "count": 2, "radius_m": 0.2}), library)
    # allowed once on_plate is switched off
    assert len(plan(doc({"kind": "ring", "item": "apple_00", "count": 2, "radius_m": 0.2, "on_plate": False}),
                    library)) == 2


def test_unknown_selector(library):
    with pytest.raises(AssetLookupError, match="pizza"):
        plan(doc({"kind": "stack", "item": "pizza", "count": 1}), library)


def test_unknown_kind_names_kind():
    with pytest.raises(RuleError) as err:
        parse_rules("rules:\n  - {kind: spiral, item: apple, count: 3}\n")
    assert err.value.code == "unknown_kind" and "spiral" in str(err.value)


def test_missing_field_names_index_and_field():
    text = "rules:\n  - {kind: ring, item: apple, count: 4, radius_m: 0.08}\n  - {kind: grid, item: apple, count: 2, rows: 1, pitch_m: 0.04}\n"
    with pytest.raises(RuleError) as err:
        parse_rules(text)
    assert (err.value.code, err.value.rule_index, err.value.field) == ("missing", 1, "cols")
    assert "rule 1" in str(err.value) and "cols" in str(err.value)


@pytest.mark.parametrize("field,value", [("radius_m", 0), ("radius_m", -0.1), ("count", 0)])
def test_non_positive_dimension_is_range_error(field, value):
    rule = {"kind": "ring", "item": "apple", "count": 4, "radius_m": 0.08, field: value}
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc(rule))
    assert err.value.code == "range" and err.value.field == field


def test_negative_jitter_rejected():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "stack", "item": "a", "count": 1, "jitter": {"pos_m": -1e-3}}))
    assert err.value.field == "jitter.pos_m"


def test_unknown_key_is_error():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "ring", "item": "apple", "count": 4, "radius_m": 0.08, "radius": 0.1}))
    assert err.value.code == "unknown_key" and err.value.field == "radius"
    with pytest.raises(RuleError):
        rules_from_dict(doc({"kind": "stack", "item": "a", "count": 1}, extra=True))


def test_yaml_syntax_error_has_position():
    text = "rules:\n  - kind: ring\n    item: [apple\n    count: 4\n"
    with pytest.raises(RuleError) as err:
        parse_rules(text)
    assert err.value.code == "yaml" and err.value.line is not None and err.value.column is not None
    assert f"line {err.value.line}" in str(err.value)


def test_bad_plate_section():
    with pytest.raises(RuleError) as err:
        rules_from_dict(doc({"kind": "stack", "item": "a", "count": 1}, plate={"radius_m": -1}))
    assert err.value.field == "plate.radius_m"


# ---- generated rule sets

@settings(max_examples=200)
@given(rule_docs)
def test_round_trip(d):
    rs = parse_rules(yaml.safe_dump(d))
    again = parse_rules(serialize_rules(rs))
    assert again == rs
    assert serialize_rules(again) == serialize_rules(rs)


def _mutate(d, data):
    """Apply one random edit somewhere in a valid document."""
    node = d
    path = []
    while isinstance(node, (dict, list)) and node and data.draw(st.booleans()):
        key = data.draw(st.sampled_from(sorted(node) if isinstance(node, dict) else list(range(len(node)))))
        path.append((node, key))
        node = node[key]
    if not path:
        return data.draw(st.sampled_from([None, 3, "x", [], [1, 2]]))
    parent, key = path[-1]
    action = data.draw(st.sampled_from(["delete", "replace", "add"]))
    if action == "delete":
        del parent[key]
    elif action == "replace":
        parent[key] = data.draw(st.none() | st.booleans() | st.integers(-5, 5) | st.floats() | st.text(max_size=5)
                                | st.lists(st.integers(), max_size=3))
    elif isinstance(parent, dict):
        parent[data.draw(st.text(min_size=1, max_size=6))] = 1
    else:
        parent.append({"kind": data.draw(st.text(max_size=6))})
    return d


@settings(max_examples=300)
@given(rule_docs, st.data())
def test_mutated_documents_never_crash(d, data):
    mutated = _mutate(d, data)
    try:
        text = yaml.safe_dump(mutated)
    except yaml.YAMLError:
        return
    try:
        parse_rules(text)
    except RuleError as exc:
        assert exc.to_dict()["error"] == "rule_error"


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_arbitrary_bytes_never_crash(blob):
    try:
        parse_rules(blob)
    except RuleError:
        pass


def test_jitter_defaults():
    assert Jitter() == Jitter(0.0, 0.0)
