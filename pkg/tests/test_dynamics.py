import math

import numpy as np
import pytest

from platesynth.assets import AssetLibrary, NutritionFacts, make_primitive_asset, sample_items
from platesynth.dynamics import (CONTACT_EPS_M, DropEntry, DropPlan, SimParams, compose_dynamic_scene,
                                 max_interpenetration, plan_drops, simulate, support_gaps)
from platesynth.errors import ConfigurationError, GenerationError, PlanningError, SimulationDivergenceError
from platesynth.scene import PlateSpec, derive_seed, make_rng

PLATE = PlateSpec()
PARAMS = SimParams()
IDENTITY = (1.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def sphere_lib():
    return AssetLibrary([make_primitive_asset("sphere", 0.03, "ball", NutritionFacts(50, 10, 1, 1, 1), seed=0,
                                              asset_id="ball")])


def test_seven_items_get_distinct_segments(library):
    ids = library.asset_ids[:7]
    plan = plan_drops(ids, PLATE, PARAMS, make_rng(1))
    segs = [e.segment_index for e in plan.entries]
    assert len(set(segs)) == 7 and all(0 <= s < 8 for s in segs)


def test_drop_points_lie_in_their_segment(library):
    width = 2 * math.pi / PLATE.segment_count
    for seed in range(50):
        plan = plan_drops(library.asset_ids[:8], PLATE, PARAMS, make_rng(seed))
        for e in plan.entries:
            x, y = e.drop_point
            r = math.hypot(x, y)
            ang = math.atan2(y, x) % (2 * math.pi)
            # recomputed membership with a margin from the segment inset
            assert int(ang // width) == e.segment_index
            frac = ang / width - e.segment_index
            assert PARAMS.segment_inset_frac - 1e-12 <= frac <= 1 - PARAMS.segment_inset_frac + 1e-12
            lo, hi = PARAMS.drop_radius_frac
            assert lo * PLATE.radius_m - 1e-12 <= r <= hi * PLATE.radius_m + 1e-12
            assert PARAMS.drop_height_range_m[0] <= e.drop_height_m <= PARAMS.drop_height_range_m[1]
            assert abs(np.linalg.norm(e.initial_orientation) - 1) < 1e-12


def test_adjacent_segments_are_angularly_separated(library):
    width = 2 * math.pi / 8
    min_gap = 2 * PARAMS.segment_inset_frac * width
    for seed in range(100):
        plan = plan_drops(library.asset_ids[:8], PLATE, PARAMS, make_rng(seed))
        by_seg = {e.segment_index: math.atan2(e.drop_point[1], e.drop_point[0]) % (2 * math.pi)
                  for e in plan.entries}
        for k in range(8):
            a, b = by_seg[k], by_seg[(k + 1) % 8]
            gap = (b - a) % (2 * math.pi)
            assert gap >= min_gap - 1e-12


def test_single_item_drop_point_on_plate(library):
    e = plan_drops([library.asset_ids[0]], PLATE, PARAMS, make_rng(0)).entries[0]
    assert math.hypot(*e.drop_point) <= PLATE.radius_m


def test_too_many_items_is_a_planning_error(library):
    with pytest.raises(PlanningError):
        plan_drops(library.asset_ids + ["x"], PLATE, PARAMS, make_rng(0))


def test_plan_is_deterministic(library):
    assert plan_drops(library.asset_ids[:5], PLATE, PARAMS, make_rng(9)) == \
        plan_drops(library.asset_ids[:5], PLATE, PARAMS, make_rng(9))


def test_sphere_rests_on_plate(sphere_lib):
    plan = DropPlan((DropEntry("ball", 0, (0.0, 0.0), 0.1, IDENTITY),))
    report = simulate(plan, PLATE, sphere_lib, PARAMS)
    assert report.settled_ids == ["ball"] and not report.rejected
    state = report.settled[0][1]
    assert state.position[2] == pytest.approx(0.05, abs=1e-3)  # top_z 0.02 + r 0.03
    assert np.linalg.norm(state.linear_velocity) < PARAMS.settle_speed_eps
    assert report.kinetic_energy_final < report.kinetic_energy_first_contact


def test_drop_outside_plate_is_rejected_off_plate(sphere_lib):
    plan = DropPlan((DropEntry("ball", 0, (0.3, 0.0), 0.1, IDENTITY),))
    report = simulate(plan, PLATE, sphere_lib, PARAMS)
    assert report.rejected == [("ball", "off_plate")] and not report.settled


def test_empty_plan(sphere_lib):
    report = simulate(DropPlan(()), PLATE, sphere_lib, PARAMS)
    assert report.settled == [] and report.rejected == []


def test_simulation_is_deterministic(library):
    plan = plan_drops(library.asset_ids[:6], PLATE, PARAMS, make_rng(4))
    a = simulate(plan, PLATE, library, PARAMS)
    b = simulate(plan, PLATE, library, PARAMS)
    assert a == b


def test_divergence_names_the_step(sphere_lib):
    params = SimParams(gravity=(0.0, 0.0, -1e300))
    plan = DropPlan((DropEntry("ball", 0, (0.0, 0.0), 0.1, IDENTITY),))
    with pytest.raises(SimulationDivergenceError) as info:
        simulate(plan, PLATE, sphere_lib, params)
    assert info.value.step >= 1 and f"step {info.value.step}" in str(info.value)


@pytest.mark.parametrize("kwargs", [{"timestep_s": 0}, {"max_sim_s": 0.1, "settle_hold_s": 0.5},
                                    {"settle_hold_s": 0}, {"gravity": (0, 0, float("nan"))}])
def test_sim_params_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SimParams(**kwargs)


def test_sim_params_round_trip():
    p = SimParams(friction_coeff=0.7)
    assert SimParams.from_dict(p.to_dict()) == p
    with pytest.raises(ConfigurationError):
        SimParams.from_dict({"frction": 1})


def test_one_sphere_library_gives_one_item(sphere_lib):
    scene = compose_dynamic_scene(sphere_lib, PLATE, PARAMS, max_items=7, seed=3)
    assert len(scene.items) == 1 and scene.items[0].asset_id == "ball"


def test_retry_budget_exhaustion(sphere_lib):
    # the hold time cannot elapse before the simulation cap: nothing ever settles
    params = SimParams(max_sim_s=0.5, settle_hold_s=0.5)
    with pytest.raises(GenerationError):
        compose_dynamic_scene(sphere_lib, PLATE, params, max_items=1, seed=0, max_retries=1)


def test_small_batch_invariants(library):
    for s in range(8):
        seed = derive_seed(11, s)
        rng = make_rng(seed)
        items = sample_items(library, 7, rng)
        plan = plan_drops(items, PLATE, PARAMS, rng)
        report = simulate(plan, PLATE, library, PARAMS)
        ids = report.settled_ids + report.rejected_ids
        assert sorted(ids) == sorted(items) and len(ids) == len(set(ids))  # partition
        assert {r for _, r in report.rejected} <= {"off_plate", "unsettled"}
        for _, state in report.settled:
            assert abs(np.linalg.norm(state.orientation) - 1.0) < 1e-6
        scene = compose_dynamic_scene(library, PLATE, PARAMS, 7, seed)
        assert 1 <= len(scene.items) <= 7
        assert all(g <= CONTACT_EPS_M for g in support_gaps(scene, library).values())
        assert max_interpenetration(scene, library) <= 2e-3
