"""Synthetic meal-image dataset generator.

Food meshes are plated on a virtual plate either by rigid-body dropping
(dynamic plating) or by YAML rules (procedural plating), photographed from
a Fibonacci-hemisphere camera rig and written out with RGB, depth, semantic,
instance and amodal masks, boxes and nutrition totals.
"""

__version__ = "0.1.0"

from .assets import AssetLibrary, FoodAsset, NutritionFacts, builtin_primitive_library, load_asset  # noqa: E402
from .camera import CameraPose, RigConfig, build_rig, fibonacci_hemisphere, select_views  # noqa: E402
from .dynamics import SimParams, compose_dynamic_scene, plan_drops, simulate  # noqa: E402
from .errors import PlatesynthError  # noqa: E402
from .nutrition import SceneNutrition, aggregate, class_stats  # noqa: E402
from .procedural import PlatingRule, PlatingRuleSet, instantiate, parse_rules, serialize_rules  # noqa: E402
from .render import RenderBundle, render_view  # noqa: E402
from .scene import PlacedItem, PlateSpec, Scene, derive_seed, make_rng  # noqa: E402

__all__ = [
    "AssetLibrary", "CameraPose", "FoodAsset", "NutritionFacts", "PlacedItem", "PlateSpec", "PlatesynthError",
    "PlatingRule", "PlatingRuleSet", "RenderBundle", "RigConfig", "Scene", "SceneNutrition", "SimParams",
    "aggregate", "build_rig", "builtin_primitive_library", "class_stats", "compose_dynamic_scene", "derive_seed",
    "fibonacci_hemisphere", "instantiate", "load_asset", "make_rng", "parse_rules", "plan_drops", "render_view",
    "select_views", "serialize_rules", "simulate",
]
