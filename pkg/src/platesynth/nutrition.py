"""Per-scene nutrition totals and class-level statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assets import NUTRITION_FIELDS, AssetLibrary, NutritionFacts
from .scene import Scene

# Reference lines for plots (typical adult daily values); context only.
DAILY_REFERENCE = {"calories_kcal": 2000.0, "carbs_g": 275.0, "fat_g": 78.0, "protein_g": 50.0}


@dataclass(frozen=True)
class SceneNutrition:
    totals: NutritionFacts
    ingredients: tuple[dict, ...] = ()  # {"asset_id", "semantic_class"} per placed item

    @property
    def ingredient_count(self) -> int:
        return len(self.ingredients)

    def to_dict(self) -> dict:
        return {"totals": self.totals.to_dict(), "ingredient_count": self.ingredient_count,
                "ingredients": [dict(i) for i in self.ingredients]}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneNutrition":
        return cls(NutritionFacts.from_dict(d["totals"]), tuple(dict(i) for i in d["ingredients"]))


def sum_facts(facts: Iterable[NutritionFacts]) -> NutritionFacts:
    """Componentwise sum, correctly rounded (so item order never matters)."""
    facts = list(facts)
    return NutritionFacts(**{k: math.fsum(getattr(f, k) for f in facts) for k in NUTRITION_FIELDS})


def aggregate_items(asset_ids: Sequence[str], library: AssetLibrary) -> SceneNutrition:
    assets = [library[a] for a in asset_ids]
    return SceneNutrition(sum_facts(a.nutrition for a in assets),
                          tuple({"asset_id": a.asset_id, "semantic_class": a.semantic_class} for a in assets))


def aggregate(scene: Scene, library: AssetLibrary) -> SceneNutrition:
    return aggregate_items([it.asset_id for it in scene.items], library)


@dataclass(frozen=True)
class ClassStat:
    scene_frequency: int
    instance_count: int
    mean_mass_g: float

    def to_dict(self) -> dict:
        return {"scene_frequency": self.scene_frequency, "instance_count": self.instance_count,
                "mean_mass_g": self.mean_mass_g}


@dataclass(frozen=True)
class ClassStats:
    per_class: dict[str, ClassStat] = field(default_factory=dict)
    scene_count: int = 0

    @property
    def total_instances(self) -> int:
        return sum(s.instance_count for s in self.per_class.values())

    def to_dict(self) -> dict:
        return {"scene_count": self.scene_count,
                "classes": {k: v.to_dict() for k, v in sorted(self.per_class.items())}}


def class_stats(scenes: Iterable[Scene], library: AssetLibrary) -> ClassStats:
    def entries(scene: Scene):
        for it in scene.items:
            asset = library[it.asset_id]
            yield asset.semantic_class, asset.nutrition.mass_g

    return class_stats_from_entries(list(entries(s)) for s in scenes)


def class_stats_from_entries(scene_entries: Iterable[Sequence[tuple[str, float]]]) -> ClassStats:
    """Class statistics over per-scene lists of ``(semantic_class, mass_g)``."""
    freq: Counter[str] = Counter()
    masses: dict[str, list[float]] = {}
    n_scenes = 0
    for entries in scene_entries:
        n_scenes += 1
        seen = set()
        for cls, mass_g in entries:
            masses.setdefault(cls, []).append(float(mass_g))
            seen.add(cls)
        freq.update(seen)
    per_class = {c: ClassStat(freq[c], len(m), math.fsum(m) / len(m)) for c, m in masses.items()}
    return ClassStats(per_class, n_scenes)


def histogram(values: Sequence[float], bins: int = 20, integer: bool = False) -> dict:
    """Equal-width histogram; ``integer`` gives one unit-wide bucket per value."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        return {"edges": [], "counts": []}
    if integer:
        lo, hi = int(vals.min()), int(vals.max())
        edges = np.arange(lo, hi + 2) - 0.5
    else:
        lo, hi = float(vals.min()), float(vals.max())
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(vals, bins=edges)
    return {"edges": edges.tolist(), "counts": counts.tolist()}
