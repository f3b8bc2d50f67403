"""Evaluation rubric catalog: dimensions, categories, meta-categories, applicability, normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .tasks import OBJECTIVES, REASONS, TaskCell

CATEGORIES: tuple[str, ...] = (
    "adaptive dialogue",
    "alternative treatment options",
    "clinical reasoning",
    "communication",
    "contextual awareness",
    "differential diagnosis",
    "ethical practice",
    "final diagnosis",
    "first-line treatment recommendation",
    "interaction efficiency",
    "lifestyle influences",
    "lifestyle recommendation",
    "lifestyle tracking",
    "medical knowledge",
    "medication management",
    "medication safety",
    "medication selection",
    "medication-related communication",
    "model reliability",
    "non-pharmacologic advice",
    "operational competence",
    "patient care",
    "real-world impact",
    "review of symptoms",
    "screening eligibility",
    "symptom interpretation",
    "test interpretation",
    "test selection",
    "treatment contraindications",
)

META_CATEGORIES: dict[str, tuple[str, ...]] = {
    "Core Medical Competence": (
        "medical knowledge",
        "clinical reasoning",
        "review of symptoms",
        "symptom interpretation",
        "differential diagnosis",
        "final diagnosis",
    ),
    "Therapeutic Management": (
        "first-line treatment recommendation",
        "alternative treatment options",
        "treatment contraindications",
        "non-pharmacologic advice",
        "medication selection",
        "medication management",
    ),
    "Preventive Care & Screening": (
        "lifestyle recommendation",
        "lifestyle influences",
        "lifestyle tracking",
        "screening eligibility",
        "test selection",
        "test interpretation",
    ),
    "Communication Skills": (
        "communication",
        "adaptive dialogue",
        "interaction efficiency",
        "medication-related communication",
    ),
    "Patient Safety & Care": ("patient care", "ethical practice", "medication safety"),
    "Contextual & System Integration": ("contextual awareness", "real-world impact"),
    "Technical Reliability": ("model reliability", "operational competence"),
}
CATEGORY_TO_META: dict[str, str] = {c: meta for meta, cats in META_CATEGORIES.items() for c in cats}

FULL_DIMENSION_COUNT = 105
SCORE_LEVELS = (1, 2, 3, 4)
SCOPES = ("global", "subtask_specific")


class CatalogError(ValueError):
    pass


class ScoreError(ValueError):
    pass


def normalize_score(raw: int) -> float:
    """Map a 1-4 rubric score linearly onto [0, 1]."""
    if isinstance(raw, bool) or raw not in SCORE_LEVELS:
        raise ScoreError(f"raw score must be one of {SCORE_LEVELS}, got {raw!r}")
    return (raw - 1) / 3


@dataclass(frozen=True)
class Applicability:
    """Allow-lists over the task axes; an empty list allows every value on that axis."""

    reasons: tuple[str, ...] = ()
    objectives: tuple[str, ...] = ()

    def accepts(self, cell: TaskCell) -> bool:
        return (not self.reasons or cell.encounter_reason in self.reasons) and (
            not self.objectives or cell.encounter_objective in self.objectives
        )

    def to_dict(self) -> dict:
        return {"reasons": list(self.reasons), "objectives": list(self.objectives)}


@dataclass(frozen=True)
class DimensionSpec:
    dimension_id: str
    name: str
    category: str
    description: str
    anchors: Mapping[int, str]
    scope: str = "global"
    applies_to: Applicability | None = None

    def applies(self, cell: TaskCell) -> bool:
        return self.scope == "global" or self.applies_to.accepts(cell)

    @property
    def meta_category(self) -> str:
        return CATEGORY_TO_META[self.category]


@dataclass(frozen=True)
class RubricCatalog:
    dimensions: tuple[DimensionSpec, ...]
    categories: tuple[str, ...]
    meta_map: Mapping[str, str]
    category_descriptions: Mapping[str, str]
    profile: str = "full"

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {d.dimension_id: d for d in self.dimensions})

    def dimension(self, dimension_id: str) -> DimensionSpec:
        try:
            return self._by_id[dimension_id]
        except KeyError:
            raise CatalogError(f"unknown dimension_id {dimension_id!r}") from None

    def __contains__(self, dimension_id: str) -> bool:
        return dimension_id in self._by_id

    @property
    def meta_categories(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.meta_map[c] for c in self.categories))

    def by_category(self, category: str) -> list[DimensionSpec]:
        return sorted((d for d in self.dimensions if d.category == category), key=lambda d: d.dimension_id)


def applicable_dimensions(catalog: RubricCatalog, cell: TaskCell) -> list[DimensionSpec]:
    return sorted((d for d in catalog.dimensions if d.applies(cell)), key=lambda d: d.dimension_id)


def _parse_dimension(raw: Mapping, idx: int) -> DimensionSpec:
    where = f"dimensions[{idx}]"
    for key in ("dimension_id", "name", "category", "description", "anchors"):
        if key not in raw:
            raise CatalogError(f"{where}: missing {key}")
    did = raw["dimension_id"]
    where = f"dimension {did!r}"
    if raw["category"] not in CATEGORIES:
        raise CatalogError(f"{where}: unknown category {raw['category']!r}")
    anchors_raw = raw["anchors"]
    if not isinstance(anchors_raw, Mapping):
        raise CatalogError(f"{where}: anchors must be an object keyed 1-4")
    try:
        anchors = {int(k): v for k, v in anchors_raw.items()}
    except ValueError:
        raise CatalogError(f"{where}: anchor keys must be integers 1-4") from None
    if set(anchors) != set(SCORE_LEVELS):
        missing = sorted(set(SCORE_LEVELS) - set(anchors))
        extra = sorted(set(anchors) - set(SCORE_LEVELS))
        raise CatalogError(f"{where}: anchors must cover exactly levels 1-4 (missing {missing}, unexpected {extra})")
    if not all(isinstance(v, str) and v.strip() for v in anchors.values()):
        raise CatalogError(f"{where}: empty anchor text")
    scope = raw.get("scope", "global")
    if scope not in SCOPES:
        raise CatalogError(f"{where}: unknown scope {scope!r}")
    applies_raw = raw.get("applies_to")
    if scope == "global" and applies_raw is not None:
        raise CatalogError(f"{where}: global dimension must not declare applies_to")
    applies = None
    if scope == "subtask_specific":
        if not applies_raw:
            raise CatalogError(f"{where}: subtask-specific dimension needs applies_to")
        reasons = tuple(applies_raw.get("reasons", ()))
        objectives = tuple(applies_raw.get("objectives", ()))
        bad = [r for r in reasons if r not in REASONS] + [o for o in objectives if o not in OBJECTIVES]
        if bad:
            raise CatalogError(f"{where}: unknown task values in applies_to: {bad}")
        if not reasons and not objectives:
            raise CatalogError(f"{where}: applies_to allows every cell; declare the dimension global instead")
        applies = Applicability(reasons, objectives)
    return DimensionSpec(
        dimension_id=did,
        name=raw["name"],
        category=raw["category"],
        description=raw["description"],
        anchors=anchors,
        scope=scope,
        applies_to=applies,
    )


def parse_catalog(doc: Mapping) -> RubricCatalog:
    """Validate a catalog document.

    ``profile: "full"`` (the default) demands the complete rubric: 105
    dimensions covering all 29 categories and 7 meta-categories. ``"subset"``
    checks the same structure on a partial catalog.
    """
    profile = doc.get("profile", "full")
    if profile not in ("full", "subset"):
        raise CatalogError(f"unknown profile {profile!r}")
    raw_dims = doc.get("dimensions")
    if not isinstance(raw_dims, list):
        raise CatalogError("catalog has no dimensions list")
    dims = tuple(_parse_dimension(d, i) for i, d in enumerate(raw_dims))

    ids = [d.dimension_id for d in dims]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise CatalogError(f"duplicate dimension ids: {dupes}")

    meta_doc = doc.get("meta_categories")
    if not isinstance(meta_doc, Mapping):
        raise CatalogError("catalog has no meta_categories section")
    meta_map: dict[str, str] = {}
    for meta, cats in meta_doc.items():
        if meta not in META_CATEGORIES:
            raise CatalogError(f"unknown meta-category {meta!r}")
        for c in cats:
            if c not in CATEGORIES:
                raise CatalogError(f"meta-category {meta!r} lists unknown category {c!r}")
            if c in meta_map:
                raise CatalogError(f"category {c!r} mapped twice")
            if CATEGORY_TO_META[c] != meta:
                raise CatalogError(f"category {c!r} belongs under {CATEGORY_TO_META[c]!r}, not {meta!r}")
            meta_map[c] = meta

    used = tuple(c for c in CATEGORIES if any(d.category == c for d in dims))
    unmapped = [c for c in used if c not in meta_map]
    if unmapped:
        raise CatalogError(f"categories without a meta-category: {unmapped}")

    if profile == "full":
        if len(dims) != FULL_DIMENSION_COUNT:
            raise CatalogError(f"expected {FULL_DIMENSION_COUNT} dimensions, found {len(dims)}")
        missing_cats = [c for c in CATEGORIES if c not in used]
        if missing_cats:
            raise CatalogError(f"categories with no dimensions: {missing_cats}")
        if set(meta_map) != set(CATEGORIES):
            raise CatalogError(f"meta-category map misses {sorted(set(CATEGORIES) - set(meta_map))}")

    descriptions = dict(doc.get("category_descriptions", {}))
    return RubricCatalog(
        dimensions=dims,
        categories=used,
        meta_map={c: meta_map[c] for c in used},
        category_descriptions={c: descriptions.get(c, "") for c in used},
        profile=profile,
    )


def load_catalog(path: str | Path) -> RubricCatalog:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON ({exc.msg})") from None
    return parse_catalog(doc)


def bundled_catalog_path(name: str = "catalog") -> Path:
    """Path of a catalog shipped with the package: ``catalog`` (105 dimensions) or ``toy_catalog``."""
    return Path(str(resources.files("clinbench").joinpath("data", f"{name}.json")))


def category_description(catalog: RubricCatalog, category: str) -> str:
    text = catalog.category_descriptions.get(category, "")
    if text:
        return text
    return "; ".join(f"{d.name}: {d.description}" for d in catalog.by_category(category))
