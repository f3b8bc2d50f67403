import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from clinbench.rubric import (
    CATEGORIES,
    META_CATEGORIES,
    CatalogError,
    ScoreError,
    applicable_dimensions,
    bundled_catalog_path,
    category_description,
    load_catalog,
    normalize_score,
    parse_catalog,
)
from clinbench.tasks import TASK_MATRIX, TaskCell


@pytest.fixture(scope="module")
def full_doc():
    return json.loads(bundled_catalog_path("catalog").read_text())


@pytest.mark.parametrize("raw, expected", [(1, 0.0), (2, 1 / 3), (3, 2 / 3), (4, 1.0)])
def test_normalize(raw, expected):
    assert normalize_score(raw) == pytest.approx(expected, abs=1e-12)
    assert normalize_score(raw) == pytest.approx(oracles.normalize_score(raw), abs=1e-12)


@pytest.mark.parametrize("raw", [0, 5, 2.5, True, "3"])
def test_normalize_rejects(raw):
    with pytest.raises(ScoreError):
        normalize_score(raw)


@given(st.sampled_from([1, 2, 3, 4]), st.sampled_from([1, 2, 3, 4]))
def test_normalize_is_monotone(a, b):
    assert (normalize_score(a) < normalize_score(b)) == (a < b)


def test_full_catalog_shape(full_catalog):
    assert len(full_catalog.dimensions) == 105
    assert len(full_catalog.categories) == 29 == len(CATEGORIES)
    assert len(full_catalog.meta_categories) == 7 == len(META_CATEGORIES)
    assert full_catalog.profile == "full"


def test_every_cell_gets_global_dimensions(full_catalog):
    globals_ = {d.dimension_id for d in full_catalog.dimensions if d.scope == "global"}
    for reason, objective in TASK_MATRIX:
        ids = {d.dimension_id for d in applicable_dimensions(full_catalog, TaskCell(reason, objective))}
        assert globals_ <= ids


def test_toy_catalog_cells(toy_catalog):
    assert len(toy_catalog.dimensions) == 10 and toy_catalog.profile == "subset"
    assert len(applicable_dimensions(toy_catalog, TaskCell("anxiety", "medication_advice"))) == 10
    assert len(applicable_dimensions(toy_catalog, TaskCell("anxiety", "treatment_advice"))) == 9
    lifestyle = applicable_dimensions(toy_catalog, TaskCell("anxiety", "lifestyle_advice"))
    assert len(lifestyle) == 7 and all(d.scope == "global" for d in lifestyle)


def test_applicable_dimensions_are_sorted(full_catalog):
    ids = [d.dimension_id for d in applicable_dimensions(full_catalog, TaskCell("pregnancy", "medical_screening"))]
    assert ids == sorted(ids)


def test_loading_is_idempotent():
    a = load_catalog(bundled_catalog_path("catalog"))
    b = load_catalog(bundled_catalog_path("catalog"))
    assert a == b


def test_missing_dimension_is_rejected(full_doc):
    doc = copy.deepcopy(full_doc)
    doc["dimensions"].pop()
    with pytest.raises(CatalogError, match="105"):
        parse_catalog(doc)


def test_three_anchors_names_the_dimension(full_doc):
    doc = copy.deepcopy(full_doc)
    dim = doc["dimensions"][7]
    del dim["anchors"]["4"]
    with pytest.raises(CatalogError, match=dim["dimension_id"]):
        parse_catalog(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["dimensions"][0].update(category="bedside manner"), "unknown category"),
        (lambda d: d["dimensions"][1].update(dimension_id=d["dimensions"][0]["dimension_id"]), "duplicate"),
        (lambda d: d["dimensions"][0].update(scope="sometimes"), "scope"),
        (lambda d: d["dimensions"][0].update(applies_to={"objectives": ["diagnosis"]}), "global"),
        (lambda d: d.update(profile="partial"), "profile"),
        (lambda d: d.pop("meta_categories"), "meta_categories"),
    ],
)
def test_structural_errors(full_doc, mutate, message):
    doc = copy.deepcopy(full_doc)
    mutate(doc)
    with pytest.raises(CatalogError, match=message):
        parse_catalog(doc)


def test_subtask_dimension_needs_allow_list(full_doc):
    doc = copy.deepcopy(full_doc)
    dim = next(d for d in doc["dimensions"] if d.get("scope") == "subtask_specific")
    dim["applies_to"] = {"objectives": ["cooking"]}
    with pytest.raises(CatalogError, match="cooking"):
        parse_catalog(doc)
    dim["applies_to"] = {}
    with pytest.raises(CatalogError):
        parse_catalog(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(CatalogError, match="invalid JSON"):
        load_catalog(p)


def test_unknown_dimension_lookup(toy_catalog):
    with pytest.raises(CatalogError):
        toy_catalog.dimension("nope")


def test_category_description_falls_back_to_dimensions(toy_catalog, full_catalog):
    cat = toy_catalog.categories[0]
    assert category_description(toy_catalog, cat)
    assert category_description(full_catalog, full_catalog.categories[0]) == full_catalog.category_descriptions[full_catalog.categories[0]]
