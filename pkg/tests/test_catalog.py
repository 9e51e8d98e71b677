import pytest

from sesindex.catalog import catalog_from_dict, default_catalog, load_catalog
from sesindex.errors import CatalogError

EXPECTED_COUNTS = {
    "education": 7, "mobility": 6, "poverty": 5, "wealth": 3,
    "income": 1, "segregation": 5, "deprivation": 19,
}


def test_default_catalog_shape():
    cat = default_catalog()
    assert len(cat) == 46
    assert cat.dimension_names == list(EXPECTED_COUNTS)
    for name, count in EXPECTED_COUNTS.items():
        assert len(cat.dimension(name).variables) == count


def test_names_are_unique_and_ordered():
    cat = default_catalog()
    names = cat.variable_names
    assert len(set(names)) == len(names)
    assert cat.position(names[0]) == 0 and cat.position(names[-1]) == 45


def test_income_is_single_weighted_mean():
    dim = default_catalog().dimension("income")
    assert [(v.name, v.kind) for v in dim.variables] == [("MED_RENDDOM", "weighted_mean")]


def test_ice_only_in_segregation():
    cat = default_catalog()
    for v in cat:
        if v.kind == "ice_ratio":
            assert cat.dimension(v.dimension).segregation


def test_minimal_catalog():
    doc = {"dimensions": [{"name": "only", "variables": [{"name": "P_X", "kind": "percentage"}]}]}
    cat = catalog_from_dict(doc)
    assert len(cat) == 1 and cat.dimension_names == ["only"]


def test_duplicate_name_rejected():
    doc = {"dimensions": [
        {"name": "a", "variables": [{"name": "P_GRAD", "kind": "percentage"}]},
        {"name": "b", "variables": [{"name": "P_GRAD", "kind": "percentage"}]},
    ]}
    with pytest.raises(CatalogError, match="P_GRAD"):
        catalog_from_dict(doc)


@pytest.mark.parametrize("doc", [
    {"dimensions": []},
    {"dimensions": [{"name": "a", "variables": []}]},
    {"dimensions": [{"name": "a", "variables": [{"name": "X", "kind": "median"}]}]},
    {"dimensions": [{"name": "a", "variables": [{"name": "X", "kind": "ice_ratio"}]}]},
    {"dimensions": [{"name": "a", "variables": [{"name": "X", "kind": "percentage", "colour": 1}]}]},
])
def test_invalid_catalogs(doc):
    with pytest.raises(CatalogError):
        catalog_from_dict(doc)


def test_round_trip_and_hash():
    cat = default_catalog()
    again = load_catalog(cat.dumps())
    assert again == cat
    assert again.sha256() == cat.sha256()


def test_load_from_path(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(default_catalog().dumps(), encoding="utf-8")
    assert load_catalog(path).variable_names == default_catalog().variable_names
