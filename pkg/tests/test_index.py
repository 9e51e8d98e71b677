import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from sesindex.catalog import catalog_from_dict
from sesindex.errors import IndexBuildError, SesIndexWarning
from sesindex.index import (PipelineConfig, above_mean, alpha_from_correlation, build_index,
                            compare_with_reference, cronbach_alpha, decompose_dimensions, pearson,
                            preprocess, stage1_dimension_selection, stage2_above_mean_selection,
                            stage3_final_index, standardize_scores)
from sesindex.ingest import AreaTable
from sesindex.pca import correlation
from sesindex.synthetic import synthetic_area_table


def make_table(columns):
    n = len(next(iter(columns.values())))
    return AreaTable([f"u{i}" for i in range(n)], np.zeros((n, 2)), columns)


def one_dim_catalog(names, dim="d"):
    return catalog_from_dict({"dimensions": [
        {"name": dim, "variables": [{"name": n, "kind": "percentage"} for n in names]}]})


def correlated_pair(r, n=500, seed=0):
    """Two columns with sample correlation exactly r (by construction)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    a, b = q[:, 0], q[:, 1]
    return 50 + 10 * a, 50 + 10 * (r * a + np.sqrt(1 - r * r) * b)


# --- preprocess ---

def test_preprocess_shift():
    t = make_table({"A": np.array([0.0, 100.0, 5.0])})
    out = preprocess(t, PipelineConfig())
    np.testing.assert_array_equal(out.columns["A"], [10.0, 110.0, 15.0])
    assert t.columns["A"][0] == 0.0  # input untouched


def test_preprocess_keeps_correlation(table200):
    before = correlation(table200.matrix()).values
    after = correlation(preprocess(table200, PipelineConfig()).matrix()).values
    np.testing.assert_allclose(after, before, atol=1e-12)


# --- stage 1 ---

def test_stage1_singleton_dimension():
    t = make_table({"R": np.array([1.0, 4.0, 2.0, 8.0])})
    assert stage1_dimension_selection(t, one_dim_catalog(["R"]), PipelineConfig()) == {"d": ["R"]}


def test_stage1_correlated_pair_tie_break():
    a, b = correlated_pair(0.9)
    t = make_table({"A": a, "B": b})
    diag = {}
    sel = stage1_dimension_selection(t, one_dim_catalog(["A", "B"]), PipelineConfig(), diag)
    assert diag["stage1:d"].explained_fraction[0] == pytest.approx(0.95, abs=1e-12)
    assert sel == {"d": ["A"]}


def test_stage1_uncorrelated_triple_keeps_all():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((300, 3))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    t = make_table({"A": q[:, 0], "B": q[:, 1], "C": q[:, 2]})
    assert stage1_dimension_selection(t, one_dim_catalog(list("ABC")), PipelineConfig()) == {"d": list("ABC")}


def test_stage1_constant_variable_dropped_with_warning():
    a, b = correlated_pair(0.5, n=20)
    t = make_table({"A": a, "B": b, "K": np.full(20, 3.0)})
    with pytest.warns(SesIndexWarning, match="K"):
        sel = stage1_dimension_selection(t, one_dim_catalog(["A", "B", "K"]), PipelineConfig())
    assert "K" not in sel["d"]


def test_stage1_all_constant_errors():
    t = make_table({"K": np.full(5, 1.0), "L": np.full(5, 2.0)})
    with pytest.raises(IndexBuildError, match="'d'"), pytest.warns(SesIndexWarning):
        stage1_dimension_selection(t, one_dim_catalog(["K", "L"]), PipelineConfig())


# --- stage 2 ---

def test_above_mean_strict():
    np.testing.assert_array_equal(above_mean([0.8, 0.5, 0.2]), [True, False, False])
    np.testing.assert_array_equal(above_mean([-0.8, 0.5, 0.2]), [True, False, False])


def test_above_mean_all_equal_falls_back():
    with pytest.warns(SesIndexWarning, match="keeping every variable"):
        np.testing.assert_array_equal(above_mean([0.4, 0.4, 0.4]), [True, True, True])


def test_stage2_equal_pair_keeps_both():
    a, b = correlated_pair(0.7)
    t = make_table({"A": a, "B": b})
    with pytest.warns(SesIndexWarning):
        assert stage2_above_mean_selection(t, ["A", "B"]) == ["A", "B"]


def test_stage2_deterministic(table200, catalog, quiet):
    sel = stage1_dimension_selection(table200, catalog, PipelineConfig())
    pooled = [n for n in catalog.variable_names if any(n in v for v in sel.values())]
    assert stage2_above_mean_selection(table200, pooled) == stage2_above_mean_selection(table200, pooled)


# --- stage 3 ---

def test_stage3_orientation_and_sign_gauge(rng):
    x = rng.normal(size=(60, 3)) + rng.normal(size=(60, 1))
    t = make_table({"A": x[:, 0], "B": x[:, 1], "INC": x[:, 2]})
    fc = stage3_final_index(t, ["A", "B", "INC"], t.columns["INC"])
    assert pearson(fc.raw_scores, t.columns["INC"]) > 0
    neg = make_table({k: -v for k, v in t.columns.items()})
    fc2 = stage3_final_index(neg, ["A", "B", "INC"], t.columns["INC"])
    np.testing.assert_allclose(fc2.raw_scores, fc.raw_scores, atol=1e-12)


def test_stage3_single_variable(rng):
    x = rng.normal(size=25)
    fc = stage3_final_index(make_table({"A": x}), ["A"], -x)
    z = (x - x.mean()) / x.std(ddof=1)
    np.testing.assert_allclose(fc.raw_scores, -z, atol=1e-12)


# --- standardization ---

def test_standardize_scores():
    np.testing.assert_array_equal(standardize_scores([0, 5, 10]), [-1, 0, 1])
    with pytest.raises(IndexBuildError):
        standardize_scores([2, 2, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40).filter(lambda v: max(v) - min(v) > 1e-6))
def test_standardize_hits_bounds_exactly(raw):
    s = standardize_scores(raw)
    assert s.min() == -1.0 and s.max() == 1.0
    assert s[int(np.argmin(raw))] == -1.0 and s[int(np.argmax(raw))] == 1.0


# --- decomposition ---

def test_decompose_inactive_and_negative_representative():
    rng = np.random.default_rng(4)
    idx = rng.normal(size=80)
    cols = {"E1": idx + 0.1 * rng.normal(size=80), "E2": idx + 0.5 * rng.normal(size=80),
            "M1": rng.normal(size=80), "P1": -idx + 0.2 * rng.normal(size=80)}
    cat = catalog_from_dict({"dimensions": [
        {"name": "education", "variables": [{"name": "E1", "kind": "percentage"},
                                            {"name": "E2", "kind": "percentage"}]},
        {"name": "mobility", "variables": [{"name": "M1", "kind": "percentage"}]},
        {"name": "poverty", "variables": [{"name": "P1", "kind": "percentage"}]},
    ]})
    reps, scaled, raw, inactive = decompose_dimensions(idx, make_table(cols), cat, ["E1", "E2", "P1"])
    assert inactive == ["mobility"]
    assert reps["education"][0] == "E1"
    assert reps["poverty"][0] == "P1" and reps["poverty"][1] < 0
    assert scaled["poverty"].min() == -1 and scaled["poverty"].max() == 1
    np.testing.assert_array_equal(raw["education"], cols["E1"])


# --- Cronbach alpha ---

def brute_alpha(corr):
    k = len(corr)
    pairs = [corr[i][j] for i in range(k) for j in range(k) if i != j]
    rbar = sum(pairs) / len(pairs)
    return k * rbar / (1 + (k - 1) * rbar)


@pytest.mark.parametrize("corr,expected", [
    ([[1, 0.8], [0.8, 1]], 1.6 / 1.8),
    ([[1, 1, 1], [1, 1, 1], [1, 1, 1]], 1.0),
    ([[1, 0, 0], [0, 1, 0], [0, 0, 1]], 0.0),
])
def test_alpha_values(corr, expected):
    assert alpha_from_correlation(corr) == pytest.approx(expected, abs=1e-12)
    assert alpha_from_correlation(corr) == pytest.approx(brute_alpha(corr), abs=1e-12)


def test_alpha_sign_alignment(rng):
    f = rng.normal(size=300)
    data = np.column_stack([f + 0.3 * rng.normal(size=300), -f + 0.3 * rng.normal(size=300)])
    assert cronbach_alpha(data) < 0
    assert cronbach_alpha(data, signs=[1, -1]) > 0.8


def test_alpha_needs_two():
    with pytest.raises(IndexBuildError):
        alpha_from_correlation([[1.0]])


# --- full pipeline ---

def test_build_index_structure(table200, catalog, quiet):
    res = build_index(table200, catalog)
    assert res.scores.min() == -1 and res.scores.max() == 1
    assert pearson(res.scores, table200.columns["MED_RENDDOM"]) >= 0
    assert set(res.stage2_selected) <= {v for vs in res.stage1_selected.values() for v in vs}
    assert set(res.active_dimensions) | set(res.inactive_dimensions) == set(catalog.dimension_names)
    assert "mobility" in res.inactive_dimensions
    assert 0 < res.cronbach_alpha <= 1
    frame = res.to_frame()
    assert list(frame.columns[:2]) == ["unit_id", "geoses"] and "mobility" not in frame.columns


def test_build_index_invariances(table200, catalog, quiet):
    base = build_index(table200, catalog)
    rng = np.random.default_rng(9)
    rescaled = table200.with_columns({k: v * rng.uniform(0.1, 10) for k, v in table200.columns.items()})
    for res in (build_index(table200, catalog, PipelineConfig(shift_constant=1000.0)),
                build_index(rescaled, catalog)):
        assert res.stage1_selected == base.stage1_selected
        assert res.stage2_selected == base.stage2_selected
        np.testing.assert_allclose(res.scores, base.scores, atol=1e-9)


def test_compare_with_reference(table200, catalog, quiet):
    res = build_index(table200, catalog)
    m = compare_with_reference(res, {"self": res.scores, "neg": -res.scores})
    assert m.loc["geoses", "self"] == pytest.approx(1.0, abs=1e-12)
    assert m.loc["geoses", "neg"] == pytest.approx(-1.0, abs=1e-12)
    frame = pd.DataFrame({"unit_id": res.unit_ids[::-1], "ref": res.scores[::-1]})
    assert compare_with_reference(res, frame).loc["geoses", "ref"] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(IndexBuildError, match="missing"):
        compare_with_reference(res, frame.iloc[1:])


def test_compare_with_reference_design_correlation(table200, catalog, quiet):
    res = build_index(table200, catalog)
    rng = np.random.default_rng(2)
    rho = 0.6
    z = (res.scores - res.scores.mean()) / res.scores.std()
    ref = rho * z + np.sqrt(1 - rho**2) * rng.standard_normal(z.size)
    got = compare_with_reference(res, {"ref": ref}).loc["geoses", "ref"]
    assert abs(got - rho) < 0.15  # ~3 standard errors at n=200
