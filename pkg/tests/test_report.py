"""Summary statistics over result grids: speedups, combo spread,
feasibility classes, and the GPU-days footprint comparison."""

import pytest

from trainplan.core import CatalogError
from trainplan.report import (
    CATEGORIES,
    ComboGroup,
    GridFilter,
    ResultGrid,
    bootstrap_mean_ci,
    bundled_grid,
    combo_spread,
    feasibility_matrix,
    gpu_days_comparison,
    load_original_footprints,
    predicted_grid,
    speedup_summary,
)

PYTHIA = GridFilter(model_prefix="pythia")


def test_measured_speedup_over_pythia_cells():
    s = speedup_summary(bundled_grid("naive"), bundled_grid("optimal"), PYTHIA)
    assert s.count == 44
    assert s.mean == pytest.approx(4.3, abs=0.5)
    assert s.ci.lo < s.mean < s.ci.hi
    assert all(r >= 1.0 for r in s.ratios.values())


def test_speedup_of_a_grid_against_itself_is_one():
    g = bundled_grid("optimal")
    s = speedup_summary(g, g)
    assert s.mean == 1.0
    assert set(s.ratios.values()) == {1.0}


def test_speedup_requires_overlapping_feasible_cells():
    with pytest.raises(CatalogError):
        speedup_summary(bundled_grid("naive"), bundled_grid("optimal"),
                        GridFilter(models=("nonesuch",)))


def test_bootstrap_is_deterministic():
    values = [1.0, 2.0, 3.0, 4.0, 8.0]
    a = bootstrap_mean_ci(values)
    b = bootstrap_mean_ci(values)
    assert (a.mean, a.lo, a.hi) == (b.mean, b.lo, b.hi)
    assert a.lo <= a.mean <= a.hi


def test_combo_spread_arithmetic():
    g = ComboGroup(label="x", days=(10.0, 20.0, 47.0), free_lunch_days=12.0)
    s = combo_spread([g])
    assert s.best_vs_median == pytest.approx(2.0)
    assert s.best_vs_worst == pytest.approx(4.7)
    assert s.median_vs_freelunch == pytest.approx(20.0 / 12.0)
    assert s.groups == 1


def test_combo_spread_degenerate_and_empty_groups():
    single = ComboGroup(label="s", days=(33.0,), free_lunch_days=None)
    s = combo_spread([single, ComboGroup(label="none", days=(), free_lunch_days=None)])
    assert s.groups == 1
    assert (s.best_vs_median, s.best_vs_worst, s.median_vs_freelunch) == (1.0, 1.0, 1.0)
    with pytest.raises(CatalogError):
        combo_spread([ComboGroup(label="none", days=(), free_lunch_days=None)])


def test_combo_spread_ignores_day_ordering():
    a = ComboGroup(label="a", days=(10.0, 20.0, 47.0), free_lunch_days=12.0)
    b = ComboGroup(label="a", days=(47.0, 10.0, 20.0), free_lunch_days=12.0)
    assert combo_spread([a]) == combo_spread([b])


def test_predicted_feasibility_classes_for_multi_gpu_pythia(catalog, params):
    flt = GridFilter(model_prefix="pythia", min_gpus=2)
    fm = feasibility_matrix(predicted_grid(catalog, params, "naive", flt),
                            predicted_grid(catalog, params, "optimal", flt))
    counts = fm.counts()
    assert set(counts) == set(CATEGORIES)
    assert counts["naive-feasible"] == 11
    assert counts["optimal-only"] == 9
    assert counts["infeasible"] == 0


def test_footprint_comparison_against_original_runs():
    comp = gpu_days_comparison(load_original_footprints(), bundled_grid("optimal"))
    assert comp.mean_ratio == pytest.approx(3.0, abs=0.3)
    assert len(comp.rows) == 8
    assert comp.excluded == ["mamba-2.8b"]
    by_model = {r.model_id: r for r in comp.rows}
    r1b = by_model["pythia-1b"]
    assert r1b.ours_n_gpus == 8
    assert r1b.original_gpu_days == pytest.approx(
        r1b.original_n_gpus * r1b.original_days)
    assert r1b.ours_gpu_days == pytest.approx(r1b.ours_n_gpus * r1b.ours_days)
    assert r1b.ratio == pytest.approx(r1b.original_gpu_days / r1b.ours_gpu_days)
    for r in comp.rows:
        assert r.ratio > 1.0


def test_grid_csv_round_trip(tmp_path):
    g = bundled_grid("optimal")
    p = tmp_path / "grid.csv"
    p.write_text(g.to_csv())
    again = ResultGrid.from_csv(p, label=g.label)
    assert again.cells == g.cells
    assert again.label == g.label


def test_grid_rejects_malformed_csv(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("model_id,gpu_id,days\nx,y,3\n")
    with pytest.raises(CatalogError):
        ResultGrid.from_csv(p)
    p.write_text("model_id,gpu_id,n_gpus,days\nx,y,1,-3\n")
    with pytest.raises(CatalogError):
        ResultGrid.from_csv(p)


def test_predicted_and_measured_grids_share_shape(catalog, params):
    flt = GridFilter(models=("pythia-1b",), gpus=("a100",))
    pred = predicted_grid(catalog, params, "optimal", flt)
    meas = bundled_grid("optimal")
    keys = [k for k in meas.cells if flt.admits(k)]
    assert sorted(pred.cells) == sorted(keys)
    for k in keys:
        assert pred.cells[k] is not None
