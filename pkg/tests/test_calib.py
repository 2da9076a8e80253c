import json
import math

import numpy as np
import pytest

from tactilewbc.calib import (LinearFit, MaterialReport, SweepSample, bundled_reports,
                              bundled_sweep_files, fit_linear, load_sweeps, material_report,
                              materials_in, report_json, report_table, select_material)
from tactilewbc.errors import ConfigError


def test_fit_linear_four_point_oracle():
    # hand-solved least squares: slope 1.8, offset 1.3, rmse sqrt(0.45)
    fit = fit_linear([(0, 1), (1, 4), (2, 4), (3, 7)])
    assert abs(fit.slope - 1.8) < 1e-12
    assert abs(fit.offset - 1.3) < 1e-12
    assert abs(fit.rmse - math.sqrt(0.45)) < 1e-12
    slope, offset, rmse = fit  # unpacks as the documented triple
    assert (slope, offset, rmse) == tuple(fit)


def test_fit_linear_is_order_invariant():
    rng = np.random.default_rng(0)
    pts = [(float(x), float(3.0 * x - 2.0 + rng.normal())) for x in range(20)]
    a = fit_linear(pts)
    b = fit_linear(list(reversed(pts)))
    rng.shuffle(pts)
    c = fit_linear(pts)
    for other in (b, c):
        assert np.allclose(a, other, atol=1e-12)


def test_fit_linear_affine_x_transform():
    rng = np.random.default_rng(1)
    pts = [(float(x), float(0.7 * x + 5.0 + rng.normal())) for x in range(15)]
    base = fit_linear(pts)
    a, b = 4.0, -3.0
    mapped = fit_linear([(a * x + b, y) for x, y in pts])
    assert abs(mapped.slope - base.slope / a) < 1e-9
    assert abs(mapped.rmse - base.rmse) < 1e-9
    # offsets relate through the substitution x -> (x' - b) / a
    assert abs(mapped.offset - (base.offset - base.slope * b / a)) < 1e-9


def test_fit_linear_self_resample_has_zero_rmse():
    fit = fit_linear([(0, 1), (1, 4), (2, 4), (3, 7)])
    resampled = [(x, float(fit.predict(x))) for x in np.linspace(0.0, 3.0, 9)]
    refit = fit_linear(resampled)
    assert refit.rmse < 1e-9
    assert abs(refit.slope - fit.slope) < 1e-9


def test_fit_linear_degenerate_inputs():
    with pytest.raises(ValueError):
        fit_linear([(1.0, 2.0)])
    with pytest.raises(ValueError, match="degenerate"):
        fit_linear([(2.0, 1.0), (2.0, 3.0), (2.0, 5.0)])


# -- sweep samples and reports


def _sweep(material, slope_d, slope_c, forces=(0, 25, 50, 75, 100)):
    rows = []
    for trial in (1, 2):
        for f in forces:
            rows.append(SweepSample(material=material, trial=trial, force=float(f),
                                    deformation=slope_d * f if slope_d is not None else None,
                                    raw=slope_c * f))
    return rows


def test_sample_invariants():
    with pytest.raises(ValueError):
        SweepSample("m", 1, -1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        SweepSample("m", 1, 1.0, -0.5, 0.0)
    SweepSample("m", 1, 1.0, None, -3.0)  # counts may dip below baseline


def test_material_report_reads_anchors_off_the_averaged_curve():
    rep = material_report("m", _sweep("m", 0.1, 0.8))
    assert abs(rep.max_deformation - 10.0) < 1e-12
    assert abs(rep.max_raw_variation - 80.0) < 1e-12
    assert rep.rmse_deformation < 1e-12 and rep.rmse_raw < 1e-12
    assert isinstance(rep.characterization, LinearFit)


def test_material_report_noise_cancels_in_anchors():
    rows = _sweep("m", 0.1, 0.8)
    noisy = []
    for s in rows:
        # paired +-2 on an interior level only
        if s.force == 50.0:
            d = 2.0 if s.trial == 1 else -2.0
            noisy.append(SweepSample(s.material, s.trial, s.force, s.deformation + d, s.raw + d))
        else:
            noisy.append(s)
    rep = material_report("m", noisy)
    assert abs(rep.max_deformation - 10.0) < 1e-12
    assert abs(rep.max_raw_variation - 80.0) < 1e-12
    assert rep.rmse_deformation > 0.1  # the residuals still show up in the fit


def test_material_report_without_deformation_block():
    rep = material_report("m", _sweep("m", None, 0.8))
    assert rep.max_deformation is None
    assert rep.rmse_deformation is None
    assert rep.characterization is None
    assert abs(rep.max_raw_variation - 80.0) < 1e-12


def test_material_report_insufficient_data():
    with pytest.raises(ValueError, match="not enough"):
        material_report("m", [])
    flat = [SweepSample("m", 1, 10.0, 1.0, 8.0), SweepSample("m", 2, 10.0, 1.0, 8.0)]
    with pytest.raises(ValueError, match="force"):
        material_report("m", flat)


# -- selection rules


def _report(material, dx, rmse_raw):
    fit = LinearFit(1.0, 0.0, rmse_raw)
    return MaterialReport(material=material, max_deformation=dx, max_raw_variation=50.0,
                          rmse_deformation=None if dx is None else 0.5,
                          rmse_raw=rmse_raw, characterization=None, calibration=fit)


def test_select_material_prefers_deformation():
    reports = [_report("a", 3.0, 99.0), _report("b", 11.4, 1.0), _report("c", 5.0, 0.1)]
    assert select_material(reports) == "b"


def test_select_material_breaks_ties_on_calibration_rmse():
    reports = [_report("a", 5.0, 2.0), _report("b", 5.0, 1.0)]
    assert select_material(reports) == "b"


def test_select_material_missing_deformation_ranks_worst():
    reports = [_report("a", None, 0.001), _report("b", 0.1, 50.0)]
    assert select_material(reports) == "b"
    only_missing = [_report("a", None, 2.0), _report("b", None, 1.0)]
    assert select_material(only_missing) == "b"  # falls back to rmse tie-break


def test_select_material_full_tie_keeps_input_order():
    reports = [_report("first", 5.0, 1.0), _report("second", 5.0, 1.0)]
    assert select_material(reports) == "first"
    with pytest.raises(ValueError):
        select_material([])


# -- CSV ingestion


def test_csv_round_trip(tmp_path):
    path = tmp_path / "sweep.csv"
    path.write_text(
        "material,trial,force_n,deformation_mm,raw_counts\n"
        "Foam X,1,0,0.0,0.0\n"
        "Foam X,1,50,5.5,40.0\n"
        "Foam X,2,0,0.1,1.0\n"
        "Foam X,2,50,5.3,39.0\n"
        "Foam Y,1,0,,0.0\n"
        "Foam Y,1,50,,20.0\n")
    samples = load_sweeps(path)
    assert materials_in(samples) == ["Foam X", "Foam Y"]
    assert samples[1].deformation == 5.5
    assert samples[4].deformation is None
    rep = material_report("Foam Y", samples)
    assert rep.max_deformation is None


def test_csv_header_and_row_diagnostics(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError, match="header"):
        load_sweeps(bad_header)

    bad_row = tmp_path / "b.csv"
    bad_row.write_text("material,trial,force_n,deformation_mm,raw_counts\n"
                       "m,1,zero,0.0,0.0\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_sweeps(bad_row)

    empty = tmp_path / "c.csv"
    empty.write_text("material,trial,force_n,deformation_mm,raw_counts\n")
    with pytest.raises(ConfigError, match="no data"):
        load_sweeps(empty)

    with pytest.raises(ConfigError):
        load_sweeps(tmp_path / "missing.csv")


# -- bundled datasets


def test_bundled_datasets_reproduce_reference_anchors():
    reports = {r.material: r for r in bundled_reports()}
    assert len(bundled_sweep_files()) == 4
    want = {
        "PU Foam LD30": (11.4, 84.0, 4.064, 5.96),
        "CC Foam": (None, 70.0, None, 11.32),
        "PE Foam LD45 (5mm)": (3.0, 5.0, 1.612, 14.37),
        "PE Foam LD45 (3mm)": (2.9, 4.0, 1.587, 17.91),
    }
    assert set(reports) == set(want)
    for material, (dx, ds, rmse_dx, rmse_ds) in want.items():
        rep = reports[material]
        if dx is None:
            assert rep.max_deformation is None
        else:
            assert abs(rep.max_deformation - dx) < 1e-9
            assert abs(rep.rmse_deformation - rmse_dx) / rmse_dx < 0.05
        assert abs(rep.max_raw_variation - ds) < 1e-9
        assert abs(rep.rmse_raw - rmse_ds) / rmse_ds < 0.05


def test_bundled_selection_picks_pu_foam():
    assert select_material(bundled_reports()) == "PU Foam LD30"


def test_report_emission_round_trip():
    reports = bundled_reports()
    table = report_table(reports)
    assert "PU Foam LD30" in table and "NA" in table
    assert len(table.splitlines()) == len(reports) + 2  # header + rule
    doc = json.loads(report_json(reports))
    assert doc["selected"] == "PU Foam LD30"
    by_name = {m["material"]: m for m in doc["materials"]}
    assert by_name["CC Foam"]["max_deformation_mm"] is None
    assert by_name["PU Foam LD30"]["calibration"]["slope"] == pytest.approx(0.84)
