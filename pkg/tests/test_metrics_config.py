"""Vertex-field families and the key=value run configuration parser."""

import numpy as np
import pytest

from hypembed.config import ConfigError, config_as_dict, parse_config
from hypembed.errors import HypothesisError
from hypembed.metrics import (
    FAMILY_NAMES,
    curvature_margin,
    evaluate_family,
    gaussian_bump,
    real_harmonic,
    require_admissible,
)
from hypembed.conformal import ConformalMetric


# ---- field families ---------------------------------------------------


def test_family_names_cover_zero_round_constant(mesh2):
    v = mesh2.vertices
    assert np.array_equal(evaluate_family("zero", v), np.zeros(len(v)))
    assert np.array_equal(evaluate_family("round", v), np.zeros(len(v)))
    np.testing.assert_array_equal(evaluate_family("constant", v, value=0.3), 0.3)


def test_harmonic_zonal_peak_normalized(mesh3):
    v = mesh3.vertices
    for l in (1, 2, 3):
        y = real_harmonic(l, 0, v)
        # zonal harmonics are Legendre polynomials in z, peak-normalized at the pole
        pole = np.argmax(v[:, 2])
        assert abs(y[pole] - 1.0) < 1e-12


def test_harmonic_is_eigenfunction(mesh3, mesh4):
    """Laplacian residual of each harmonic shrinks at second order."""
    for l, m in ((2, 0), (2, 1), (3, 2)):
        errs = []
        for mesh in (mesh3, mesh4):
            cm = ConformalMetric(mesh, np.zeros(mesh.nv), 1.0)
            y = real_harmonic(l, m, mesh.vertices)
            resid = cm.laplacian_unit(y) + l * (l + 1) * y
            errs.append(np.max(np.abs(resid)) / np.max(np.abs(y)))
        assert errs[1] < errs[0] / 3.0
    assert errs[1] < 0.2  # worst case: degree 3 on the finer mesh


def test_harmonic_sector_orthogonal(mesh3):
    w = mesh3.mass
    y20 = real_harmonic(2, 0, mesh3.vertices)
    y21 = real_harmonic(2, 1, mesh3.vertices)
    assert abs(np.sum(w * y20 * y21)) < 1e-2 * np.sqrt(np.sum(w * y20**2) * np.sum(w * y21**2))


def test_gaussian_bump_peak_and_decay(mesh3):
    v = mesh3.vertices
    b = gaussian_bump(np.array([0.0, 0.0, 1.0]), 0.5, 0.4, v)
    assert abs(np.max(b) - 0.5) < 1e-12
    far = v[:, 2] < -0.9
    assert np.max(np.abs(b[far])) < 1e-8


def test_terms_and_bumps_families(mesh2):
    v = mesh2.vertices
    y = evaluate_family("harmonic_bump", v, terms=((2, 0, 0.25), (1, 1, 0.1)))
    expect = 0.25 * real_harmonic(2, 0, v) + 0.1 * real_harmonic(1, 1, v)
    np.testing.assert_allclose(y, expect, rtol=0, atol=1e-14)
    b = evaluate_family("two_bump", v, bumps=((0, 0, 1, 0.3, 0.5), (1, 0, 0, -0.2, 0.6)))
    expect_b = gaussian_bump(np.array([0.0, 0.0, 1.0]), 0.3, 0.5, v) + gaussian_bump(
        np.array([1.0, 0.0, 0.0]), -0.2, 0.6, v
    )
    np.testing.assert_allclose(b, expect_b, rtol=0, atol=1e-14)


def test_csv_family_round_trip(tmp_path, mesh2):
    from hypembed.fileio import write_field_csv

    vals = mesh2.vertices[:, 0] * 0.3
    path = tmp_path / "field.csv"
    write_field_csv(path, vals, ["u"])
    got = evaluate_family("csv", mesh2.vertices, csv_path=str(path))
    np.testing.assert_array_equal(got, vals)


def test_csv_family_wrong_count(tmp_path, mesh2):
    from hypembed.fileio import write_field_csv

    path = tmp_path / "short.csv"
    write_field_csv(path, np.zeros(5), ["u"])
    with pytest.raises(ValueError, match=r"has 5 values, mesh needs \d+"):
        evaluate_family("csv", mesh2.vertices, csv_path=str(path))


def test_unknown_family(mesh2):
    with pytest.raises(ValueError, match="family"):
        evaluate_family("nope", mesh2.vertices)
    assert "round" in FAMILY_NAMES and "csv" in FAMILY_NAMES


def test_curvature_margin_and_admissibility(mesh3):
    cm = ConformalMetric(mesh3, np.zeros(mesh3.nv), 1.0)
    assert abs(curvature_margin(cm, 2.0) - 3.0) < 1e-12
    require_admissible(cm, 0.5)
    # a wild conformal factor drives min(K + kappa) negative
    u = 1.5 * real_harmonic(2, 0, mesh3.vertices)
    bad = ConformalMetric(mesh3, u, 1.0)
    assert curvature_margin(bad, 0.01) < 0
    with pytest.raises(HypothesisError, match="curvature hypothesis"):
        require_admissible(bad, 0.01)


# ---- configuration parser --------------------------------------------


def test_defaults_from_empty_config():
    cfg = parse_config("")
    assert cfg.kappa == 1.0 and cfg.level == 4
    assert cfg.metric == "round" and cfg.s == "zero"
    assert cfg.threads == 1 and cfg.deterministic is True
    assert cfg.output_dir == "out"


def test_round_trip_dict():
    cfg = parse_config("kappa = 2.5\nlevel = 3\nmetric = harmonic_bump\n")
    d = config_as_dict(cfg)
    assert d["kappa"] == 2.5 and d["level"] == 3 and d["metric"] == "harmonic_bump"


def test_comments_and_blank_lines():
    cfg = parse_config("# a comment\n\nkappa = 2\n  # indented comment\nlevel=2\n")
    assert cfg.kappa == 2.0 and cfg.level == 2


def test_all_problems_collected_with_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config("bogus = 3\nkappa = 2\nkappa = 3\nlevel = 99\n")
    msgs = exc.value.problems
    assert any("line 1" in m and "unknown key" in m for m in msgs)
    assert any("line 3" in m and "duplicate" in m for m in msgs)
    assert any("level must be in 0..7" in m for m in msgs)


def test_negative_kappa_message():
    with pytest.raises(ConfigError, match="kappa must be positive"):
        parse_config("kappa = -1\n")


def test_bad_value_types_reported():
    with pytest.raises(ConfigError) as exc:
        parse_config("kappa = fast\nthreads = 0\nverbosity = 9\n")
    joined = "\n".join(exc.value.problems)
    assert "kappa" in joined and "threads" in joined and "verbosity" in joined


def test_family_validation_in_config():
    with pytest.raises(ConfigError, match="metric"):
        parse_config("metric = wiggly\n")
    with pytest.raises(ConfigError, match="csv"):
        parse_config("metric = csv\n")  # csv family requires a path


def test_term_and_bump_lists():
    cfg = parse_config("metric = harmonic_bump\nmetric_terms = 2:0:0.25, 3:2:0.1\n")
    assert cfg.metric_terms == ((2, 0, 0.25), (3, 2, 0.1))
    cfg2 = parse_config("s = two_bump\ns_bumps = 0:0:1:0.3:0.5\n")
    assert cfg2.s_bumps == ((0.0, 0.0, 1.0, 0.3, 0.5),)
