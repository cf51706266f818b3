"""Artifact round-trips and deterministic formatting."""

import json

import numpy as np
import pytest

from hypembed.fileio import (
    columns_to_sym,
    read_field_csv,
    read_obj,
    sym_to_columns,
    write_field_csv,
    write_json,
    write_obj,
)


def test_obj_round_trip(tmp_path, mesh2):
    path = tmp_path / "m.obj"
    write_obj(path, mesh2.vertices * 1.37, mesh2.faces)
    verts, faces = read_obj(path)
    np.testing.assert_array_equal(verts, mesh2.vertices * 1.37)
    np.testing.assert_array_equal(faces, mesh2.faces)


def test_obj_bytes_deterministic(tmp_path, mesh2):
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    write_obj(p1, mesh2.vertices, mesh2.faces)
    write_obj(p2, mesh2.vertices, mesh2.faces)
    b = p1.read_bytes()
    assert b == p2.read_bytes()
    assert b"\r" not in b


def test_field_csv_round_trip(tmp_path, rng):
    path = tmp_path / "f.csv"
    vals = rng.normal(size=(37, 2)) * np.array([1e-17, 1e12])
    write_field_csv(path, vals, ["tiny", "huge"])
    got, names = read_field_csv(path)
    assert names == ["tiny", "huge"]
    np.testing.assert_array_equal(got, vals)  # repr floats round-trip exactly


def test_field_csv_single_column(tmp_path):
    path = tmp_path / "s.csv"
    write_field_csv(path, np.array([1.0, 0.5, -0.25]), ["val"])
    text = path.read_text()
    assert text.splitlines()[0] == "vertex_index,val"
    got, names = read_field_csv(path)
    np.testing.assert_array_equal(got, [1.0, 0.5, -0.25])


def test_json_sorted_and_stable(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {"zeta": 1, "alpha": {"b": 2.5, "a": [1, 2]}})
    text = path.read_text()
    assert text.index('"alpha"') < text.index('"zeta"')
    assert json.loads(text)["alpha"]["b"] == 2.5


def test_sym_columns_round_trip(rng):
    a = rng.normal(size=(10, 2, 2))
    sym = 0.5 * (a + np.transpose(a, (0, 2, 1)))
    cols = sym_to_columns(sym)
    assert cols.shape == (10, 3)
    np.testing.assert_array_equal(columns_to_sym(cols), sym)


def test_read_obj_rejects_garbage(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 1 2\n")
    with pytest.raises(ValueError):
        read_obj(path)
