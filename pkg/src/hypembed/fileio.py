"""Deterministic OBJ and CSV readers and writers.

Floats are written with repr (shortest round-trip decimal), newlines are LF,
and column order is fixed, so repeated runs with identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np


def _fmt(x):
    return repr(float(x))


def write_obj(path, vertices, faces):
    """Wavefront OBJ with chart-coordinate vertices and 1-indexed faces."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces)
    with open(path, "w", newline="\n") as fh:
        for v in vertices:
            fh.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex line needs 3 coordinates")
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def write_field_csv(path, values, names):
    """Vertex fields as CSV with a vertex_index column and fixed headers."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] != len(names):
        raise ValueError(f"{len(names)} names for {values.shape[1]} columns")
    with open(path, "w", newline="\n") as fh:
        fh.write("vertex_index," + ",".join(names) + "\n")
        for i, row in enumerate(values):
            fh.write(str(i) + "," + ",".join(_fmt(x) for x in row) + "\n")


def read_field_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "vertex_index":
            raise ValueError(f"{path}: first column must be vertex_index")
        rows = []
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            parts = raw.strip().split(",")
            if len(parts) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns")
            rows.append([float(p) for p in parts[1:]])
    out = np.array(rows, dtype=float)
    return (out[:, 0] if out.shape[1] == 1 else out), header[1:]


def write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sym_to_columns(t):
    """(V, 2, 2) symmetric tensor to (V, 3) column layout (t11, t12, t22)."""
    t = np.asarray(t)
    return np.stack([t[:, 0, 0], t[:, 0, 1], t[:, 1, 1]], axis=1)


def columns_to_sym(c):
    c = np.asarray(c)
    out = np.empty((len(c), 2, 2))
    out[:, 0, 0] = c[:, 0]
    out[:, 0, 1] = out[:, 1, 0] = c[:, 1]
    out[:, 1, 1] = c[:, 2]
    return out
