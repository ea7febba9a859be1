"""Point-cloud and annotation file I/O.

xyz is the canonical exchange format: one point per line, three finite
decimal reals, whitespace separated, blank lines ignored. The writer emits
shortest round-tripping reprs so write -> load -> write is bit-identical.
ASCII PLY is read for interop (vertex element only); .npy holds a plain
(N, 3) array. Annotations travel as JSON.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .cloud import AnnotationSet, PointCloud
from .errors import ArgumentError, EmptyCloudError, ParseError

FORMATS = ("xyz", "ply", "npy")


def detect_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext in FORMATS:
        return ext
    raise ArgumentError(f"cannot infer cloud format from {path!r}; pass one of {FORMATS}")


def load_cloud(path, format: str | None = None) -> PointCloud:
    """Load a cloud, preserving file order exactly; no deduplication."""
    fmt = format or detect_format(path)
    if fmt == "xyz":
        return _load_xyz(path)
    if fmt == "ply":
        return _load_ply(path)
    if fmt == "npy":
        return _load_npy(path)
    raise ArgumentError(f"unknown cloud format {fmt!r}; expected one of {FORMATS}")


def _parse_coord(token: str, path, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"expected a decimal real, got {token!r}", path, lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite coordinate {token!r}", path, lineno)
    return value


def _load_xyz(path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ParseError(f"expected 3 coordinates, got {len(parts)}", path, lineno)
            rows.append([_parse_coord(tok, path, lineno) for tok in parts])
    if not rows:
        raise EmptyCloudError("file contains no points", path)
    return PointCloud(np.array(rows, dtype=np.float64))


def _load_ply(path) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path, 1)

    # Header: collect (element, count) in order and the vertex property names.
    elements = []  # (name, count, n_properties)
    vertex_props: list[str] = []
    in_vertex = False
    data_start = None
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError("only ascii PLY is supported", path, lineno)
        elif parts[0] == "element":
            if len(parts) != 3:
                raise ParseError("malformed element declaration", path, lineno)
            try:
                count = int(parts[2])
            except ValueError:
                raise ParseError(f"bad element count {parts[2]!r}", path, lineno) from None
            elements.append([parts[1], count, 0])
            in_vertex = parts[1] == "vertex"
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", path, lineno)
            elements[-1][2] += 1
            if in_vertex:
                vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            data_start = lineno + 1
            break
    if data_start is None:
        raise ParseError("missing end_header", path)
    vertex_counts = [e for e in elements if e[0] == "vertex"]
    if not vertex_counts:
        raise ParseError("no vertex element declared", path)
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties", path) from None

    rows = []
    cursor = data_start
    for name, count, _nprops in elements:
        if name != "vertex":
            cursor += count
            continue
        for i in range(count):
            lineno = cursor + i
            if lineno - 1 >= len(lines):
                raise ParseError("file ends before all vertices are read", path, lineno)
            parts = lines[lineno - 1].split()
            if len(parts) < len(vertex_props):
                raise ParseError(
                    f"expected {len(vertex_props)} vertex fields, got {len(parts)}",
                    path,
                    lineno,
                )
            rows.append([_parse_coord(parts[c], path, lineno) for c in cols])
        cursor += count
    if not rows:
        raise EmptyCloudError("PLY declares zero vertices", path)
    return PointCloud(np.array(rows, dtype=np.float64))


def _load_npy(path) -> PointCloud:
    try:
        arr = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise ParseError(f"not a readable .npy file: {exc}", path) from None
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ParseError(f"expected an (N, 3) array, got shape {arr.shape}", path)
    if arr.shape[0] == 0:
        raise EmptyCloudError("array contains no points", path)
    if not np.all(np.isfinite(arr)):
        raise ParseError("array contains non-finite coordinates", path)
    return PointCloud(arr)


def save_cloud(path, cloud: PointCloud, format: str | None = None) -> None:
    fmt = format or detect_format(path)
    if fmt == "xyz":
        save_xyz(path, cloud.points)
    elif fmt == "ply":
        save_ply(path, cloud.points)
    elif fmt == "npy":
        np.save(path, cloud.points)
    else:
        raise ArgumentError(f"unknown cloud format {fmt!r}; expected one of {FORMATS}")


def save_xyz(path, points: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in np.asarray(points, dtype=np.float64):
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def save_ply(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {pts.shape[0]}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        fh.write("end_header\n")
        for p in pts:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def load_annotations(path) -> AnnotationSet:
    """Read a JSON annotation list: [{"xyz": [x,y,z], "semantic_id": int}, ...]."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(data, list) or not data:
        raise ParseError("expected a non-empty JSON list of annotations", path)
    xyz, ids = [], []
    for i, item in enumerate(data):
        try:
            xyz.append([float(v) for v in item["xyz"]])
            ids.append(int(item["semantic_id"]))
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"annotation #{i} lacks valid 'xyz'/'semantic_id'", path) from None
    try:
        return AnnotationSet(np.array(xyz, dtype=np.float64), np.array(ids, dtype=np.int64))
    except ArgumentError as exc:
        raise ParseError(str(exc), path) from None


def save_annotations(path, annotations: AnnotationSet) -> None:
    data = [
        {"xyz": [float(v) for v in p], "semantic_id": int(s)}
        for p, s in zip(annotations.xyz, annotations.semantic_ids)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
