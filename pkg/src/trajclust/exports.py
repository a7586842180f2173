"""Deterministic CSV/JSON artifact writers and the run manifest.

All text artifacts are UTF-8 and newline-terminated.  Matrix and coordinate
values are written with 12 significant digits, so identical inputs always
produce identical bytes.  The manifest records the artifact inventory with
checksums plus the effective configuration and its hash; it deliberately
contains no timestamps.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .spectral import ClusterResult, SpectralEmbedding, eigengaps

MANIFEST_NAME = "manifest.json"


def format_value(x: float) -> str:
    return f"{float(x):.12g}"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def write_matrix_csv(path, matrix: np.ndarray, ids) -> None:
    """Square matrix with the sequence ids as header row and row labels."""
    matrix = np.asarray(matrix, dtype=float)
    ids = list(ids)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ParameterError("matrix must be square")
    if len(ids) != matrix.shape[0]:
        raise ParameterError(
            f"matrix is {matrix.shape[0]}x{matrix.shape[0]} but {len(ids)} ids given"
        )
    lines = ["id," + ",".join(ids)]
    for name, row in zip(ids, matrix):
        lines.append(name + "," + ",".join(format_value(v) for v in row))
    write_text(Path(path), "\n".join(lines) + "\n")


def read_matrix_csv(path):
    """Inverse of write_matrix_csv; returns (ids, matrix)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"matrix file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines:
        raise DataError(f"{path}: empty matrix file")
    header = lines[0].split(",")
    if header[0] != "id":
        raise DataError(f"{path}:1: expected an \"id\" header column")
    ids = header[1:]
    n = len(ids)
    if len(lines) - 1 != n:
        raise DataError(f"{path}: header names {n} ids but {len(lines) - 1} rows follow")
    matrix = np.empty((n, n))
    for r, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n + 1:
            raise DataError(f"{path}:{r}: expected {n + 1} cells, got {len(cells)}")
        if cells[0] != ids[r - 2]:
            raise DataError(
                f"{path}:{r}: row id {cells[0]!r} does not match header id "
                f"{ids[r - 2]!r}"
            )
        try:
            matrix[r - 2] = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{r}: invalid number: {exc}") from exc
    return ids, matrix


def write_eigenvalues_csv(path, eigenvalues) -> None:
    lines = ["index,eigenvalue"]
    for i, value in enumerate(np.asarray(eigenvalues, dtype=float)):
        lines.append(f"{i},{format_value(value)}")
    write_text(Path(path), "\n".join(lines) + "\n")


def write_eigengaps_csv(path, eigenvalues) -> None:
    lines = ["index,eigengap"]
    for i, value in enumerate(eigengaps(np.asarray(eigenvalues, dtype=float))):
        lines.append(f"{i},{format_value(value)}")
    write_text(Path(path), "\n".join(lines) + "\n")


def write_coordinates_csv(path, coordinates: np.ndarray, ids) -> None:
    coordinates = np.asarray(coordinates, dtype=float)
    ids = list(ids)
    if coordinates.ndim != 2 or coordinates.shape[0] != len(ids):
        raise ParameterError("need one coordinate row per id")
    e_dim = coordinates.shape[1]
    lines = ["id," + ",".join(f"e{j + 1}" for j in range(e_dim))]
    for name, row in zip(ids, coordinates):
        lines.append(name + "," + ",".join(format_value(v) for v in row))
    write_text(Path(path), "\n".join(lines) + "\n")


def read_coordinates_csv(path):
    """Inverse of write_coordinates_csv; returns (ids, coordinates)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"coordinates file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines or not lines[0].startswith("id,"):
        raise DataError(f"{path}: missing coordinates header")
    e_dim = len(lines[0].split(",")) - 1
    ids = []
    rows = []
    for r, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != e_dim + 1:
            raise DataError(f"{path}:{r}: expected {e_dim + 1} cells, got {len(cells)}")
        ids.append(cells[0])
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{r}: invalid number: {exc}") from exc
    return ids, np.array(rows, dtype=float).reshape(len(ids), e_dim)


def write_labels_csv(path, ids, labels) -> None:
    ids = list(ids)
    labels = list(labels)
    if len(ids) != len(labels):
        raise ParameterError("need one label per id")
    lines = ["id,label"]
    for name, label in zip(ids, labels):
        lines.append(f"{name},{label}")
    write_text(Path(path), "\n".join(lines) + "\n")


def read_labels_csv(path):
    """Inverse of write_labels_csv; returns (ids, labels as ints)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"labels file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines or lines[0] != "id,label":
        raise DataError(f"{path}: missing \"id,label\" header")
    ids = []
    labels = []
    for r, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise DataError(f"{path}:{r}: expected 2 cells, got {len(cells)}")
        ids.append(cells[0])
        try:
            labels.append(int(cells[1]))
        except ValueError as exc:
            raise DataError(f"{path}:{r}: invalid label: {cells[1]!r}") from exc
    return ids, np.array(labels, dtype=np.int64)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def update_manifest(out_dir, files=(), fields=None) -> dict:
    """Merge file checksums and top-level fields into the run manifest.

    The manifest is rewritten with sorted keys, so the final content does
    not depend on which stage wrote which part first.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    manifest = {"files": {}}
    if manifest_path.exists():
        try:
            with open(manifest_path, encoding="utf-8") as handle:
                manifest = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read existing manifest {manifest_path}: {exc}") from exc
        manifest.setdefault("files", {})
    for name in files:
        target = out_dir / name
        manifest["files"][name] = {
            "sha256": file_sha256(target),
            "bytes": target.stat().st_size,
        }
    if fields:
        manifest.update(fields)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    write_text(manifest_path, text)
    return manifest


def export_results(
    dist,
    emb: SpectralEmbedding,
    clusters: ClusterResult,
    out_dir,
    ids,
    seed=None,
    config=None,
    config_hash=None,
) -> dict:
    """Write the five result artifacts plus the manifest.

    Files: similarity.csv, distance.csv, eigenvalues.csv, coordinates.csv,
    labels.csv.  All inputs must describe the same N sequences.
    """
    ids = list(ids)
    n = dist.n
    if len(ids) != n:
        raise ParameterError(f"distance set covers {n} sequences but {len(ids)} ids given")
    if emb.coordinates.shape[0] != n:
        raise ParameterError(
            f"embedding covers {emb.coordinates.shape[0]} sequences, expected {n}"
        )
    if np.asarray(clusters.labels).shape[0] != n:
        raise ParameterError(
            f"cluster labels cover {np.asarray(clusters.labels).shape[0]} "
            f"sequences, expected {n}"
        )
    out_dir = Path(out_dir)
    write_matrix_csv(out_dir / "similarity.csv", dist.similarity, ids)
    write_matrix_csv(out_dir / "distance.csv", dist.distance, ids)
    write_eigenvalues_csv(out_dir / "eigenvalues.csv", emb.eigenvalues)
    write_coordinates_csv(out_dir / "coordinates.csv", emb.coordinates, ids)
    write_labels_csv(out_dir / "labels.csv", ids, np.asarray(clusters.labels).tolist())
    fields = {
        "n": n,
        "e_dim": emb.e_dim,
        "k": int(clusters.centroids.shape[0]),
        "seed": seed,
        "config": config,
        "config_hash": config_hash,
    }
    return update_manifest(
        out_dir,
        files=[
            "similarity.csv",
            "distance.csv",
            "eigenvalues.csv",
            "coordinates.csv",
            "labels.csv",
        ],
        fields=fields,
    )
