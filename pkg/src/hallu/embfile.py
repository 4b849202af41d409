"""Embedding container and file formats the detector consumes.

EMB1 binary layout (bit-exact): magic bytes "EMB1", then rows and cols as
unsigned 32-bit little-endian, then rows*cols IEEE-754 32-bit floats,
little-endian, row-major. A sidecar JSON manifest carries
{"classes": [...], "labels": [per-row class index], "source": ...}.
A CSV with a header row and the class label in the first column is accepted
as an alternative ingestion path.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"EMB1"


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Rows of embeddings with per-row class labels and file provenance."""

    data: np.ndarray  # (S, D) float64
    labels: np.ndarray  # (S,) indices into classes
    classes: tuple[str, ...]
    source: object = None

    def __init__(self, data, labels, classes, source=None):
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 2:
            raise InputError("embedding data must be a 2-D matrix")
        if not np.all(np.isfinite(arr)):
            raise InputError("embedding data contains non-finite entries")
        lab = np.asarray(labels, dtype=np.int64)
        if lab.shape != (arr.shape[0],):
            raise InputError("labels must align with rows")
        classes = tuple(str(c) for c in classes)
        if lab.size and (lab.min() < 0 or lab.max() >= len(classes)):
            raise InputError("labels fall outside the declared class set")
        arr = np.array(arr)
        arr.setflags(write=False)
        lab = np.array(lab)
        lab.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "source", source)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]

    def rows_of_class(self, class_index: int) -> np.ndarray:
        return self.data[self.labels == class_index]


def write_emb1(path, data) -> None:
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    if arr.ndim != 2:
        raise InputError("EMB1 stores a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_emb1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise InputError(f"{path}: not an EMB1 file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * rows * cols
    if len(raw) != expected:
        raise InputError(f"{path}: EMB1 payload is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols)


def write_manifest(path, classes, labels, source, extra: dict | None = None) -> None:
    doc = {"classes": list(classes), "labels": [int(x) for x in labels], "source": source}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def load_embedding_matrix(emb_path, manifest_path) -> EmbeddingMatrix:
    data = read_emb1(emb_path)
    manifest = read_manifest(manifest_path)
    try:
        classes, labels = manifest["classes"], manifest["labels"]
    except KeyError as exc:
        raise InputError(f"manifest missing field: {exc}") from exc
    if len(labels) != data.shape[0]:
        raise InputError(f"manifest has {len(labels)} labels for {data.shape[0]} rows")
    return EmbeddingMatrix(data, labels, classes, source=manifest.get("source", str(emb_path)))


def load_embedding_csv(path) -> EmbeddingMatrix:
    """CSV alternative: header row, class label in the first column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        names, rows = [], []
        for rec in reader:
            names.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    if not rows:
        raise InputError(f"{path}: no data rows")
    classes = tuple(sorted(set(names)))
    index = {c: i for i, c in enumerate(classes)}
    labels = [index[n] for n in names]
    return EmbeddingMatrix(np.asarray(rows), labels, classes, source=str(path))
