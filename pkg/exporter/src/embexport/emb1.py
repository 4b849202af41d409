"""EMB1 binary matrix files and their JSON manifests.

Layout (bit-exact): magic bytes "EMB1"; rows then cols as unsigned 32-bit
little-endian; rows*cols IEEE-754 32-bit floats, little-endian, row-major.
The manifest is JSON with "classes", per-row "labels" (class indices) and
"source".
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"


def write_emb1(path, data: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("EMB1 stores a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_emb1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an EMB1 file")
    rows, cols = struct.unpack("<II", raw[4:12])
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols)


def write_manifest(path, classes, labels, source, skipped=None,
                   embedding_dim: int | None = None) -> None:
    doc = {"classes": list(classes), "labels": [int(x) for x in labels], "source": source}
    if skipped is not None:
        doc["skipped"] = list(skipped)
    if embedding_dim is not None:
        doc["embedding_dim"] = int(embedding_dim)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
