"""Walk class-labeled image folders and write one EMB1 matrix + manifest.

Rows are ordered by (class name, lexicographic filename), so a rerun over
the same folders with the same encoder is byte-identical. Unreadable files
are skipped with a warning and recorded in the manifest; output writing is
single-streamed to preserve row order.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .emb1 import write_emb1, write_manifest


@dataclass(frozen=True)
class ExportJob:
    """class name -> image directory, plus batching and output placement."""

    class_dirs: dict[str, Path]
    out_base: Path
    batch_size: int = 32
    encoder: str = "projection"
    dim: int = 512
    device: str = "cpu"

    def __post_init__(self):
        if not self.class_dirs:
            raise ValueError("at least one class directory is required")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        for name, directory in self.class_dirs.items():
            if not Path(directory).is_dir():
                raise ValueError(f"class {name!r}: {directory} is not a directory")

    @property
    def emb_path(self) -> Path:
        base = Path(self.out_base)
        return base if base.suffix == ".emb1" else base.with_suffix(".emb1")

    @property
    def manifest_path(self) -> Path:
        return self.emb_path.with_suffix(".json")


@dataclass
class ExportResult:
    emb_path: Path
    manifest_path: Path
    rows: int
    dim: int
    labels: list[int] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _iter_class_files(job: ExportJob):
    for index, name in enumerate(sorted(job.class_dirs)):
        files = sorted(p for p in Path(job.class_dirs[name]).iterdir() if p.is_file())
        if not files:
            raise ValueError(f"class {name!r} has no files")
        yield index, name, files


def export(job: ExportJob, encoder=None, log=sys.stderr) -> ExportResult:
    """Embed every readable image and write the EMB1 + manifest pair."""
    if encoder is None:
        from .encoders import make_encoder

        encoder = make_encoder(job.encoder, dim=job.dim, device=job.device)

    classes = sorted(job.class_dirs)
    blocks: list[np.ndarray] = []
    labels: list[int] = []
    skipped: list[str] = []
    batch_imgs: list[Image.Image] = []
    batch_labels: list[int] = []

    def flush():
        if batch_imgs:
            blocks.append(encoder.encode(batch_imgs))
            labels.extend(batch_labels)
            for im in batch_imgs:
                im.close()
            batch_imgs.clear()
            batch_labels.clear()

    for index, name, files in _iter_class_files(job):
        readable = 0
        for path in files:
            try:
                img = Image.open(path)
                img.load()
            except Exception as exc:  # unreadable file: skip, warn, record
                print(f"warning: skipping {path}: {exc}", file=log)
                skipped.append(str(path))
                continue
            readable += 1
            batch_imgs.append(img)
            batch_labels.append(index)
            if len(batch_imgs) >= job.batch_size:
                flush()
        if readable == 0:
            raise ValueError(f"class {name!r} has no readable images")
        flush()  # class boundary: keep row order strictly (class, filename)

    data = np.vstack(blocks).astype(np.float32)
    job.emb_path.parent.mkdir(parents=True, exist_ok=True)
    write_emb1(job.emb_path, data)
    write_manifest(
        job.manifest_path, classes, labels,
        source={"encoder": encoder.name,
                "class_dirs": {c: str(job.class_dirs[c]) for c in classes}},
        skipped=skipped, embedding_dim=data.shape[1],
    )
    return ExportResult(job.emb_path, job.manifest_path, data.shape[0], data.shape[1],
                        labels, skipped)
