"""Batch image embedding exporter: EMB1 matrices + JSON manifests."""

from .emb1 import read_emb1, write_emb1, write_manifest
from .encoders import ClipEncoder, ProjectionEncoder, make_encoder
from .export import ExportJob, ExportResult, export

__version__ = "0.1.0"
