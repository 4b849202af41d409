"""Image encoders behind one `encode(images) -> (n, dim) float32` interface.

`ClipEncoder` wraps the pretrained CLIP ViT-B/32 vision tower (via
`transformers`); its weights are fixed, so outputs are deterministic.
`ProjectionEncoder` is a dependency-free stand-in for offline environments:
a fixed random projection of downsampled pixels, deterministic by
construction. Both emit unnormalized embeddings; normalization belongs to
the consumer's preprocessing pipeline.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PROJECTION_SEED = 0x454D4231  # fixed: "EMB1"; the encoder is a pure function
PROJECTION_SIDE = 32


class ProjectionEncoder:
    """Deterministic offline encoder: resize, flatten, fixed random projection."""

    name = "projection"

    def __init__(self, dim: int = 512):
        self.dim = int(dim)
        gen = np.random.default_rng(PROJECTION_SEED)
        flat = PROJECTION_SIDE * PROJECTION_SIDE * 3
        self._matrix = gen.standard_normal((flat, self.dim)).astype(np.float32)
        self._matrix /= np.sqrt(flat, dtype=np.float32)

    def encode(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            small = img.convert("RGB").resize(
                (PROJECTION_SIDE, PROJECTION_SIDE), Image.BILINEAR
            )
            pixels = np.asarray(small, dtype=np.float32).reshape(-1) / 255.0
            # per-image matvec: the row's value never depends on its batch
            rows.append(pixels @ self._matrix)
        return np.stack(rows)


class ClipEncoder:
    """CLIP ViT-B/32 image features; requires torch + transformers with weights."""

    name = "clip"

    def __init__(self, model_name: str = "openai/clip-vit-base-patch32",
                 device: str = "cpu"):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_name).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_name)
        self.dim = int(self.model.config.projection_dim)

    def encode(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self.processor(images=[im.convert("RGB") for im in images],
                                return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def make_encoder(kind: str, dim: int = 512, device: str = "cpu"):
    if kind == "projection":
        return ProjectionEncoder(dim)
    if kind == "clip":
        return ClipEncoder(device=device)
    raise ValueError(f"unknown encoder {kind!r}; use 'clip' or 'projection'")
