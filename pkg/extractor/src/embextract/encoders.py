"""Image and text encoders behind one minimal dual-encoder interface.

An encoder exposes ``encode_images(pil_images)`` and ``encode_texts(strings)``
returning float32 ``(n, d)`` feature matrices, plus provenance attributes
(``model_id``, ``backbone``, ``revision``, ``resolution``). Encoders own
their preprocessing (resize/tokenize); outputs need not be normalized, since
stores are L2-normalized at write time.

The built-in hash encoder is deterministic and weight-free, for exercising
the full pipeline without downloads. Hub encoders wrap dual-encoder models
from public hubs, pinned by revision id; they need the ``hub`` extra and
network access on first use; no weights ship with this package.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np
from PIL import Image


class DecodeError(Exception):
    """An input image exists but cannot be decoded."""


def decode_image(path) -> Image.Image:
    """Decode one image file to RGB. Missing files raise FileNotFoundError;
    any other failure is a DecodeError (subject to the job's skip switch)."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except FileNotFoundError:
        raise
    except Exception as e:
        raise DecodeError(f"cannot decode {path}: {e}") from e


class Encoder(Protocol):
    model_id: str
    backbone: str
    revision: str
    resolution: int

    def encode_images(self, images: Sequence[Image.Image]) -> np.ndarray: ...

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEncoder:
    """Deterministic, weight-free featurizer.

    Images go through a fixed seeded random projection of their resized
    pixels; texts become a signed character-trigram bag, so prompts naming
    the same class share mass that prompts naming different classes do not.
    Identical inputs always produce identical rows.
    """

    def __init__(self, dim: int = 64, resolution: int = 16):
        if dim < 2 or resolution < 2:
            raise ValueError("hash encoder needs dim >= 2 and resolution >= 2")
        self.dim = dim
        self.resolution = resolution
        self.model_id = "hash"
        self.backbone = f"proj{dim}-px{resolution}"
        self.revision = "builtin"
        seed = int.from_bytes(
            hashlib.blake2b(f"embextract:{dim}:{resolution}".encode(), digest_size=8).digest(),
            "little",
        )
        in_dim = resolution * resolution * 3
        proj = np.random.default_rng(seed).standard_normal((in_dim, dim))
        self._proj = (proj / np.sqrt(in_dim)).astype(np.float32)

    def encode_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        res = self.resolution
        pixels = np.stack([
            np.asarray(img.resize((res, res), Image.Resampling.BILINEAR), dtype=np.float32)
            for img in images
        ])
        flat = pixels.reshape(len(images), -1) / 255.0 - 0.5
        return flat @ self._proj

    def _add(self, row: np.ndarray, key: str, weight: float) -> None:
        digest = hashlib.blake2b(
            key.encode("utf-8"), digest_size=8, person=b"embxtract"
        ).digest()
        h = int.from_bytes(digest, "little")
        row[h % self.dim] += weight * (1.0 - 2.0 * ((h >> 63) & 1))

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            padded = f"  {text}  "
            for i in range(len(padded) - 2):
                self._add(out[row], padded[i:i + 3], 1.0)
            # words carry most of the mass so that two prompts naming the
            # same thing stay closer than the trigram collision noise
            for token in text.split():
                token = token.strip(".,;:!?")
                if token:
                    self._add(out[row], f"w:{token}", 4.0)
        return out


class HubEncoder:
    """Dual-encoder model from a public hub, pinned by revision.

    Construction downloads/loads the pinned weights, so it needs the ``hub``
    extra (torch + transformers) and network access on first use.
    """

    def __init__(self, model_id: str, revision: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoProcessor
        except ImportError as e:  # pragma: no cover - env without the extra
            raise RuntimeError(
                "hub encoders need the 'hub' extra: pip install embextract[hub]"
            ) from e
        self._torch = torch
        self.model_id = model_id
        self.revision = revision
        self.device = device
        self._processor = AutoProcessor.from_pretrained(model_id, revision=revision)
        self._model = AutoModel.from_pretrained(model_id, revision=revision)
        self._model.to(device).eval()
        self.backbone = str(getattr(self._model.config, "model_type", ""))
        size = getattr(getattr(self._processor, "image_processor", None), "size", None)
        self.resolution = int(size["height"]) if isinstance(size, dict) and "height" in size else 0

    def encode_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(images=list(images), return_tensors="pt").to(self.device)
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._processor(
                text=list(texts), padding=True, truncation=True, return_tensors="pt"
            ).to(self.device)
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def load_encoder(spec: str, device: str = "cpu") -> Encoder:
    """Build an encoder from a spec string.

    ``hash[:dim[:resolution]]`` gives the built-in featurizer;
    ``hub:<model_id>@<revision>`` loads a pinned hub model.
    """
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        parts = [p for p in rest.split(":") if p]
        dim = int(parts[0]) if parts else 64
        resolution = int(parts[1]) if len(parts) > 1 else 16
        return HashEncoder(dim=dim, resolution=resolution)
    if kind == "hub":
        model_id, sep, revision = rest.partition("@")
        if not sep or not model_id or not revision:
            raise ValueError(
                f"hub spec {spec!r} must be 'hub:<model_id>@<revision>' (pinned revision)"
            )
        return HubEncoder(model_id, revision, device=device)
    raise ValueError(f"unknown encoder spec {spec!r} (expected 'hash:...' or 'hub:...')")
