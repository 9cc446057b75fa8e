"""Extraction job description: what to encode, with what, into which files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .templates import DEFAULT_TEMPLATES, validate_template


@dataclass
class ExtractionJob:
    """One extraction run over an image list and/or a prompt grid.

    ``class_names`` is the instantiated name set and must cover every class;
    its length defines C. ``labels`` aligns to ``images`` by position. Row
    order of every output is a pure function of the input order.
    """

    encoder: str
    class_names: tuple[str, ...]
    name_set: str = "openai_plus"
    templates: tuple[str, ...] = DEFAULT_TEMPLATES
    images: tuple[str, ...] = ()
    labels: np.ndarray | None = None
    split: str = "train"
    batch_size: int = 32
    device: str = "cpu"
    on_decode_error: str = "abort"
    images_out: str | Path | None = None
    bank_out: str | Path | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.encoder:
            raise ValueError("job needs an encoder spec")
        self.templates = tuple(validate_template(t) for t in self.templates)
        if not self.templates:
            raise ValueError("template list is empty")
        self.class_names = tuple(str(n) for n in self.class_names)
        if not self.class_names:
            raise ValueError("class-name set is empty")
        for c, name in enumerate(self.class_names):
            if not name.strip():
                raise ValueError(f"class {c} has no name")
        self.images = tuple(str(p) for p in self.images)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.images),):
                raise ValueError("labels must align one-to-one with images")
            if self.labels.size and not (
                0 <= self.labels.min() and self.labels.max() < self.num_classes
            ):
                raise ValueError("image labels outside [0, num_classes)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.on_decode_error not in ("abort", "skip"):
            raise ValueError("on_decode_error must be 'abort' or 'skip'")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)
