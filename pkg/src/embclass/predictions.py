"""Prediction containers shared by the classifiers, fusion, and evaluation.

A PredictionSet is the common output of every classifier variant: one class
id per sample, aligned to sample ids so downstream metrics can verify they
are scoring the set they think they are.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .store import Labels


@dataclass(eq=False)
class PredictionSet:
    """One predicted class id per sample, with id alignment and provenance."""

    sample_ids: tuple[str, ...]
    class_ids: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.sample_ids = tuple(str(s) for s in self.sample_ids)
        self.class_ids = np.ascontiguousarray(self.class_ids, dtype=np.int64)
        if self.class_ids.ndim != 1:
            raise ValueError("class_ids must be 1-D")
        if len(self.sample_ids) != len(self.class_ids):
            raise ValueError("sample_ids and class_ids have different lengths")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample_ids must be unique")
        if self.class_ids.size and self.class_ids.min() < 0:
            raise ValueError("class ids must be non-negative")

    def __len__(self) -> int:
        return len(self.class_ids)


@dataclass(eq=False)
class GroundTruth:
    """Label sets aligned to sample ids, plus the authoritative class count."""

    sample_ids: tuple[str, ...]
    labels: Labels
    num_classes: int

    def __post_init__(self):
        self.sample_ids = tuple(str(s) for s in self.sample_ids)
        if len(self.sample_ids) != len(self.labels):
            raise ValueError("sample_ids and labels have different lengths")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.labels.values.size and (
            self.labels.values.min() < 0 or self.labels.values.max() >= self.num_classes
        ):
            raise ValueError("label ids must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    def check_aligned(self, preds: PredictionSet) -> None:
        if preds.sample_ids != self.sample_ids:
            raise ValueError("prediction sample_ids do not match ground truth")
        if preds.class_ids.size and preds.class_ids.max() >= self.num_classes:
            raise ValueError("prediction class id out of range")


@dataclass(eq=False)
class VariantFamily:
    """Named prediction sets over the same samples (templates, ks, modalities)."""

    names: tuple[str, ...]
    members: tuple[PredictionSet, ...] = field(default=())

    def __post_init__(self):
        self.names = tuple(str(n) for n in self.names)
        self.members = tuple(self.members)
        if len(self.names) != len(self.members):
            raise ValueError("names and members have different lengths")
        if not self.members:
            raise ValueError("a variant family needs at least one member")
        ids = self.members[0].sample_ids
        for m in self.members[1:]:
            if m.sample_ids != ids:
                raise ValueError("family members are not aligned on sample_ids")

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return self.members[0].sample_ids

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def union(cls, *families: "VariantFamily") -> "VariantFamily":
        names: list[str] = []
        members: list[PredictionSet] = []
        for fam in families:
            names.extend(fam.names)
            members.extend(fam.members)
        return cls(tuple(names), tuple(members))
