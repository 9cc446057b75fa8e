"""Language-based classification from prompt embeddings.

Class prototypes are means of template embeddings; classification is
argmax cosine between an image row and the C prototype rows. Because
cosine is scale-invariant per row, renormalizing prototypes never changes
predictions; the classifier normalizes internally either way, so it also
accepts raw (unrenormalized) mean matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import store as store_mod
from .knn import classify_knn, top_k
from .numerics import l2_normalize
from .predictions import PredictionSet
from .store import DatasetManifest, EmbeddingStore, Labels, PromptBank

NO_CONTEXT = "{}"


def is_no_context(template: str) -> bool:
    """True for the bare class-name template."""
    return template.strip() == NO_CONTEXT


@dataclass(frozen=True)
class TemplateSelection:
    """An ordered subset of a prompt bank's templates, with a display name."""

    template_ids: tuple[int, ...]
    name: str

    def __post_init__(self):
        if not self.template_ids:
            raise ValueError("template selection must be non-empty")
        if len(set(self.template_ids)) != len(self.template_ids):
            raise ValueError("template selection has duplicate ids")

    def validate_for(self, bank: PromptBank) -> None:
        for t in self.template_ids:
            if not 0 <= t < bank.num_templates:
                raise ValueError(f"template id {t} not in bank (T={bank.num_templates})")


def single_template(bank: PromptBank, template_id: int) -> TemplateSelection:
    sel = TemplateSelection((template_id,), name=bank.templates[template_id])
    sel.validate_for(bank)
    return sel


def preset_avg(bank: PromptBank) -> TemplateSelection:
    """The standard-template ensemble: every template except the bare name."""
    ids = tuple(t for t, tpl in enumerate(bank.templates) if not is_no_context(tpl))
    if not ids:
        raise ValueError("bank has no standard templates")
    return TemplateSelection(ids, name="avg")


def preset_avg_prime(bank: PromptBank) -> TemplateSelection:
    """The standard ensemble plus the bare class-name prompt."""
    return TemplateSelection(tuple(range(bank.num_templates)), name="avg_prime")


def named_preset(bank: PromptBank, name: str) -> TemplateSelection:
    if name == "avg":
        return preset_avg(bank)
    if name == "avg_prime":
        return preset_avg_prime(bank)
    if name.startswith("template:"):
        return single_template(bank, int(name.split(":", 1)[1]))
    raise ValueError(f"unknown template preset {name!r}")


@dataclass(eq=False)
class ClassPrototypeMatrix:
    """C x d prototype rows plus the provenance needed to rebuild them."""

    matrix: np.ndarray
    template_ids: tuple[int, ...]
    name_set: str | None
    renormalized: bool

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise ValueError("prototype matrix must be 2-D")
        if not np.isfinite(self.matrix).all():
            raise ValueError("prototype matrix contains NaN or Inf")
        if self.renormalized:
            norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-3):
                raise ValueError("renormalized prototypes must have unit rows")

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def describe(self) -> str:
        ids = ",".join(str(t) for t in self.template_ids)
        return f"templates=[{ids}] name_set={self.name_set} renormalized={self.renormalized}"


def build_prototypes(
    bank: PromptBank, sel: TemplateSelection, renormalize: bool = True
) -> ClassPrototypeMatrix:
    """Per class, the mean of the selected template embeddings.

    Means accumulate in float64 and round once to float32; a one-template
    selection therefore reproduces the bank rows bit-for-bit (before any
    renormalization). Template order within the selection cannot matter:
    the mean is computed from a sum over rows taken in bank order.
    """
    sel.validate_for(bank)
    blocks = [bank.template_rows(t).astype(np.float64) for t in sorted(sel.template_ids)]
    mean = np.mean(blocks, axis=0).astype(np.float32)
    if renormalize:
        mean = l2_normalize(mean)
    return ClassPrototypeMatrix(
        matrix=mean,
        template_ids=tuple(sel.template_ids),
        name_set=bank.manifest.name_set,
        renormalized=renormalize,
    )


def classify_zeroshot(
    images: EmbeddingStore | np.ndarray,
    protos: ClassPrototypeMatrix,
    *,
    threads: int = 1,
) -> PredictionSet:
    """Argmax cosine against the prototypes; ties go to the smaller class id."""
    neighbors = top_k(images, protos.matrix, 1, threads=threads)
    ids = images.sample_ids if isinstance(images, EmbeddingStore) else tuple(
        str(i) for i in range(len(neighbors))
    )
    return PredictionSet(
        ids, neighbors.indices[:, 0], provenance=f"zeroshot({protos.describe()})"
    )


def prompt_space_knn(
    images: EmbeddingStore | np.ndarray,
    bank: PromptBank,
    k: int,
    *,
    threads: int = 1,
) -> PredictionSet:
    """k-NN over all T*C prompt rows, each labeled with its class."""
    preds = classify_knn(images, bank.store, bank.labels, k, threads=threads)
    return PredictionSet(
        preds.sample_ids, preds.class_ids, provenance=f"prompt-knn(k={k})"
    )


def save_prototypes(protos: ClassPrototypeMatrix, path) -> None:
    """Persist a prototype matrix as a text-role container, one row per class.

    Only renormalized matrices are stored: the container validates unit rows
    for text embeddings, and the classifier's argmax is invariant to the flag.
    """
    if not protos.renormalized:
        raise ValueError("only renormalized prototype matrices can be stored")
    C = protos.num_classes
    store = EmbeddingStore(
        data=protos.matrix,
        sample_ids=tuple(f"class{c}" for c in range(C)),
        role="text",
    )
    manifest = DatasetManifest(
        num_classes=C,
        name_set=protos.name_set,
        provenance={
            "kind": "prototypes",
            "template_ids": list(protos.template_ids),
            "renormalized": True,
        },
    )
    store_mod.save_store(store, Labels.from_single(np.arange(C)), manifest, path)


def load_prototypes(path) -> ClassPrototypeMatrix:
    """Read back a prototype matrix written by save_prototypes."""
    store, labels, manifest = store_mod.load_store(path)
    prov = manifest.provenance
    if prov.get("kind") != "prototypes":
        raise ValueError(f"{path} does not hold a prototype matrix")
    if not np.array_equal(labels.single(), np.arange(store.n)):
        raise ValueError(f"{path}: prototype rows must be labeled 0..C-1 in order")
    return ClassPrototypeMatrix(
        matrix=store.data,
        template_ids=tuple(int(t) for t in prov["template_ids"]),
        name_set=manifest.name_set,
        renormalized=True,
    )
