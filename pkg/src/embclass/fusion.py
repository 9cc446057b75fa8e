"""Precision-based combination of the language and vision classifiers.

Training estimates per-class precision for both classifiers on the
training split: the vision side from out-of-fold cross-validation
predictions (in-sample k-NN would be optimistically biased by
near-duplicates), the language side from zero-shot predictions over the
full split. At inference the language prediction wins only when the
precision of its predicted class strictly exceeds that of the vision
prediction's class; every tie goes to vision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .knn import K_GRID_DEFAULT, top_k, vote
from .predictions import GroundTruth, PredictionSet
from .store import EmbeddingStore, Labels, PromptBank, data_sha256
from .zeroshot import TemplateSelection, build_prototypes, classify_zeroshot, preset_avg_prime


@dataclass(eq=False)
class PrecisionTable:
    """Per class: TP/FP counts and precision, with undefined classes flagged.

    A class the classifier never predicted has no precision; it carries the
    value 0 and defined=False, so the other modality wins there.
    """

    tp: np.ndarray
    fp: np.ndarray
    precision: np.ndarray
    defined: np.ndarray

    def __post_init__(self):
        self.tp = np.ascontiguousarray(self.tp, dtype=np.int64)
        self.fp = np.ascontiguousarray(self.fp, dtype=np.int64)
        self.precision = np.ascontiguousarray(self.precision, dtype=np.float64)
        self.defined = np.ascontiguousarray(self.defined, dtype=bool)
        shapes = {self.tp.shape, self.fp.shape, self.precision.shape, self.defined.shape}
        if len(shapes) != 1 or self.tp.ndim != 1:
            raise ValueError("precision table arrays must share one (C,) shape")
        if self.precision.size and (self.precision.min() < 0 or self.precision.max() > 1):
            raise ValueError("precision values outside [0, 1]")

    @classmethod
    def from_counts(cls, tp: np.ndarray, fp: np.ndarray) -> "PrecisionTable":
        tp = np.asarray(tp, dtype=np.int64)
        fp = np.asarray(fp, dtype=np.int64)
        if (tp < 0).any() or (fp < 0).any():
            raise ValueError("precision counts must be non-negative")
        total = tp + fp
        defined = total > 0
        precision = np.zeros(len(tp), dtype=np.float64)
        precision[defined] = tp[defined] / total[defined]
        return cls(tp=tp, fp=fp, precision=precision, defined=defined)

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    def to_dict(self) -> dict:
        return {"tp": self.tp.tolist(), "fp": self.fp.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "PrecisionTable":
        return cls.from_counts(np.asarray(doc["tp"]), np.asarray(doc["fp"]))


def per_class_precision(preds: PredictionSet, truth: GroundTruth) -> PrecisionTable:
    """TP/(TP+FP) per predicted class; set-valued truth uses membership."""
    truth.check_aligned(preds)
    correct = truth.labels.contains(preds.class_ids)
    C = truth.num_classes
    tp = np.bincount(preds.class_ids[correct], minlength=C)
    fp = np.bincount(preds.class_ids[~correct], minlength=C)
    return PrecisionTable.from_counts(tp, fp)


@dataclass(eq=False)
class CvResult:
    """Chosen k, its out-of-fold predictions, and the per-k CV accuracies."""

    best_k: int
    predictions: PredictionSet
    accuracy_per_k: dict[int, float]
    fold_assignment: np.ndarray


def assign_folds(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Stratified fold ids: per-class round-robin after a seeded shuffle."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        perm = rng.permutation(rows)
        fold_of[perm] = np.arange(len(perm)) % folds
    return fold_of


def select_k_cv(
    train: EmbeddingStore | np.ndarray,
    labels: Labels | np.ndarray,
    k_grid: tuple[int, ...] = K_GRID_DEFAULT,
    folds: int = 10,
    seed: int = 42,
    *,
    threads: int = 1,
) -> CvResult:
    """k chosen by stratified k-fold CV on the training split.

    Per fold, held-out samples are classified against the remaining folds
    for every k (one neighbor pass at max k). best_k maximizes the mean of
    per-fold accuracies; ties go to the smaller k. Returns the out-of-fold
    predictions at best_k.
    """
    rows = train.data if isinstance(train, EmbeddingStore) else np.asarray(train, np.float32)
    ids = train.sample_ids if isinstance(train, EmbeddingStore) else tuple(
        str(i) for i in range(rows.shape[0])
    )
    lab = labels.single() if isinstance(labels, Labels) else np.asarray(labels, np.int64)
    if len(lab) != rows.shape[0]:
        raise ValueError("labels do not match training rows")
    if not k_grid:
        raise ValueError("k_grid must be non-empty")
    k_grid = tuple(sorted(set(int(k) for k in k_grid)))
    kmax = max(k_grid)

    fold_of = assign_folds(lab, folds, seed)
    fold_sizes = np.bincount(fold_of, minlength=folds)
    smallest_partition = len(lab) - int(fold_sizes.max())
    if kmax > smallest_partition:
        raise ValueError(
            f"max(k_grid)={kmax} exceeds the smallest reference partition "
            f"({smallest_partition} rows)"
        )

    oof = {k: np.empty(len(lab), dtype=np.int64) for k in k_grid}
    fold_acc: dict[int, list[float]] = {k: [] for k in k_grid}
    for f in range(folds):
        held = np.flatnonzero(fold_of == f)
        if len(held) == 0:
            continue
        rest = np.flatnonzero(fold_of != f)
        neighbors = top_k(rows[held], rows[rest], kmax, threads=threads)
        rest_lab = lab[rest]
        for k in k_grid:
            preds = vote(neighbors, rest_lab, k)
            oof[k][held] = preds
            fold_acc[k].append(float(np.mean(preds == lab[held])))

    accuracy_per_k = {k: float(np.mean(fold_acc[k])) for k in k_grid}
    best_k = k_grid[0]
    for k in k_grid[1:]:
        if accuracy_per_k[k] > accuracy_per_k[best_k]:
            best_k = k
    predictions = PredictionSet(
        ids, oof[best_k], provenance=f"knn-cv(k={best_k}, folds={folds}, seed={seed})"
    )
    return CvResult(
        best_k=best_k,
        predictions=predictions,
        accuracy_per_k=accuracy_per_k,
        fold_assignment=fold_of,
    )


@dataclass(eq=False)
class FusionModel:
    """Both precision tables, the CV-chosen k, and training provenance."""

    precision_language: PrecisionTable
    precision_vision: PrecisionTable
    chosen_k: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.precision_language.num_classes != self.precision_vision.num_classes:
            raise ValueError("precision tables cover different class counts")
        if self.chosen_k < 1:
            raise ValueError("chosen_k must be >= 1")

    @property
    def num_classes(self) -> int:
        return self.precision_language.num_classes

    def save(self, path: str | Path) -> None:
        doc = {
            "chosen_k": self.chosen_k,
            "precision_language": self.precision_language.to_dict(),
            "precision_vision": self.precision_vision.to_dict(),
            "provenance": self.provenance,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FusionModel":
        doc = json.loads(Path(path).read_text())
        return cls(
            precision_language=PrecisionTable.from_dict(doc["precision_language"]),
            precision_vision=PrecisionTable.from_dict(doc["precision_vision"]),
            chosen_k=int(doc["chosen_k"]),
            provenance=doc.get("provenance", {}),
        )


def train_fusion(
    train_images: EmbeddingStore,
    train_labels: Labels | np.ndarray,
    bank: PromptBank,
    sel: TemplateSelection | None = None,
    k_grid: tuple[int, ...] = K_GRID_DEFAULT,
    folds: int = 10,
    seed: int = 42,
    *,
    renormalize: bool = True,
    threads: int = 1,
) -> FusionModel:
    """Estimate both precision tables on the training split and pick k."""
    sel = sel if sel is not None else preset_avg_prime(bank)
    lab = train_labels if isinstance(train_labels, Labels) else Labels.from_single(train_labels)
    ids = train_images.sample_ids
    truth = GroundTruth(ids, lab, bank.num_classes)

    cv = select_k_cv(train_images, lab, k_grid, folds=folds, seed=seed, threads=threads)
    precision_vision = per_class_precision(cv.predictions, truth)

    protos = build_prototypes(bank, sel, renormalize=renormalize)
    zs = classify_zeroshot(train_images, protos, threads=threads)
    precision_language = per_class_precision(zs, truth)

    provenance = {
        "folds": folds,
        "seed": seed,
        "k_grid": list(k_grid),
        "cv_accuracy_per_k": {str(k): v for k, v in sorted(cv.accuracy_per_k.items())},
        "templates": sel.name,
        "template_ids": list(sel.template_ids),
        "name_set": bank.manifest.name_set,
        "renormalized": renormalize,
        "language_protocol": "zero-shot on the full training split",
        "vision_protocol": "out-of-fold cross-validation predictions",
        "train_data_sha256": data_sha256(train_images),
        "bank_data_sha256": data_sha256(bank.store),
    }
    return FusionModel(
        precision_language=precision_language,
        precision_vision=precision_vision,
        chosen_k=cv.best_k,
        provenance=provenance,
    )


def fuse_predict(p_language: int, p_vision: int, model: FusionModel) -> int:
    """Language wins iff its class precision strictly exceeds vision's."""
    pl = model.precision_language.precision[p_language]
    pv = model.precision_vision.precision[p_vision]
    return int(p_language) if pl > pv else int(p_vision)


def fuse_predictions(
    language: PredictionSet, vision: PredictionSet, model: FusionModel
) -> PredictionSet:
    """Vectorized fuse_predict over aligned prediction sets."""
    if language.sample_ids != vision.sample_ids:
        raise ValueError("language and vision predictions are not aligned")
    for preds in (language, vision):
        if preds.class_ids.size and preds.class_ids.max() >= model.num_classes:
            raise ValueError("prediction class id outside the model's class range")
    pl = model.precision_language.precision[language.class_ids]
    pv = model.precision_vision.precision[vision.class_ids]
    fused = np.where(pl > pv, language.class_ids, vision.class_ids)
    return PredictionSet(
        language.sample_ids,
        fused,
        provenance=f"fused(k={model.chosen_k})",
    )
