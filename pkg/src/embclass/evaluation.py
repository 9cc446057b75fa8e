"""Metrics and analyses over prediction sets.

Covers top-1 and set-membership (ReaL-style) accuracy, per-class accuracy,
class-/image-level oracles and their combination, per-class accuracy shift
rankings, the few-shot protocol with t-distribution confidence intervals,
and the report container the CLI serializes.

Oracles pick variants on the same samples they are scored on; they are
upper bounds by construction, not honest estimators, and reports label
them as such.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .knn import top_k, vote
from .predictions import GroundTruth, PredictionSet, VariantFamily
from .store import DatasetManifest, EmbeddingStore, Labels

FEW_SHOT_TRIAL_BUDGET = 2500


def ground_truth(
    store: EmbeddingStore,
    labels: Labels,
    manifest: DatasetManifest,
    *,
    use_multi: bool = False,
) -> GroundTruth:
    """Ground truth for a loaded triple; set-valued when ``use_multi``.

    Multi-label truth requires the manifest's corrected label sets on every
    row, i.e. the store must already be subset to the corrected samples.
    """
    if manifest.num_classes < 1:
        raise ValueError("manifest carries no class count")
    if not use_multi:
        return GroundTruth(store.sample_ids, labels, manifest.num_classes)
    if manifest.multi_labels is None:
        raise ValueError("manifest has no corrected label sets; cannot build set-valued truth")
    try:
        sets = [manifest.multi_labels[i] for i in range(store.n)]
    except KeyError as e:
        raise ValueError(f"corrected label set missing for row {e.args[0]}") from None
    return GroundTruth(store.sample_ids, Labels.from_sets(sets), manifest.num_classes)


def top1_accuracy(preds: PredictionSet, truth: GroundTruth) -> float:
    """Fraction of samples whose single ground-truth label is predicted."""
    truth.check_aligned(preds)
    return float(np.mean(preds.class_ids == truth.labels.single()))


def real_accuracy(preds: PredictionSet, truth: GroundTruth) -> float:
    """Fraction of samples whose prediction belongs to the label set."""
    truth.check_aligned(preds)
    return float(np.mean(truth.labels.contains(preds.class_ids)))


def per_class_accuracy(preds: PredictionSet, truth: GroundTruth) -> np.ndarray:
    """Per class: correct fraction among samples whose label set contains it.

    Classes with no samples get NaN and are excluded from any averaging.
    """
    truth.check_aligned(preds)
    C = truth.num_classes
    labels = truth.labels
    correct = labels.contains(preds.class_ids)
    counts = np.bincount(labels.values, minlength=C).astype(np.float64)
    hits = np.bincount(
        labels.values, weights=np.repeat(correct.astype(np.float64), labels.counts()), minlength=C
    )
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, hits / counts, np.nan)


@dataclass(eq=False)
class ClassOracleResult:
    """Per-class variant choice and the accuracy it attains."""

    chosen: np.ndarray
    accuracy: float
    variant_names: tuple[str, ...]


def class_level_oracle(family: VariantFamily, truth: GroundTruth) -> ClassOracleResult:
    """Best variant per ground-truth class, scored on the same samples.

    Ties go to the first variant in family order. A sample is judged by the
    variant chosen for its label; with set-valued truth it counts as correct
    if any of its labels' chosen variants predicts inside the set.
    """
    acc = np.stack([per_class_accuracy(m, truth) for m in family.members])
    chosen = np.argmax(np.nan_to_num(acc, nan=-1.0), axis=0)
    preds = np.stack([m.class_ids for m in family.members])
    labels = truth.labels
    if labels.is_single:
        lab = labels.single()
        picked = preds[chosen[lab], np.arange(len(lab))]
        correct = picked == lab
    else:
        correct = np.zeros(len(labels), dtype=bool)
        for i in range(len(labels)):
            s = labels.get(i)
            correct[i] = bool(np.any(np.isin(preds[chosen[s], i], s)))
    return ClassOracleResult(
        chosen=chosen, accuracy=float(correct.mean()), variant_names=family.names
    )


def image_level_oracle(family: VariantFamily, truth: GroundTruth) -> float:
    """A sample counts as correct if any variant predicts a correct class."""
    hit = np.zeros(len(truth), dtype=bool)
    for member in family.members:
        truth.check_aligned(member)
        hit |= truth.labels.contains(member.class_ids)
    return float(hit.mean())


def double_oracle(
    vision: VariantFamily, language: VariantFamily, truth: GroundTruth, level: str
) -> float:
    """Oracle over the union of the two families, at class or image level."""
    union = VariantFamily.union(vision, language)
    if level == "class":
        return class_level_oracle(union, truth).accuracy
    if level == "image":
        return image_level_oracle(union, truth)
    raise ValueError(f"unknown oracle level {level!r} (expected 'class' or 'image')")


def ci_95(trial_accuracies: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Mean and 95% t-interval half-width over trial accuracies.

    Half-width = t_{0.975, n-1} * std / sqrt(n), with the population
    (ddof=0) standard deviation of the trials.
    """
    vals = np.asarray(trial_accuracies, dtype=np.float64)
    if vals.ndim != 1 or len(vals) < 2:
        raise ValueError("ci_95 needs at least 2 trial accuracies")
    n = len(vals)
    mean = float(vals.mean())
    half = float(stats.t.ppf(0.975, n - 1) * vals.std(ddof=0) / np.sqrt(n))
    return mean, half


@dataclass(eq=False)
class ShiftReport:
    """Largest per-class accuracy deltas in both directions."""

    increases: list[tuple[int, float]]
    decreases: list[tuple[int, float]]

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(self.increases) + list(self.decreases)


def accuracy_shift(
    per_class_a: np.ndarray, per_class_b: np.ndarray, top_n: int
) -> ShiftReport:
    """Classes with the largest a-minus-b deltas, top_n per direction.

    Classes absent (NaN) in either vector are skipped; delta ties order by
    ascending class id.
    """
    a = np.asarray(per_class_a, dtype=np.float64)
    b = np.asarray(per_class_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("per-class vectors must be 1-D and aligned")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    ids = np.flatnonzero(~np.isnan(a) & ~np.isnan(b))
    delta = a[ids] - b[ids]
    inc_order = np.lexsort((ids, -delta))[:top_n]
    increases = [(int(ids[j]), float(delta[j])) for j in inc_order]
    taken = {c for c, _ in increases}
    dec_order = np.lexsort((ids, delta))
    decreases = []
    for j in dec_order:
        if int(ids[j]) not in taken:
            decreases.append((int(ids[j]), float(delta[j])))
            if len(decreases) == top_n:
                break
    return ShiftReport(increases=increases, decreases=decreases)


@dataclass(frozen=True)
class FewShotCell:
    m: int
    k: int
    mean: float
    half_width: float
    trials: int


@dataclass(eq=False)
class FewShotResult:
    """Mean accuracy and CI per (m, k) cell, plus the protocol parameters."""

    cells: dict[tuple[int, int], FewShotCell]
    m_grid: tuple[int, ...]
    k_grid: tuple[int, ...]
    seed: int

    def rows(self) -> list[FewShotCell]:
        return [self.cells[key] for key in sorted(self.cells)]


def few_shot_trials(m: int, budget: int = FEW_SHOT_TRIAL_BUDGET) -> int:
    """Trial count for one m under a total-budget schedule, at least 2."""
    return max(2, round(budget / m))


def few_shot_eval(
    train: EmbeddingStore | np.ndarray,
    train_labels: Labels | np.ndarray,
    val: EmbeddingStore | np.ndarray,
    val_labels: Labels | np.ndarray,
    m_grid: Sequence[int],
    trials_per_m: int | Mapping[int, int] | None = None,
    k_grid: Sequence[int] = (1, 3, 5, 7, 9, 11, 13, 51),
    seed: int = 42,
    *,
    threads: int = 1,
) -> FewShotResult:
    """k-NN accuracy with m randomly drawn references per class.

    Per trial, every class contributes min(m, available) samples drawn
    without replacement; the validation set is classified at every k in the
    grid with k <= m (larger k cells are omitted). Trials use rng streams
    derived from (seed, m, trial), so results do not depend on scheduling;
    with a single trial the half-width is reported as 0.

    ``trials_per_m``: None uses the budget schedule max(2, round(2500/m));
    an int fixes the count for every m; a mapping gives per-m counts.
    """
    train_rows = train.data if isinstance(train, EmbeddingStore) else np.asarray(train, np.float32)
    val_rows = val.data if isinstance(val, EmbeddingStore) else np.asarray(val, np.float32)
    t_lab = train_labels.single() if isinstance(train_labels, Labels) else np.asarray(train_labels, np.int64)
    v_lab = val_labels.single() if isinstance(val_labels, Labels) else np.asarray(val_labels, np.int64)
    if len(t_lab) != train_rows.shape[0] or len(v_lab) != val_rows.shape[0]:
        raise ValueError("labels do not match embedding rows")
    if not m_grid:
        raise ValueError("m_grid must be non-empty")
    k_grid = tuple(sorted(set(int(k) for k in k_grid)))
    m_grid = tuple(sorted(set(int(m) for m in m_grid)))

    C = int(max(t_lab.max(), v_lab.max())) + 1
    class_rows = [np.flatnonzero(t_lab == c) for c in range(C)]
    empty = [c for c in range(C) if len(class_rows[c]) == 0]
    if empty:
        raise ValueError(f"training set has no samples for class(es) {empty[:5]}")

    def trial_count(m: int) -> int:
        if trials_per_m is None:
            return few_shot_trials(m)
        if isinstance(trials_per_m, Mapping):
            return int(trials_per_m[m])
        return int(trials_per_m)

    cells: dict[tuple[int, int], FewShotCell] = {}
    for m in m_grid:
        ks = [k for k in k_grid if k <= m]
        if not ks:
            continue
        trials = trial_count(m)
        if trials < 1:
            raise ValueError(f"trial count for m={m} must be >= 1")
        accs: dict[int, list[float]] = {k: [] for k in ks}
        for trial in range(trials):
            rng = np.random.default_rng((seed, m, trial))
            picked = [
                np.sort(rng.choice(rows, size=min(m, len(rows)), replace=False))
                for rows in class_rows
            ]
            sample = np.concatenate(picked)
            refs = train_rows[sample]
            ref_lab = t_lab[sample]
            valid_ks = [k for k in ks if k <= len(sample)]
            neighbors = top_k(val_rows, refs, max(valid_ks), threads=threads)
            for k in valid_ks:
                preds = vote(neighbors, ref_lab, k)
                accs[k].append(float(np.mean(preds == v_lab)))
        for k in ks:
            runs = accs[k]
            if not runs:
                continue
            if len(runs) == 1:
                mean, half = runs[0], 0.0
            else:
                mean, half = ci_95(runs)
            cells[(m, k)] = FewShotCell(m=m, k=k, mean=mean, half_width=half, trials=len(runs))
    return FewShotResult(cells=cells, m_grid=m_grid, k_grid=k_grid, seed=seed)


@dataclass(eq=False)
class EvalReport:
    """One evaluation outcome, serializable deterministically."""

    variant: str
    n: int
    num_classes: int
    top1: float
    real: float | None = None
    per_class: np.ndarray | None = None
    ci: tuple[float, float, int] | None = None
    oracle: dict | None = None
    input_hashes: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in (("top1", self.top1), ("real", self.real)):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} accuracy {value} outside [0, 1]")
        if self.per_class is not None:
            self.per_class = np.asarray(self.per_class, dtype=np.float64)
            if self.per_class.shape != (self.num_classes,):
                raise ValueError("per-class vector length must equal num_classes")

    def to_dict(self) -> dict:
        per_class = None
        if self.per_class is not None:
            per_class = [None if np.isnan(v) else float(v) for v in self.per_class]
        ci = None
        if self.ci is not None:
            ci = {"mean": self.ci[0], "half_width": self.ci[1], "trials": self.ci[2],
                  "method": "t-interval, 95%, population std"}
        return {
            "variant": self.variant,
            "n": self.n,
            "num_classes": self.num_classes,
            "top1_accuracy": self.top1,
            "real_accuracy": self.real,
            "per_class_accuracy": per_class,
            "ci": ci,
            "oracle": self.oracle,
            "input_hashes": dict(sorted(self.input_hashes.items())),
            "params": self.params,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"
        )
