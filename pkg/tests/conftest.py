"""Shared builders for synthetic stores, banks, and dataset triples."""

from contextlib import contextmanager

import numpy as np

from embclass import (
    DatasetManifest,
    EmbeddingStore,
    Labels,
    PromptBank,
    l2_normalize,
    save_store,
)

_criterion_lines: list[str] = []


@contextmanager
def criterion(name: str):
    """Record and print one ``[name] PASS`` / ``[name] FAIL`` line."""
    try:
        yield
    except BaseException:
        _criterion_lines.append(f"[{name}] FAIL")
        print(_criterion_lines[-1])
        raise
    _criterion_lines.append(f"[{name}] PASS")
    print(_criterion_lines[-1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # repeat the criterion lines outside capture so every run shows them
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.line(line)

TEMPLATE_POOL = (
    "a photo of a {}.",
    "{}",
    "a bad photo of the {}.",
    "a sculpture of a {}.",
    "art of the {}.",
    "a photo of the small {}.",
    "itap of a {}.",
)


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return l2_normalize(rng.standard_normal((n, d)).astype(np.float32))


def blob_data(
    rng: np.random.Generator, C: int, per_class: int, d: int, noise: float = 0.25
) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated class clusters on the unit sphere."""
    centers = unit_rows(rng, C, d)
    labels = np.repeat(np.arange(C, dtype=np.int64), per_class)
    rows = centers[labels] + noise * rng.standard_normal((len(labels), d)).astype(np.float32)
    return l2_normalize(rows.astype(np.float32)), labels


def blob_split(
    rng: np.random.Generator,
    C: int,
    per_train: int,
    per_val: int,
    d: int,
    noise: float = 0.25,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Train/val clusters drawn around the same class centers."""
    rows, labels = blob_data(rng, C, per_train + per_val, d, noise)
    train_mask = (np.arange(len(labels)) % (per_train + per_val)) < per_train
    return rows[train_mask], labels[train_mask], rows[~train_mask], labels[~train_mask]


def image_store(rows: np.ndarray, prefix: str = "img") -> EmbeddingStore:
    ids = tuple(f"{prefix}{i:05d}" for i in range(rows.shape[0]))
    return EmbeddingStore(np.ascontiguousarray(rows, dtype=np.float32), ids, "image")


def make_bank(
    rng: np.random.Generator,
    C: int,
    T: int,
    d: int,
    templates: tuple[str, ...] | None = None,
    name_set: str = "openai_plus",
) -> PromptBank:
    if templates is None:
        templates = TEMPLATE_POOL[:T]
    assert len(templates) == T
    rows = unit_rows(rng, T * C, d)
    store = EmbeddingStore(rows, tuple(f"prompt{i:04d}" for i in range(T * C)), "text")
    labels = Labels.from_single(np.tile(np.arange(C, dtype=np.int64), T))
    manifest = DatasetManifest(
        split="prompts", num_classes=C, templates=templates, name_set=name_set
    )
    return PromptBank(store, labels, manifest)


def save_image_triple(
    path,
    rows: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    *,
    prefix: str = "img",
    split: str = "train",
    cleaner_mask: np.ndarray | None = None,
    multi_labels: dict[int, tuple[int, ...]] | None = None,
) -> str:
    store = image_store(rows, prefix=prefix)
    manifest = DatasetManifest(
        split=split,
        model="synthetic",
        backbone="none",
        num_classes=num_classes,
        cleaner_mask=cleaner_mask,
        multi_labels=multi_labels,
    )
    save_store(store, Labels.from_single(labels), manifest, path)
    return str(path)


def save_bank_triple(path, bank: PromptBank) -> str:
    save_store(bank.store, bank.labels, bank.manifest, path)
    return str(path)


def complementary_predictions(per_class: int = 20):
    """Two classifiers with disjoint strengths over 50 classes.

    The first is perfect on classes 0..24 and 40% on 25..49; the second is
    the mirror image. Each classifier's errors stay inside its weak half,
    one landing on each of 12 distinct same-half classes, so its precision
    is exactly 1.0 on its strong half and 8/20 = 0.4 on its weak half.
    """
    assert per_class == 20  # the 8-correct / 12-wrong split below needs 20
    C, half = 50, 25
    labels = np.repeat(np.arange(C, dtype=np.int64), per_class)

    def weak_predictions(c: int, base: int) -> np.ndarray:
        offset = c - base
        preds = np.full(per_class, c, dtype=np.int64)
        for j in range(8, per_class):
            preds[j] = base + (offset + (j - 8) + 1) % half
        return preds

    strong = labels.copy()
    lang = np.concatenate(
        [strong[: half * per_class]]
        + [weak_predictions(c, 25) for c in range(25, 50)]
    )
    vis = np.concatenate(
        [weak_predictions(c, 0) for c in range(25)]
        + [strong[half * per_class:]]
    )
    return labels, lang, vis


def complementary_embeddings():
    """A dataset whose prompt and neighbor classifiers have disjoint strengths.

    Every row is 0.6 on one "text" axis (0..49, naming a class) plus 0.8 on
    one "structure" axis (50..249). Classes 25..49 cluster on a private
    structure axis but 12 of 20 training rows carry a wrong same-half text
    axis, so the prompt classifier is right 40% there while neighbors are
    always right. Classes 0..24 carry correct text axes everywhere, but 12
    of 20 training rows sit on pair axes shared with an adjacent class, so
    held-out neighbor votes leak across classes while prompts stay perfect.
    Prompt precision is exactly 1.0 / 0.4 on the two halves, neighbor
    precision is 1.0 on 25..49, and picking the higher-precision side
    classifies every validation row correctly (each side alone: 70%).

    Returns (train_rows, train_labels, val_rows, val_labels, bank); the bank
    holds one bare-name template whose row for class c is the one-hot text
    axis c.
    """
    C, half, d = 50, 25, 250
    a, g = 0.6, 0.8
    n_tr, n_val = 20, 5

    def high_cluster_axis(c):
        return 50 + (c - half)

    def low_private_axis(c):
        return 75 + c

    def pair_axis(c, s):
        return 100 + c * 6 + s

    def row(text_class, structure_axis):
        v = np.zeros(d, dtype=np.float32)
        v[text_class] = a
        v[structure_axis] = g
        return v

    train, train_labels = [], []
    for c in range(C):
        for j in range(n_tr):
            if c < half:
                if j < 8:
                    axis = low_private_axis(c)
                elif (j - 8) % 2 == 0:
                    axis = pair_axis(c, (j - 8) // 2)
                else:
                    axis = pair_axis((c - 1) % half, (j - 9) // 2)
                train.append(row(c, axis))
            else:
                text = c if j < 8 else half + ((c - half) + (j - 8) + 1) % half
                train.append(row(text, high_cluster_axis(c)))
            train_labels.append(c)

    val, val_labels = [], []
    for c in range(C):
        for i in range(n_val):
            if c < half:
                axis = low_private_axis(c) if i < 2 else pair_axis((c + 1 + (i - 2)) % half, i - 2)
                val.append(row(c, axis))
            else:
                text = c if i < 2 else half + ((c - half) + i) % half
                val.append(row(text, high_cluster_axis(c)))
            val_labels.append(c)

    bank = PromptBank(
        EmbeddingStore(np.eye(C, d, dtype=np.float32),
                       tuple(f"p{c:02d}" for c in range(C)), "text"),
        Labels.from_single(np.arange(C)),
        DatasetManifest(num_classes=C, templates=("{}",), name_set="openai_plus"),
    )
    return (
        l2_normalize(np.stack(train)),
        np.asarray(train_labels, dtype=np.int64),
        l2_normalize(np.stack(val)),
        np.asarray(val_labels, dtype=np.int64),
        bank,
    )
