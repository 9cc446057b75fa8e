"""Binary embedding stores, label sets, manifests and their validation.

An embedding store is an immutable n x d float32 matrix of unit-normalized
rows together with per-sample ids, labels and a dataset manifest. The binary
container holds the matrix and the label lists; everything human-editable
(split, provenance, sample ids, Cleaner mask, multi-labels) lives in a JSON
sidecar next to it, bound to the binary by the SHA-256 of the data section.

Container layout (all little-endian):

    magic           4 bytes  b"EMB1"
    version         u32
    n               u64
    d               u32
    role            u8       0=image 1=text 2=neighbors
    label_width     u8       bytes per label id, one of {1, 2, 4}
    data            n*d float32, row-major
    labels          per sample: u16 count, then count ids of label_width
    crc32           u32      CRC-32 of the data section
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"EMB1"
FORMAT_VERSION = 1
NORM_TOL = 1e-3

_HEADER = struct.Struct("<4sIQIBB")

ROLE_CODES = {"image": 0, "text": 1, "neighbors": 2}
ROLE_NAMES = {v: k for k, v in ROLE_CODES.items()}


class StoreError(Exception):
    """Base class for store container failures."""


class BadMagicError(StoreError):
    """File does not start with the container magic."""


class UnsupportedVersionError(StoreError):
    """Container version is newer than this reader."""


class TruncatedFileError(StoreError):
    """File ends before the declared payload is complete."""


class ChecksumError(StoreError):
    """CRC-32 of the data section does not match the stored value."""


class SidecarError(StoreError):
    """Manifest sidecar is missing, unreadable, or does not match the binary."""


class InvariantError(StoreError):
    """Store/labels/manifest violate a type invariant; carries diagnostics."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        lines = "; ".join(str(d) for d in diagnostics[:5])
        more = "" if len(diagnostics) <= 5 else f" (+{len(diagnostics) - 5} more)"
        super().__init__(f"{len(diagnostics)} invariant violation(s): {lines}{more}")


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation, pointing at the offending sample when known."""

    code: str
    message: str
    sample: int | None = None

    def __str__(self) -> str:
        where = "" if self.sample is None else f" [sample {self.sample}]"
        return f"{self.code}: {self.message}{where}"


class Labels:
    """Per-sample label-id lists in CSR form.

    ``values[offsets[i]:offsets[i+1]]`` are the class ids of sample i.
    Single-label stores have exactly one id per sample; multi-label sets
    (ReaL ground truth) may have several.
    """

    def __init__(self, values: np.ndarray, offsets: np.ndarray):
        self.values = np.ascontiguousarray(values, dtype=np.int64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        if self.offsets.ndim != 1 or self.offsets[0] != 0:
            raise ValueError("offsets must be 1-D and start at 0")
        if self.offsets[-1] != len(self.values):
            raise ValueError("offsets must end at len(values)")

    @classmethod
    def from_single(cls, ids: Sequence[int] | np.ndarray) -> "Labels":
        ids = np.asarray(ids, dtype=np.int64)
        return cls(ids, np.arange(len(ids) + 1, dtype=np.int64))

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]]) -> "Labels":
        values: list[int] = []
        offsets = [0]
        for s in sets:
            ids = sorted(set(int(c) for c in s))
            values.extend(ids)
            offsets.append(len(values))
        return cls(np.asarray(values, dtype=np.int64), np.asarray(offsets, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def is_single(self) -> bool:
        return bool(np.all(self.counts() == 1))

    def single(self) -> np.ndarray:
        """The one label per sample; raises on multi-label data."""
        if not self.is_single:
            raise ValueError("label set is not single-label")
        return self.values.copy()

    def get(self, i: int) -> np.ndarray:
        return self.values[self.offsets[i]:self.offsets[i + 1]]

    def contains(self, predictions: np.ndarray) -> np.ndarray:
        """Boolean per sample: prediction is a member of the label set."""
        predictions = np.asarray(predictions, dtype=np.int64)
        if len(predictions) != len(self):
            raise ValueError("predictions and labels have different lengths")
        counts = self.counts()
        if self.is_single:
            return predictions == self.values
        hits = np.repeat(predictions, counts) == self.values
        return np.bitwise_or.reduceat(hits, self.offsets[:-1]) & (counts > 0)

    def select(self, index: np.ndarray) -> "Labels":
        """Labels of the samples at ``index``, in that order."""
        index = np.asarray(index)
        parts = [self.get(int(i)) for i in index]
        offsets = np.concatenate([[0], np.cumsum([len(p) for p in parts])])
        values = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        return Labels(values, offsets.astype(np.int64))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Labels):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.offsets, other.offsets
        )


@dataclass
class EmbeddingStore:
    """Immutable matrix of unit-normalized embedding rows with sample ids."""

    data: np.ndarray
    sample_ids: tuple[str, ...]
    role: str = "image"

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("data must be a 2-D matrix")
        self.sample_ids = tuple(str(s) for s in self.sample_ids)
        if self.role not in ROLE_CODES:
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass
class DatasetManifest:
    """Sidecar metadata: provenance plus Cleaner mask and multi-labels.

    ``num_classes`` is authoritative (empty classes are representable).
    ``multi_labels`` maps row index -> label ids and, when present, must be
    defined exactly on the cleaner_mask-true rows.
    """

    split: str = ""
    model: str = ""
    backbone: str = ""
    num_classes: int = 0
    cleaner_mask: np.ndarray | None = None
    multi_labels: dict[int, tuple[int, ...]] | None = None
    templates: tuple[str, ...] | None = None
    name_set: str | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cleaner_mask is not None:
            self.cleaner_mask = np.asarray(self.cleaner_mask, dtype=bool)
        if self.multi_labels is not None:
            self.multi_labels = {
                int(k): tuple(int(c) for c in v) for k, v in self.multi_labels.items()
            }
        if self.templates is not None:
            self.templates = tuple(self.templates)


@dataclass
class ClassCatalog:
    """Class-name variants keyed by name-set (wordnet / openai / openai_plus)."""

    num_classes: int
    name_sets: dict[str, tuple[str, ...]]

    def names(self, name_set: str) -> tuple[str, ...]:
        try:
            return self.name_sets[name_set]
        except KeyError:
            raise KeyError(f"catalog has no name set {name_set!r}") from None

    def validate(self) -> list[Diagnostic]:
        diags = []
        for key, names in self.name_sets.items():
            if len(names) != self.num_classes:
                diags.append(Diagnostic("catalog_size",
                                        f"name set {key!r} has {len(names)} entries, "
                                        f"expected {self.num_classes}"))
                continue
            for c, name in enumerate(names):
                if not name:
                    diags.append(Diagnostic("catalog_empty_name",
                                            f"name set {key!r} class {c} is empty"))
        return diags

    def save(self, path: str | Path) -> None:
        doc = {"num_classes": self.num_classes,
               "name_sets": {k: list(v) for k, v in self.name_sets.items()}}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClassCatalog":
        doc = json.loads(Path(path).read_text())
        return cls(num_classes=int(doc["num_classes"]),
                   name_sets={k: tuple(v) for k, v in doc["name_sets"].items()})


class PromptBank:
    """Text-embedding store indexed by (template, class).

    Rows are template-major: row(t, c) = t * C + c. The bank's labels carry
    the class id of every prompt row; the manifest lists the template strings.
    """

    def __init__(self, store: EmbeddingStore, labels: Labels, manifest: DatasetManifest):
        if store.role != "text":
            raise ValueError("prompt bank requires a text-role store")
        if manifest.templates is None or not manifest.templates:
            raise ValueError("prompt bank manifest must list its templates")
        C = manifest.num_classes
        T = len(manifest.templates)
        if store.n != T * C:
            raise ValueError(f"bank has {store.n} rows, expected T*C = {T}*{C}")
        single = labels.single()
        expected = np.tile(np.arange(C, dtype=np.int64), T)
        if not np.array_equal(single, expected):
            raise ValueError("bank labels do not form a template-major (template, class) index")
        self.store = store
        self.labels = labels
        self.manifest = manifest

    @property
    def num_templates(self) -> int:
        return len(self.manifest.templates)

    @property
    def num_classes(self) -> int:
        return self.manifest.num_classes

    @property
    def templates(self) -> tuple[str, ...]:
        return self.manifest.templates

    def row(self, template_idx: int, class_id: int) -> int:
        if not 0 <= template_idx < self.num_templates:
            raise IndexError(f"template index {template_idx} out of range")
        if not 0 <= class_id < self.num_classes:
            raise IndexError(f"class id {class_id} out of range")
        return template_idx * self.num_classes + class_id

    def template_rows(self, template_idx: int) -> np.ndarray:
        """The C x d block of one template, ordered by class id."""
        start = self.row(template_idx, 0)
        return self.store.data[start:start + self.num_classes]


def data_sha256(store: EmbeddingStore) -> str:
    return hashlib.sha256(store.data.tobytes()).hexdigest()


def validate_store(
    store: EmbeddingStore,
    labels: Labels | None = None,
    manifest: DatasetManifest | None = None,
) -> list[Diagnostic]:
    """All invariant violations of the triple; empty list means valid.

    Norm checks apply to image/text stores only; neighbor dumps reuse the
    container with arbitrary row values.
    """
    diags: list[Diagnostic] = []
    n, d = store.data.shape
    if n < 1:
        diags.append(Diagnostic("empty", "store must have n >= 1"))
    if d < 1:
        diags.append(Diagnostic("empty", "store must have d >= 1"))
    if n >= 1 and d >= 1:
        finite = np.isfinite(store.data).all(axis=1)
        for i in np.flatnonzero(~finite):
            diags.append(Diagnostic("nonfinite", "row contains NaN or Inf", int(i)))
        if store.role != "neighbors":
            norms = np.linalg.norm(store.data[finite].astype(np.float64), axis=1)
            bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
            rows = np.flatnonzero(finite)[bad]
            for i, nrm in zip(rows, norms[bad]):
                diags.append(Diagnostic("norm", f"row norm {nrm:.6f} outside 1±{NORM_TOL}", int(i)))
    if len(store.sample_ids) != n:
        diags.append(Diagnostic("ids_len", f"{len(store.sample_ids)} sample ids for {n} rows"))
    elif len(set(store.sample_ids)) != n:
        seen: set[str] = set()
        for i, s in enumerate(store.sample_ids):
            if s in seen:
                diags.append(Diagnostic("dup_id", f"duplicate sample id {s!r}", i))
            seen.add(s)

    if labels is not None:
        if len(labels) != n:
            diags.append(Diagnostic("labels_len", f"{len(labels)} label lists for {n} rows"))
        else:
            counts = labels.counts()
            for i in np.flatnonzero(counts == 0):
                diags.append(Diagnostic("label_empty", "sample has no labels", int(i)))
            if manifest is not None and manifest.num_classes > 0:
                C = manifest.num_classes
                bad = (labels.values < 0) | (labels.values >= C)
                if bad.any():
                    rows = np.searchsorted(labels.offsets, np.flatnonzero(bad), side="right") - 1
                    for i, v in zip(rows, labels.values[bad]):
                        diags.append(Diagnostic("label_range", f"label id {v} outside [0, {C})", int(i)))

    if manifest is not None:
        if manifest.cleaner_mask is not None and len(manifest.cleaner_mask) != n:
            diags.append(Diagnostic("mask_len",
                                    f"cleaner mask length {len(manifest.cleaner_mask)} != n {n}"))
        if manifest.multi_labels is not None:
            if manifest.cleaner_mask is None:
                diags.append(Diagnostic("multi_without_mask",
                                        "multi-labels present without a cleaner mask"))
            elif len(manifest.cleaner_mask) == n:
                want = set(np.flatnonzero(manifest.cleaner_mask).tolist())
                have = set(manifest.multi_labels)
                for i in sorted(have - want):
                    diags.append(Diagnostic("multi_label_domain",
                                            "multi-labels on a non-cleaner sample", i))
                for i in sorted(want - have):
                    diags.append(Diagnostic("multi_label_domain",
                                            "cleaner sample missing multi-labels", i))
            if manifest.num_classes > 0:
                for i, ids in sorted(manifest.multi_labels.items()):
                    if not ids:
                        diags.append(Diagnostic("label_empty", "empty multi-label set", i))
                    elif min(ids) < 0 or max(ids) >= manifest.num_classes:
                        diags.append(Diagnostic("label_range",
                                                "multi-label id outside [0, C)", i))
    return diags


def _label_width(labels: Labels) -> int:
    top = int(labels.values.max(initial=0))
    if top < 1 << 8:
        return 1
    if top < 1 << 16:
        return 2
    return 4


_WIDTH_DTYPE = {1: np.uint8, 2: np.uint16, 4: np.uint32}


def save_store(
    store: EmbeddingStore,
    labels: Labels,
    manifest: DatasetManifest,
    path: str | Path,
    *,
    validate: bool = True,
) -> None:
    """Write the binary container and its manifest sidecar.

    Refuses to write anything when the triple violates an invariant.
    """
    if validate:
        diags = validate_store(store, labels, manifest)
        if diags:
            raise InvariantError(diags)
    if len(labels) != store.n:
        raise InvariantError([Diagnostic("labels_len", "labels do not match store")])

    path = Path(path)
    width = _label_width(labels)
    data_bytes = store.data.tobytes()
    counts = labels.counts()
    if counts.max(initial=0) >= 1 << 16:
        raise InvariantError([Diagnostic("label_count", "more than 65535 labels on one sample")])

    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, store.n, store.d,
                             ROLE_CODES[store.role], width))
        f.write(data_bytes)
        # Interleave u16 counts with id lists; built row-wise into one buffer.
        buf = bytearray()
        dtype = _WIDTH_DTYPE[width]
        for i in range(store.n):
            ids = labels.get(i)
            buf += struct.pack("<H", len(ids))
            buf += ids.astype(dtype).tobytes()
        f.write(bytes(buf))
        f.write(struct.pack("<I", zlib.crc32(data_bytes) & 0xFFFFFFFF))

    _save_sidecar(store, manifest, path)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def _save_sidecar(store: EmbeddingStore, manifest: DatasetManifest, path: Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "data_sha256": data_sha256(store),
        "n": store.n,
        "d": store.d,
        "role": store.role,
        "split": manifest.split,
        "model": manifest.model,
        "backbone": manifest.backbone,
        "num_classes": manifest.num_classes,
        "sample_ids": list(store.sample_ids),
        "cleaner_mask": None if manifest.cleaner_mask is None
        else [int(b) for b in manifest.cleaner_mask],
        "multi_labels": None if manifest.multi_labels is None
        else {str(k): list(v) for k, v in sorted(manifest.multi_labels.items())},
        "templates": None if manifest.templates is None else list(manifest.templates),
        "name_set": manifest.name_set,
        "provenance": manifest.provenance,
    }
    _sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_store(
    path: str | Path,
    *,
    validate: bool = True,
) -> tuple[EmbeddingStore, Labels, DatasetManifest]:
    """Read a container and its sidecar back into the (store, labels, manifest) triple."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the header")
    magic, version, n, d, role_code, width = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}, reader supports {FORMAT_VERSION}")
    if role_code not in ROLE_NAMES:
        raise StoreError(f"{path}: unknown role code {role_code}")
    if width not in _WIDTH_DTYPE:
        raise StoreError(f"{path}: unsupported label width {width}")

    data_start = _HEADER.size
    data_len = n * d * 4
    if len(raw) < data_start + data_len:
        raise TruncatedFileError(f"{path}: data section truncated "
                                 f"(need {data_len} bytes, have {len(raw) - data_start})")
    data_bytes = raw[data_start:data_start + data_len]

    pos = data_start + data_len
    counts = np.empty(n, dtype=np.int64)
    chunks = []
    dtype = _WIDTH_DTYPE[width]
    for i in range(n):
        if pos + 2 > len(raw):
            raise TruncatedFileError(f"{path}: label block truncated at sample {i}")
        (cnt,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        nbytes = cnt * width
        if pos + nbytes > len(raw):
            raise TruncatedFileError(f"{path}: label list truncated at sample {i}")
        counts[i] = cnt
        chunks.append(np.frombuffer(raw, dtype=dtype, count=cnt, offset=pos))
        pos += nbytes
    if pos + 4 > len(raw):
        raise TruncatedFileError(f"{path}: missing trailing checksum")
    (crc_stored,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos != len(raw):
        raise TruncatedFileError(f"{path}: {len(raw) - pos} unexpected trailing bytes")
    if zlib.crc32(data_bytes) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError(f"{path}: CRC-32 mismatch in data section")

    values = (np.concatenate(chunks).astype(np.int64)
              if chunks and sum(map(len, chunks)) else np.empty(0, dtype=np.int64))
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    labels = Labels(values, offsets)

    data = np.frombuffer(data_bytes, dtype="<f4").reshape(n, d).copy()

    side = _sidecar_path(path)
    if not side.exists():
        raise SidecarError(f"{side}: manifest sidecar not found")
    try:
        doc = json.loads(side.read_text())
    except json.JSONDecodeError as e:
        raise SidecarError(f"{side}: invalid JSON ({e})") from e
    if doc.get("data_sha256") != hashlib.sha256(data_bytes).hexdigest():
        raise SidecarError(f"{side}: content hash does not match the binary")
    if doc.get("n") != n or doc.get("d") != d:
        raise SidecarError(f"{side}: shape disagrees with the binary header")

    store = EmbeddingStore(
        data=data,
        sample_ids=tuple(doc["sample_ids"]),
        role=ROLE_NAMES[role_code],
    )
    manifest = DatasetManifest(
        split=doc.get("split", ""),
        model=doc.get("model", ""),
        backbone=doc.get("backbone", ""),
        num_classes=int(doc.get("num_classes", 0)),
        cleaner_mask=None if doc.get("cleaner_mask") is None
        else np.asarray(doc["cleaner_mask"], dtype=bool),
        multi_labels=None if doc.get("multi_labels") is None
        else {int(k): tuple(v) for k, v in doc["multi_labels"].items()},
        templates=None if doc.get("templates") is None else tuple(doc["templates"]),
        name_set=doc.get("name_set"),
        provenance=doc.get("provenance", {}),
    )
    if validate:
        diags = validate_store(store, labels, manifest)
        if diags:
            raise InvariantError(diags)
    return store, labels, manifest


def subset(
    store: EmbeddingStore,
    labels: Labels,
    manifest: DatasetManifest,
    mask: np.ndarray,
) -> tuple[EmbeddingStore, Labels, DatasetManifest]:
    """Row-filter the triple by a boolean mask, preserving order and ids.

    This is how the Cleaner subset is carved out of a validation store.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (store.n,):
        raise ValueError(f"mask length {mask.shape} does not match n={store.n}")
    keep = np.flatnonzero(mask)
    if len(keep) == 0:
        raise ValueError("mask selects no samples; a store must have n >= 1")

    new_store = EmbeddingStore(
        data=store.data[keep],
        sample_ids=tuple(store.sample_ids[i] for i in keep),
        role=store.role,
    )
    new_labels = labels.select(keep)

    new_multi = None
    if manifest.multi_labels is not None:
        old_to_new = {int(old): new for new, old in enumerate(keep)}
        new_multi = {old_to_new[i]: v for i, v in manifest.multi_labels.items()
                     if i in old_to_new}
    new_manifest = DatasetManifest(
        split=manifest.split,
        model=manifest.model,
        backbone=manifest.backbone,
        num_classes=manifest.num_classes,
        cleaner_mask=None if manifest.cleaner_mask is None else manifest.cleaner_mask[keep],
        multi_labels=new_multi,
        templates=manifest.templates,
        name_set=manifest.name_set,
        provenance=dict(manifest.provenance),
    )
    return new_store, new_labels, new_manifest
