"""Extraction ops: encode images and prompts into embclass store triples.

Everything written here goes through embclass's own containers and writer,
so the emitted files carry the same invariants the core enforces on load:
unit-normalized float32 rows, aligned labels, checksummed data, manifest
sidecar. Output row order is strictly the input order.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from embclass import (
    ClassCatalog,
    DatasetManifest,
    EmbeddingStore,
    Labels,
    PromptBank,
    l2_normalize,
    save_store,
)

from .encoders import DecodeError, decode_image, load_encoder
from .job import ExtractionJob
from .templates import REQUIRED_NAME_SETS, expand_prompts

log = logging.getLogger("embextract")


def _encode_batched(encode, items: list, batch_size: int) -> np.ndarray:
    parts = [
        np.asarray(encode(items[start:start + batch_size]), dtype=np.float32)
        for start in range(0, len(items), batch_size)
    ]
    return np.concatenate(parts, axis=0)


def _job_provenance(job: ExtractionJob, encoder) -> dict:
    return dict(job.provenance) | {
        "encoder_spec": job.encoder,
        "revision": encoder.revision,
        "resolution": encoder.resolution,
    }


def extract_images(job: ExtractionJob) -> Path:
    """Encode the job's image list into an image-role store file.

    One unit-normalized row per image, in input order; sample ids embed the
    input position, so listing a file twice yields two identical rows under
    distinct ids. Undecodable images abort the run or are skipped with a
    log line, per ``job.on_decode_error``; missing files always abort.
    """
    if not job.images:
        raise ValueError("extract_images needs a non-empty image list")
    if job.labels is None:
        raise ValueError("extract_images needs per-image labels")
    if job.images_out is None:
        raise ValueError("job.images_out is not set")
    encoder = load_encoder(job.encoder, device=job.device)

    ids: list[str] = []
    decoded = []
    labels: list[int] = []
    for i, path in enumerate(job.images):
        try:
            image = decode_image(path)
        except DecodeError as e:
            if job.on_decode_error == "abort":
                raise
            log.warning("skipping image %d: %s", i, e)
            continue
        ids.append(f"{i:06d}:{Path(path).stem}")
        decoded.append(image)
        labels.append(int(job.labels[i]))
    if not decoded:
        raise ValueError("no decodable images in the job")

    feats = _encode_batched(encoder.encode_images, decoded, job.batch_size)
    store = EmbeddingStore(l2_normalize(feats), tuple(ids), "image")
    manifest = DatasetManifest(
        split=job.split,
        model=encoder.model_id,
        backbone=encoder.backbone,
        num_classes=job.num_classes,
        provenance=_job_provenance(job, encoder),
    )
    out = Path(job.images_out)
    save_store(store, Labels.from_single(np.asarray(labels, dtype=np.int64)), manifest, out)
    return out


def extract_prompts(job: ExtractionJob) -> Path:
    """Encode every (template, class name) prompt into a prompt-bank file.

    Rows are template-major, row(t, c) = t * C + c, which the core's
    PromptBank container re-validates before anything is written.
    """
    if job.bank_out is None:
        raise ValueError("job.bank_out is not set")
    encoder = load_encoder(job.encoder, device=job.device)
    prompts = expand_prompts(job.templates, job.class_names)
    feats = _encode_batched(encoder.encode_texts, prompts, job.batch_size)

    C = job.num_classes
    ids = tuple(f"t{t:02d}:c{c:04d}" for t in range(len(job.templates)) for c in range(C))
    store = EmbeddingStore(l2_normalize(feats), ids, "text")
    labels = Labels.from_single(np.tile(np.arange(C, dtype=np.int64), len(job.templates)))
    manifest = DatasetManifest(
        split="prompts",
        model=encoder.model_id,
        backbone=encoder.backbone,
        num_classes=C,
        templates=job.templates,
        name_set=job.name_set,
        provenance=_job_provenance(job, encoder),
    )
    bank = PromptBank(store, labels, manifest)
    out = Path(job.bank_out)
    save_store(bank.store, bank.labels, bank.manifest, out)
    return out


def read_corrections(path) -> dict[str, tuple[int, ...]]:
    """Human-verified label corrections: sample id -> non-empty label set."""
    doc = json.loads(Path(path).read_text())
    raw = doc.get("corrections")
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a top-level 'corrections' mapping")
    out: dict[str, tuple[int, ...]] = {}
    for sid, ids in raw.items():
        labels = tuple(sorted({int(c) for c in ids}))
        if not labels:
            raise ValueError(f"{path}: empty label set for sample {sid!r}")
        out[str(sid)] = labels
    return out


def build_manifest(
    split: str,
    cleaner_source,
    names_source,
    sample_ids: Sequence[str],
    *,
    model: str = "",
    backbone: str = "",
    provenance: dict | None = None,
) -> tuple[DatasetManifest, ClassCatalog]:
    """The split's manifest (with verified-label fields) plus its catalog.

    ``cleaner_source`` is a corrections JSON; rows it covers get
    ``cleaner_mask`` True and their label sets in ``multi_labels``. When
    it is None or absent, the manifest is emitted without those fields
    (the core then refuses set-membership evaluation). ``names_source``
    must be a class catalog carrying all three standard name sets. To
    enrich an extracted store, load it, build the manifest over its
    ``sample_ids``, and re-save the triple.
    """
    catalog = ClassCatalog.load(names_source)
    missing = [k for k in REQUIRED_NAME_SETS if k not in catalog.name_sets]
    if missing:
        raise ValueError(f"{names_source}: catalog is missing name sets {missing}")
    diagnostics = catalog.validate()
    if diagnostics:
        raise ValueError(f"{names_source}: invalid catalog: {diagnostics}")

    mask = None
    multi = None
    if cleaner_source is None or not Path(cleaner_source).exists():
        log.warning("no correction data for split %r; manifest omits verified labels", split)
    else:
        corrections = read_corrections(cleaner_source)
        for sid, labels in corrections.items():
            if labels[-1] >= catalog.num_classes:
                raise ValueError(f"correction for {sid!r} outside [0, {catalog.num_classes})")
        ids = [str(s) for s in sample_ids]
        unknown = corrections.keys() - set(ids)
        if unknown:
            log.warning("ignoring %d correction(s) for ids not in split %r", len(unknown), split)
        mask = np.array([sid in corrections for sid in ids], dtype=bool)
        multi = {i: corrections[sid] for i, sid in enumerate(ids) if sid in corrections}

    manifest = DatasetManifest(
        split=split,
        model=model,
        backbone=backbone,
        num_classes=catalog.num_classes,
        cleaner_mask=mask,
        multi_labels=multi,
        provenance=dict(provenance or {}),
    )
    return manifest, catalog
