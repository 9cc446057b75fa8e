"""Exact batched top-k cosine search and majority-vote classification.

Similarity contract: rows are L2-normalized (float64 norm, float64 divide,
rounded to float32), and the similarity of two normalized rows is their
float64 inner product rounded once to float32. Neighbors are the k largest
similarities per query, ordered by descending similarity with ties broken
by ascending reference index. The contract mentions no blocking, threading
or BLAS detail on purpose: any implementation can reproduce it exactly, and
this one returns bit-identical results at every thread count.

Internally a float32 GEMM screens candidates. Its accumulation error is
bounded well below the drift margin, so every reference that could belong
to the true top-k survives screening; the survivors are rescored with the
canonical float64 rule and sorted under the tie rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import store as store_mod
from .numerics import CORPUS_BLOCK, QUERY_BLOCK, iter_blocks, l2_normalize, map_blocks
from .predictions import PredictionSet
from .store import DatasetManifest, EmbeddingStore, Labels

K_GRID_DEFAULT = (1, 3, 5, 7, 9, 11, 13, 51)

# Extra screening slots kept beyond k. If all of them land inside the drift
# margin (mass ties), the affected queries fall back to a full exact scan.
EXTRA_KEEP = 16


@dataclass(eq=False)
class NeighborList:
    """Per query: k (reference index, similarity) pairs in ranked order."""

    indices: np.ndarray
    similarities: np.ndarray

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.similarities = np.ascontiguousarray(self.similarities, dtype=np.float32)
        if self.indices.ndim != 2 or self.indices.shape != self.similarities.shape:
            raise ValueError("indices and similarities must share an (m, k) shape")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        sims = self.similarities
        if not np.isfinite(sims).all():
            raise ValueError("similarities must be finite")
        if sims.size and (sims.min() < -1 - 1e-5 or sims.max() > 1 + 1e-5):
            raise ValueError("similarities outside [-1-1e-5, 1+1e-5]")
        a, b = sims[:, :-1], sims[:, 1:]
        ia, ib = self.indices[:, :-1], self.indices[:, 1:]
        ordered = (a > b) | ((a == b) & (ia < ib))
        if not ordered.all():
            raise ValueError("neighbors are not strictly ordered by (similarity desc, index asc)")

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __len__(self) -> int:
        return self.indices.shape[0]

    def prefix(self, k: int) -> "NeighborList":
        if not 1 <= k <= self.k:
            raise ValueError(f"prefix k={k} outside [1, {self.k}]")
        return NeighborList(self.indices[:, :k], self.similarities[:, :k])


def _rows_and_ids(x: EmbeddingStore | np.ndarray) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(x, EmbeddingStore):
        return x.data, x.sample_ids
    rows = np.ascontiguousarray(x, dtype=np.float32)
    if rows.ndim != 2:
        raise ValueError("embedding rows must form a 2-D matrix")
    return rows, None


def _self_policy(
    queries: EmbeddingStore | np.ndarray, refs: EmbeddingStore | np.ndarray
) -> np.ndarray:
    _, q_ids = _rows_and_ids(queries)
    r_rows, r_ids = _rows_and_ids(refs)
    if q_ids is None or r_ids is None:
        q_rows, _ = _rows_and_ids(queries)
        if q_rows.shape[0] != r_rows.shape[0]:
            raise ValueError("positional self-exclusion requires equally sized query/ref arrays")
        return np.arange(r_rows.shape[0], dtype=np.int64)
    lookup = {s: j for j, s in enumerate(r_ids)}
    return np.asarray([lookup.get(s, -1) for s in q_ids], dtype=np.int64)


def exclude_self(
    queries: EmbeddingStore | np.ndarray, refs: EmbeddingStore | np.ndarray
) -> np.ndarray:
    """Pairing policy: per query, the reference index it must never match.

    Pairs are formed by sample id equality; queries with no id present in
    the reference store get -1 (no exclusion). Raw arrays pair by position
    and must therefore have equal length.
    """
    return _self_policy(queries, refs)


def _drift_margin(d: int) -> np.float32:
    # 4x the sequential accumulation bound d * 2^-24 for unit rows; never
    # below 1e-3 so short vectors keep absolute headroom.
    return np.float32(max(1e-3, 4.0 * d * 2.0**-24))


def _exact_row_topk(
    q: np.ndarray, refs: np.ndarray, k: int, excluded: int
) -> tuple[np.ndarray, np.ndarray]:
    """Full canonical scan for one query; the mass-tie fallback path."""
    n = refs.shape[0]
    qf = q.astype(np.float64)
    vals = np.empty(n, dtype=np.float32)
    for cs, ce in iter_blocks(n, CORPUS_BLOCK):
        vals[cs:ce] = (refs[cs:ce].astype(np.float64) @ qf).astype(np.float32)
    keys = vals.astype(np.float64)
    if excluded >= 0:
        keys[excluded] = -np.inf
    order = np.lexsort((np.arange(n), -keys))[:k]
    return order, vals[order]


def top_k(
    queries: EmbeddingStore | np.ndarray,
    refs: EmbeddingStore | np.ndarray,
    k: int,
    *,
    exclude_self: bool | np.ndarray = False,
    normalize: bool = True,
    threads: int = 1,
) -> NeighborList:
    """The k most cosine-similar reference rows per query, exactly.

    ``exclude_self`` may be the boolean flag (policy computed from sample
    ids) or a precomputed policy array from :func:`exclude_self`.
    """
    q_rows, _ = _rows_and_ids(queries)
    r_rows, _ = _rows_and_ids(refs)
    if q_rows.shape[1] != r_rows.shape[1]:
        raise ValueError(
            f"dimension mismatch: queries d={q_rows.shape[1]}, refs d={r_rows.shape[1]}"
        )
    m, d = q_rows.shape
    n = r_rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}] for {n} reference rows")

    if exclude_self is True:
        policy = _self_policy(queries, refs)
    elif exclude_self is False or exclude_self is None:
        policy = None
    else:
        policy = np.ascontiguousarray(exclude_self, dtype=np.int64)
        if policy.shape != (m,):
            raise ValueError("exclusion policy must have one entry per query")
    if policy is not None:
        avail = n - (policy >= 0).astype(np.int64)
        if k > avail.min():
            raise ValueError(f"k={k} exceeds available references after self-exclusion")
    else:
        avail = np.full(m, n, dtype=np.int64)

    if normalize:
        q_rows = l2_normalize(q_rows)
        r_rows = l2_normalize(r_rows)

    keep = min(k + EXTRA_KEEP, n)
    margin = _drift_margin(d)
    out_idx = np.empty((m, k), dtype=np.int64)
    out_val = np.empty((m, k), dtype=np.float32)

    def run_block(qs: int, qe: int) -> None:
        mb = qe - qs
        q_blk = q_rows[qs:qe]
        pol_blk = None if policy is None else policy[qs:qe]

        run_vals = np.full((mb, keep), -np.inf, dtype=np.float32)
        run_idx = np.full((mb, keep), -1, dtype=np.int64)
        for cs, ce in iter_blocks(n, CORPUS_BLOCK):
            scores = q_blk @ r_rows[cs:ce].T
            if pol_blk is not None:
                hit = np.flatnonzero((pol_blk >= cs) & (pol_blk < ce))
                scores[hit, pol_blk[hit] - cs] = -np.inf
            width = ce - cs
            if width > keep:
                part = np.argpartition(scores, width - keep, axis=1)[:, width - keep:]
                vals = np.take_along_axis(scores, part, axis=1)
                idx = (part + cs).astype(np.int64)
            else:
                vals = scores
                idx = np.broadcast_to(np.arange(cs, ce, dtype=np.int64), (mb, width))
            merged_v = np.concatenate([run_vals, vals], axis=1)
            merged_i = np.concatenate([run_idx, idx], axis=1)
            cut = merged_v.shape[1] - keep
            sel = np.argpartition(merged_v, cut, axis=1)[:, cut:]
            run_vals = np.take_along_axis(merged_v, sel, axis=1)
            run_idx = np.take_along_axis(merged_i, sel, axis=1)

        tau = np.partition(run_vals, keep - k, axis=1)[:, keep - k]
        threshold = tau - margin
        cand_mask = run_vals >= threshold[:, None]

        # Mass ties: everything kept sits inside the margin and more such
        # rows may exist beyond the kept set; rescan those queries exactly.
        needs_scan = (run_vals.min(axis=1) >= threshold) & (keep < avail[qs:qe])
        for i in np.flatnonzero(needs_scan):
            out_idx[qs + i], out_val[qs + i] = _exact_row_topk(
                q_blk[i], r_rows, k, -1 if pol_blk is None else int(pol_blk[i])
            )
        rows_left = np.flatnonzero(~needs_scan)
        if rows_left.size == 0:
            return

        mask = cand_mask[rows_left]
        counts = mask.sum(axis=1)
        width = int(counts.max())
        rr, cc = np.nonzero(mask)
        slot = np.arange(len(rr)) - np.searchsorted(rr, rr)
        pad_idx = np.zeros((len(rows_left), width), dtype=np.int64)
        pad_idx[rr, slot] = run_idx[rows_left][rr, cc]
        valid = np.arange(width) < counts[:, None]

        gathered = r_rows[pad_idx].astype(np.float64)
        canon = np.einsum("mwd,md->mw", gathered, q_blk[rows_left].astype(np.float64))
        canon = canon.astype(np.float32)
        canon[~valid] = -np.inf

        row_key = np.repeat(np.arange(len(rows_left)), width)
        order = np.lexsort((pad_idx.ravel(), -canon.ravel().astype(np.float64), row_key))
        local = order.reshape(len(rows_left), width) % width
        out_idx[qs + rows_left] = np.take_along_axis(pad_idx, local[:, :k], axis=1)
        out_val[qs + rows_left] = np.take_along_axis(canon, local[:, :k], axis=1)

    map_blocks(run_block, list(iter_blocks(m, QUERY_BLOCK)), threads)
    return NeighborList(out_idx, out_val)


def _label_array(ref_labels: Labels | np.ndarray) -> np.ndarray:
    if isinstance(ref_labels, Labels):
        return ref_labels.single()
    arr = np.ascontiguousarray(ref_labels, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("reference labels must be 1-D single labels")
    return arr


def vote(neighbors: NeighborList, ref_labels: Labels | np.ndarray, k: int | None = None) -> np.ndarray:
    """Majority class among the first k neighbors, per query.

    Ties break by larger summed similarity among the tied classes, then by
    smaller class id. Sums accumulate the float32 similarities in float64
    in neighbor-rank order, so the outcome is schedule-independent.
    """
    labels = _label_array(ref_labels)
    k = neighbors.k if k is None else k
    if not 1 <= k <= neighbors.k:
        raise ValueError(f"vote k={k} outside [1, {neighbors.k}]")
    neigh_labels = labels[neighbors.indices[:, :k]]
    if k == 1:
        return neigh_labels[:, 0].copy()
    sims = neighbors.similarities[:, :k].astype(np.float64)
    out = np.empty(len(neighbors), dtype=np.int64)
    for i in range(len(neighbors)):
        classes, inv = np.unique(neigh_labels[i], return_inverse=True)
        counts = np.bincount(inv)
        sums = np.bincount(inv, weights=sims[i])
        best = np.lexsort((classes, -sums, -counts))[0]
        out[i] = classes[best]
    return out


def classify_knn(
    queries: EmbeddingStore | np.ndarray,
    refs: EmbeddingStore | np.ndarray,
    ref_labels: Labels | np.ndarray,
    k: int,
    *,
    exclude_self: bool | np.ndarray = False,
    threads: int = 1,
) -> PredictionSet:
    """k-NN classification: top_k then vote, per query."""
    labels = _label_array(ref_labels)
    r_rows, _ = _rows_and_ids(refs)
    if len(labels) != r_rows.shape[0]:
        raise ValueError("reference labels do not match reference rows")
    neighbors = top_k(queries, refs, k, exclude_self=exclude_self, threads=threads)
    preds = vote(neighbors, labels)
    _, q_ids = _rows_and_ids(queries)
    if q_ids is None:
        q_ids = tuple(str(i) for i in range(len(preds)))
    return PredictionSet(q_ids, preds, provenance=f"knn(k={k})")


def vote_prefixes(
    neighbors: NeighborList, ref_labels: Labels | np.ndarray, k_grid: tuple[int, ...]
) -> dict[int, np.ndarray]:
    """Votes at every k in the grid from one neighbor pass at max(k_grid)."""
    labels = _label_array(ref_labels)
    return {k: vote(neighbors, labels, k) for k in k_grid}


def sweep_k(
    queries: EmbeddingStore | np.ndarray,
    refs: EmbeddingStore | np.ndarray,
    ref_labels: Labels | np.ndarray,
    k_grid: tuple[int, ...],
    eval_labels: Labels | np.ndarray,
    *,
    exclude_self: bool | np.ndarray = False,
    threads: int = 1,
) -> dict[int, float]:
    """Top-1 accuracy per k from a single neighbor pass at max(k_grid)."""
    if not k_grid:
        raise ValueError("k_grid must be non-empty")
    k_grid = tuple(sorted(set(int(k) for k in k_grid)))
    truth = _label_array(eval_labels)
    neighbors = top_k(queries, refs, max(k_grid), exclude_self=exclude_self, threads=threads)
    if len(truth) != len(neighbors):
        raise ValueError("eval labels do not match query count")
    votes = vote_prefixes(neighbors, ref_labels, k_grid)
    return {k: float(np.mean(votes[k] == truth)) for k in k_grid}


def save_neighbors(
    neighbors: NeighborList, path, query_ids: tuple[str, ...] | None = None
) -> None:
    """Persist a neighbor dump in the store container (role=neighbors).

    Similarities form the data matrix; neighbor indices ride in the label
    block, preserving rank order.
    """
    m, k = neighbors.indices.shape
    ids = query_ids if query_ids is not None else tuple(str(i) for i in range(m))
    dump = EmbeddingStore(neighbors.similarities, ids, role="neighbors")
    labels = Labels(neighbors.indices.ravel(), np.arange(0, m * k + 1, k, dtype=np.int64))
    manifest = DatasetManifest(provenance={"kind": "neighbor-dump", "k": k})
    store_mod.save_store(dump, labels, manifest, path)


def load_neighbors(path) -> tuple[NeighborList, tuple[str, ...]]:
    """Read a neighbor dump back as (NeighborList, query sample ids)."""
    dump, labels, manifest = store_mod.load_store(path)
    if dump.role != "neighbors":
        raise store_mod.StoreError(f"{path}: not a neighbor dump (role={dump.role})")
    k = int(manifest.provenance.get("k", 0)) or int(labels.counts()[0])
    indices = labels.values.reshape(dump.n, k)
    return NeighborList(indices, dump.data), dump.sample_ids
