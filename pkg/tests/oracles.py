"""Reference implementations the engine is cross-checked against.

Everything here favors clarity over speed: per-row loops, one query at a
time, separate passes per parameter value, library statistics calls. The
engine's blocked, threaded, and prefix-reusing paths must agree with these.
"""

import numpy as np
from scipy import stats


def naive_normalize(rows: np.ndarray) -> np.ndarray:
    """Row-wise unit vectors: float64 norm and divide, one float32 round."""
    rows = np.asarray(rows, dtype=np.float32)
    out = np.empty_like(rows)
    for i in range(rows.shape[0]):
        row = rows[i].astype(np.float64)
        out[i] = (row / np.sqrt(np.sum(row * row))).astype(np.float32)
    return out


def naive_similarities(query: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Cosine of one normalized query against all normalized reference rows.

    Accumulates each dot product in float64 and rounds once to float32,
    which is the engine's documented similarity value.
    """
    return np.dot(refs.astype(np.float64), query.astype(np.float64)).astype(np.float32)


def naive_top_k(
    queries: np.ndarray,
    refs: np.ndarray,
    k: int,
    exclude: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force exact top-k per query, ordered by (similarity desc, index asc)."""
    q = naive_normalize(queries)
    r = naive_normalize(refs)
    n = r.shape[0]
    indices = np.empty((q.shape[0], k), dtype=np.int64)
    sims = np.empty((q.shape[0], k), dtype=np.float32)
    for i in range(q.shape[0]):
        s = naive_similarities(q[i], r)
        order = np.lexsort((np.arange(n), -s))
        if exclude is not None and exclude[i] >= 0:
            order = order[order != exclude[i]]
        indices[i] = order[:k]
        sims[i] = s[order[:k]]
    return indices, sims


def naive_vote(neighbor_labels: np.ndarray, neighbor_sims: np.ndarray) -> int:
    """Majority vote over one query's neighbors.

    Ties break by the larger similarity sum (accumulated per class in
    neighbor-rank order), then by the smaller class id.
    """
    counts: dict[int, int] = {}
    sums: dict[int, float] = {}
    for lab, sim in zip(neighbor_labels, neighbor_sims):
        lab = int(lab)
        counts[lab] = counts.get(lab, 0) + 1
        sums[lab] = sums.get(lab, 0.0) + float(sim)
    return min(counts, key=lambda c: (-counts[c], -sums[c], c))


def naive_classify(
    queries: np.ndarray, refs: np.ndarray, ref_labels: np.ndarray, k: int
) -> np.ndarray:
    indices, sims = naive_top_k(queries, refs, k)
    return np.array(
        [naive_vote(ref_labels[indices[i]], sims[i]) for i in range(len(indices))],
        dtype=np.int64,
    )


def naive_fold_assignment(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for c in sorted(set(int(x) for x in labels)):
        rows = np.flatnonzero(labels == c)
        perm = rng.permutation(rows)
        for pos, row in enumerate(perm):
            fold_of[row] = pos % folds
    return fold_of


def naive_cv_best_k(
    rows: np.ndarray, labels: np.ndarray, k_grid, folds: int, seed: int
) -> int:
    """Stratified CV from scratch: one full k-NN pass per (fold, k) pair."""
    k_grid = sorted(set(int(k) for k in k_grid))
    fold_of = naive_fold_assignment(labels, folds, seed)
    means = {}
    for k in k_grid:
        accs = []
        for f in range(folds):
            held = np.flatnonzero(fold_of == f)
            if len(held) == 0:
                continue
            rest = np.flatnonzero(fold_of != f)
            preds = naive_classify(rows[held], rows[rest], labels[rest], k)
            accs.append(float(np.mean(preds == labels[held])))
        means[k] = float(np.mean(accs))
    best = max(means.values())
    return min(k for k in k_grid if means[k] == best)


def t_interval_half_width(trial_accuracies) -> tuple[float, float]:
    """95% t-interval via scipy's interval API with population-std scale."""
    vals = np.asarray(trial_accuracies, dtype=np.float64)
    n = len(vals)
    scale = vals.std(ddof=0) / np.sqrt(n)
    lo, hi = stats.t.interval(0.95, n - 1, loc=vals.mean(), scale=scale)
    return float(vals.mean()), float((hi - lo) / 2.0)
