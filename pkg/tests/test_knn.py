import numpy as np
import pytest

from conftest import blob_data, image_store, unit_rows
from oracles import naive_classify, naive_top_k, naive_vote

from embclass import (
    NeighborList,
    classify_knn,
    exclude_self,
    load_neighbors,
    save_neighbors,
    sweep_k,
    top_k,
    vote,
    vote_prefixes,
)


def test_query_in_corpus_is_its_own_top1():
    rng = np.random.default_rng(0)
    refs = unit_rows(rng, 50, 16)
    result = top_k(refs[5:6], refs, 3)
    assert result.indices[0, 0] == 5
    assert result.similarities[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_duplicate_rows_tie_breaks_to_smaller_index():
    rng = np.random.default_rng(1)
    refs = unit_rows(rng, 20, 8)
    refs[13] = refs[4]  # exact duplicate pair
    result = top_k(refs[4:5], refs, 2)
    np.testing.assert_array_equal(result.indices[0], [4, 13])
    assert result.similarities[0, 0] == result.similarities[0, 1]


def test_matches_brute_force_small():
    rng = np.random.default_rng(2)
    refs = unit_rows(rng, 500, 64)
    queries = unit_rows(rng, 100, 64)
    got = top_k(queries, refs, 9)
    want_idx, want_sim = naive_top_k(queries, refs, 9)
    np.testing.assert_array_equal(got.indices, want_idx)
    np.testing.assert_array_equal(got.similarities, want_sim)


def test_matches_brute_force_unnormalized_input():
    # top_k normalizes internally; feeding scaled rows changes nothing.
    rng = np.random.default_rng(3)
    refs = (rng.standard_normal((200, 24)) * 4.0).astype(np.float32)
    queries = (rng.standard_normal((40, 24)) * 0.05).astype(np.float32)
    got = top_k(queries, refs, 7)
    want_idx, want_sim = naive_top_k(queries, refs, 7)
    np.testing.assert_array_equal(got.indices, want_idx)
    np.testing.assert_array_equal(got.similarities, want_sim)


def test_massive_ties_fall_back_to_exact_scan():
    # 8 distinct rows tiled 50x: the similarity spectrum has 8 values and
    # every cut lands inside a tie group.
    rng = np.random.default_rng(4)
    base = unit_rows(rng, 8, 16)
    refs = np.tile(base, (50, 1))
    queries = unit_rows(rng, 10, 16)
    for k in (1, 5, 60, 399):
        got = top_k(queries, refs, k)
        want_idx, want_sim = naive_top_k(queries, refs, k)
        np.testing.assert_array_equal(got.indices, want_idx)
        np.testing.assert_array_equal(got.similarities, want_sim)


def test_constant_corpus_returns_first_indices():
    row = np.full((1, 4), 0.5, dtype=np.float32)
    refs = np.repeat(row, 30, axis=0)
    got = top_k(row, refs, 5)
    np.testing.assert_array_equal(got.indices[0], [0, 1, 2, 3, 4])


def test_exclusion_by_position():
    rng = np.random.default_rng(5)
    rows = unit_rows(rng, 10, 8)
    result = top_k(rows, rows, 9, exclude_self=True)
    for i in range(10):
        assert i not in result.indices[i]
        assert set(result.indices[i]) == set(range(10)) - {i}


def test_exclusion_by_sample_id():
    rng = np.random.default_rng(6)
    train = image_store(unit_rows(rng, 12, 8), prefix="t")
    # two query rows share train ids, one is new
    q_rows = np.concatenate([train.data[[3]], unit_rows(rng, 1, 8), train.data[[7]]])
    from embclass import EmbeddingStore

    queries = EmbeddingStore(q_rows, (train.sample_ids[3], "new", train.sample_ids[7]), "image")
    policy = exclude_self(queries, train)
    np.testing.assert_array_equal(policy, [3, -1, 7])
    result = top_k(queries, train, 11, exclude_self=True)
    assert 3 not in result.indices[0]
    assert 7 not in result.indices[2]
    assert result.indices[1, 0] >= 0  # unpaired query keeps all 12 candidates

    # disjoint id spaces: exclusion is a no-op
    fresh = image_store(unit_rows(rng, 4, 8), prefix="v")
    np.testing.assert_array_equal(exclude_self(fresh, train), [-1, -1, -1, -1])
    a = top_k(fresh, train, 5, exclude_self=True)
    b = top_k(fresh, train, 5)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_exclusion_never_returns_self_property():
    rng = np.random.default_rng(7)
    for trial in range(10):
        n = int(rng.integers(5, 60))
        rows = unit_rows(rng, n, int(rng.integers(2, 24)))
        k = int(rng.integers(1, n))
        result = top_k(rows, rows, k, exclude_self=True)
        assert not np.any(result.indices == np.arange(n)[:, None])
        # and it agrees with brute force under the same policy
        want_idx, want_sim = naive_top_k(rows, rows, k, exclude=np.arange(n))
        np.testing.assert_array_equal(result.indices, want_idx)
        np.testing.assert_array_equal(result.similarities, want_sim)


def test_positional_exclusion_requires_equal_length():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError):
        top_k(unit_rows(rng, 3, 4), unit_rows(rng, 5, 4), 2, exclude_self=True)


def test_k_and_dim_validation():
    rng = np.random.default_rng(9)
    refs = unit_rows(rng, 10, 4)
    with pytest.raises(ValueError):
        top_k(refs, refs, 0)
    with pytest.raises(ValueError):
        top_k(refs, refs, 11)
    with pytest.raises(ValueError):
        top_k(refs, refs, 10, exclude_self=True)  # only 9 candidates remain
    with pytest.raises(ValueError):
        top_k(unit_rows(rng, 2, 5), refs, 1)
    with pytest.raises(ValueError):
        top_k(np.zeros((2, 4), dtype=np.float32), refs, 1)  # zero rows cannot normalize


def test_vote_k1_and_majority():
    neighbors = NeighborList(
        indices=np.array([[0, 1, 2], [3, 4, 5]]),
        similarities=np.array([[0.9, 0.8, 0.7], [0.6, 0.5, 0.4]], dtype=np.float32),
    )
    labels = np.array([2, 7, 7, 1, 1, 0])
    np.testing.assert_array_equal(vote(neighbors, labels, 1), [2, 1])
    np.testing.assert_array_equal(vote(neighbors, labels), [7, 1])


def test_vote_tie_rules_frozen_cases():
    # counts tie 2-2; sums 0.875+0.5=1.375 < 0.75+0.75=1.5 -> class 1
    neighbors = NeighborList(
        indices=np.array([[0, 1, 2, 3]]),
        similarities=np.array([[0.875, 0.75, 0.75, 0.5]], dtype=np.float32),
    )
    np.testing.assert_array_equal(vote(neighbors, np.array([0, 1, 1, 0])), [1])
    # counts tie, sums tie exactly (0.875+0.625 == 0.75+0.75) -> smaller id
    neighbors = NeighborList(
        indices=np.array([[0, 1, 2, 3]]),
        similarities=np.array([[0.875, 0.75, 0.75, 0.625]], dtype=np.float32),
    )
    np.testing.assert_array_equal(vote(neighbors, np.array([5, 3, 3, 5])), [3])


def test_vote_matches_reference_implementation():
    rng = np.random.default_rng(10)
    for trial in range(20):
        n = int(rng.integers(30, 120))
        refs = unit_rows(rng, n, 12)
        queries = unit_rows(rng, 25, 12)
        labels = rng.integers(0, 5, size=n)
        k = int(rng.integers(1, 14))
        neighbors = top_k(queries, refs, k)
        got = vote(neighbors, labels)
        want = [
            naive_vote(labels[neighbors.indices[i]], neighbors.similarities[i])
            for i in range(25)
        ]
        np.testing.assert_array_equal(got, want)


def test_classify_matches_reference_end_to_end():
    rng = np.random.default_rng(11)
    rows, labels = blob_data(rng, C=4, per_class=40, d=16)
    queries = unit_rows(rng, 30, 16) + 0.5 * rows[rng.integers(0, len(rows), 30)]
    queries = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries.astype(np.float32)
    for k in (1, 3, 9):
        preds = classify_knn(queries, rows, labels, k)
        np.testing.assert_array_equal(preds.class_ids, naive_classify(queries, rows, labels, k))
        assert preds.provenance == f"knn(k={k})"
    store = image_store(queries, prefix="q")
    preds = classify_knn(store, rows, labels, 3)
    assert preds.sample_ids == store.sample_ids


def test_prefix_votes_equal_independent_runs():
    rng = np.random.default_rng(12)
    rows, labels = blob_data(rng, C=5, per_class=30, d=12)
    queries = unit_rows(rng, 40, 12)
    grid = (1, 3, 5, 9)
    neighbors = top_k(queries, rows, max(grid))
    votes = vote_prefixes(neighbors, labels, grid)
    for k in grid:
        np.testing.assert_array_equal(votes[k], classify_knn(queries, rows, labels, k).class_ids)


def test_sweep_matches_per_k_accuracies():
    rng = np.random.default_rng(13)
    rows, labels = blob_data(rng, C=3, per_class=25, d=10)
    val_rows, val_labels = blob_data(rng, C=3, per_class=10, d=10)
    accs = sweep_k(val_rows, rows, labels, (5, 1, 3, 3), val_labels)
    assert sorted(accs) == [1, 3, 5]  # grid is deduplicated and sorted
    for k in accs:
        preds = classify_knn(val_rows, rows, labels, k)
        assert accs[k] == np.mean(preds.class_ids == val_labels)


def test_permutation_equivariance():
    rng = np.random.default_rng(14)
    for trial in range(10):
        n = int(rng.integers(20, 100))
        refs = unit_rows(rng, n, 10)
        queries = unit_rows(rng, 8, 10)
        labels = rng.integers(0, 4, size=n)
        k = int(rng.integers(1, 8))
        perm = rng.permutation(n)
        base = top_k(queries, refs, k)
        shuffled = top_k(queries, refs[perm], k)
        # similarity multisets agree; predictions are permutation-invariant
        np.testing.assert_array_equal(
            np.sort(base.similarities, axis=1), np.sort(shuffled.similarities, axis=1)
        )
        np.testing.assert_array_equal(
            vote(base, labels), vote(shuffled, labels[perm])
        )


def test_positive_scaling_invariance():
    # scaling a float32 row perturbs it by an ulp before normalization, so
    # similarities agree to tolerance while the ranking stays put
    rng = np.random.default_rng(15)
    refs = unit_rows(rng, 60, 8)
    queries = unit_rows(rng, 10, 8)
    scaled = (queries * rng.uniform(0.2, 9.0, size=(10, 1))).astype(np.float32)
    a = top_k(queries, refs, 5)
    b = top_k(scaled, refs, 5)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_allclose(a.similarities, b.similarities, atol=1e-5)


def test_thread_counts_do_not_change_results():
    rng = np.random.default_rng(16)
    refs = unit_rows(rng, 3000, 48)
    queries = unit_rows(rng, 500, 48)
    labels = rng.integers(0, 10, size=3000)
    base = top_k(queries, refs, 13, threads=1)
    for threads in (2, 4, 8):
        other = top_k(queries, refs, 13, threads=threads)
        np.testing.assert_array_equal(base.indices, other.indices)
        np.testing.assert_array_equal(base.similarities, other.similarities)
    np.testing.assert_array_equal(
        classify_knn(queries, refs, labels, 9, threads=1).class_ids,
        classify_knn(queries, refs, labels, 9, threads=7).class_ids,
    )


def test_block_boundaries_are_invisible():
    # sizes straddling the query/corpus block sizes still match brute force
    rng = np.random.default_rng(17)
    refs = unit_rows(rng, 8192 + 37, 8)
    queries = unit_rows(rng, 1024 + 3, 8)
    got = top_k(queries, refs, 3, threads=3)
    want_idx, want_sim = naive_top_k(queries, refs, 3)
    np.testing.assert_array_equal(got.indices, want_idx)
    np.testing.assert_array_equal(got.similarities, want_sim)


def test_neighbor_list_validation_and_prefix():
    with pytest.raises(ValueError):
        NeighborList(np.array([[0, 1]]), np.array([[0.5, 0.6]], dtype=np.float32))
    with pytest.raises(ValueError):
        NeighborList(np.array([[1, 0]]), np.array([[0.5, 0.5]], dtype=np.float32))
    with pytest.raises(ValueError):
        NeighborList(np.array([[0, 1]]), np.array([[1.5, 0.5]], dtype=np.float32))
    with pytest.raises(ValueError):
        NeighborList(np.array([[0, 1]]), np.array([[np.nan, 0.5]], dtype=np.float32))
    nl = NeighborList(np.array([[4, 2, 7]]), np.array([[0.9, 0.5, 0.25]], dtype=np.float32))
    np.testing.assert_array_equal(nl.prefix(2).indices, [[4, 2]])
    with pytest.raises(ValueError):
        nl.prefix(4)
    with pytest.raises(ValueError):
        vote(nl, np.array([0] * 8), 5)


def test_neighbor_dump_round_trip(tmp_path):
    rng = np.random.default_rng(18)
    refs = unit_rows(rng, 40, 8)
    queries = image_store(unit_rows(rng, 6, 8), prefix="q")
    neighbors = top_k(queries, refs, 5)
    path = tmp_path / "nn.emb"
    save_neighbors(neighbors, path, queries.sample_ids)
    back, ids = load_neighbors(path)
    np.testing.assert_array_equal(back.indices, neighbors.indices)
    np.testing.assert_array_equal(back.similarities, neighbors.similarities)
    assert ids == queries.sample_ids


def test_randomized_brute_force_agreement():
    rng = np.random.default_rng(19)
    for trial in range(15):
        n = int(rng.integers(11, 400))
        d = int(rng.integers(2, 64))
        m = int(rng.integers(1, 40))
        refs = unit_rows(rng, n, d)
        queries = unit_rows(rng, m, d)
        k = int(rng.integers(1, min(n, 20)))
        got = top_k(queries, refs, k)
        want_idx, want_sim = naive_top_k(queries, refs, k)
        np.testing.assert_array_equal(got.indices, want_idx)
        np.testing.assert_array_equal(got.similarities, want_sim)
