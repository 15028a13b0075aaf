import numpy as np
import pytest

from oracles import knn_mean_sqdist_oracle
from structcore.errors import DimensionError, InvariantError
from structcore.knn import score_patches


def _score(queries, bank, k):
    p = queries.shape[0]
    return score_patches(queries, bank, k, grid_h=1, grid_w=p).scores


def test_exact_match_scores_zero(rng):
    bank = rng.standard_normal((10, 4)).astype(np.float32)
    q = bank[3:4]
    assert _score(q, bank, 1)[0] == 0.0


def test_hand_case_two_neighbors():
    bank = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.float32)
    q = np.array([[1, 1]], dtype=np.float32)
    assert _score(q, bank, 2)[0] == pytest.approx(1.0, abs=1e-7)


def test_k_at_least_bank_size_means_full_mean(rng):
    bank = rng.standard_normal((6, 3)).astype(np.float32)
    q = rng.standard_normal((4, 3)).astype(np.float32)
    full = _score(q, bank, 6)
    more = _score(q, bank, 100)
    np.testing.assert_array_equal(full, more)
    want = knn_mean_sqdist_oracle(q, bank, 6)
    np.testing.assert_allclose(full, want, rtol=1e-5)


def test_matches_oracle_random_instances(rng):
    for _ in range(25):
        p = int(rng.integers(1, 65))
        n = int(rng.integers(1, 257))
        d = int(rng.integers(1, 17))
        k = int(rng.integers(1, 8))
        q = rng.standard_normal((p, d)).astype(np.float32)
        b = rng.standard_normal((n, d)).astype(np.float32)
        got = _score(q, b, k).astype(np.float64)
        want = knn_mean_sqdist_oracle(q, b, k)
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-6)


def test_monotone_in_k(rng):
    q = rng.standard_normal((8, 5)).astype(np.float32)
    b = rng.standard_normal((30, 5)).astype(np.float32)
    prev = None
    for k in range(1, 31):
        cur = _score(q, b, k)
        if prev is not None:
            assert np.all(cur >= prev - 1e-6)
        prev = cur


def test_translation_invariance(rng):
    q = rng.standard_normal((8, 5)).astype(np.float32)
    b = rng.standard_normal((30, 5)).astype(np.float32)
    shift = rng.standard_normal(5).astype(np.float32)
    a = _score(q, b, 3)
    c = _score(q + shift, b + shift, 3)
    np.testing.assert_allclose(a, c, rtol=1e-4, atol=1e-5)


def test_scores_nonnegative_even_for_duplicates(rng):
    b = np.repeat(rng.standard_normal((3, 4)).astype(np.float32), 5, axis=0)
    assert np.all(_score(b, b, 5) >= 0.0)


def test_errors():
    q = np.zeros((2, 3), dtype=np.float32)
    with pytest.raises(InvariantError):
        score_patches(q, np.zeros((0, 3), np.float32), 1, 1, 2)
    with pytest.raises(DimensionError):
        score_patches(q, np.zeros((4, 2), np.float32), 1, 1, 2)
    with pytest.raises(DimensionError):
        score_patches(q, np.zeros((4, 3), np.float32), 1, 3, 2)
