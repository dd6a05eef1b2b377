import itertools

import numpy as np
import pytest

from symtrack.assignment import assignment_cost, hungarian


def brute_min(C):
    n, m = C.shape
    best = np.inf
    if n <= m:
        for perm in itertools.permutations(range(m), n):
            best = min(best, sum(C[i, perm[i]] for i in range(n)))
    else:
        for perm in itertools.permutations(range(n), m):
            best = min(best, sum(C[perm[j], j] for j in range(m)))
    return best


def test_diagonal():
    C = np.array([[1.0, 9, 9], [9, 1, 9], [9, 9, 1]])
    assert hungarian(C) == [(0, 0), (1, 1), (2, 2)]


def test_anti_diagonal():
    C = np.array([[5.0, 1], [1, 5]])
    assert hungarian(C) == [(0, 1), (1, 0)]


@pytest.mark.parametrize("shape", [(3, 3), (4, 4), (5, 5), (6, 6), (3, 5), (5, 3)])
def test_matches_brute_force(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(100):
        C = rng.uniform(0, 10, size=shape)
        pairs = hungarian(C)
        assert len(pairs) == min(shape)
        assert len({r for r, _ in pairs}) == len({c for _, c in pairs}) == len(pairs)
        assert assignment_cost(C, pairs) == pytest.approx(brute_min(C), abs=1e-9)


def test_integer_ties_still_optimal():
    rng = np.random.default_rng(7)
    for _ in range(100):
        C = rng.integers(0, 3, size=(5, 5)).astype(float)
        assert assignment_cost(C, hungarian(C)) == brute_min(C)


def test_forbidden_entries_dropped():
    C = np.array([[np.inf, 1.0], [np.inf, 2.0]])
    pairs = hungarian(C)
    assert len(pairs) == 1
    assert pairs == [(0, 1)]


def test_forbidden_prefers_cardinality():
    # the cheap pair (0, 0) would leave row 1 unmatched
    C = np.array([[0.0, 100.0], [50.0, np.inf]])
    assert hungarian(C) == [(0, 1), (1, 0)]


def test_all_forbidden_and_empty():
    assert hungarian(np.full((3, 3), np.inf)) == []
    assert hungarian(np.zeros((0, 4))) == []


def test_rejects_non_matrix():
    with pytest.raises(ValueError):
        hungarian([1.0, 2.0])


def test_deterministic():
    C = np.ones((4, 4))
    assert hungarian(C) == hungarian(C)
