import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimclust.metrics import adjusted_rand_index, correct_k_rate
from trimclust.rng import RngStream


def ari_pair_counting(a, b):
    """O(n^2) oracle: count pair agreements directly."""
    n = len(a)
    same_a = np.array([[a[i] == a[j] for j in range(n)] for i in range(n)])
    same_b = np.array([[b[i] == b[j] for j in range(n)] for i in range(n)])
    pairs = [(i, j) for i, j in itertools.combinations(range(n), 2)]
    n11 = sum(1 for i, j in pairs if same_a[i, j] and same_b[i, j])
    n10 = sum(1 for i, j in pairs if same_a[i, j] and not same_b[i, j])
    n01 = sum(1 for i, j in pairs if not same_a[i, j] and same_b[i, j])
    total = len(pairs)
    sum_rows = n11 + n10
    sum_cols = n11 + n01
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (n11 - expected) / (max_index - expected)


def test_identical_labelings():
    assert adjusted_rand_index([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0
    assert adjusted_rand_index([1, 1, 2, 2], [5, 5, 0, 0]) == 1.0


def test_one_cluster_vs_singletons_is_zero():
    a = np.zeros(6, dtype=int)
    b = np.arange(6)
    assert adjusted_rand_index(a, b) == pytest.approx(0.0, abs=1e-12)


def test_five_point_hand_contingency():
    # contingency [[2, 0], [1, 2]]: ARI = (2 - 1.6) / (4 - 1.6) = 1/6
    a = [1, 1, 2, 2, 2]
    b = [1, 1, 1, 2, 2]
    assert adjusted_rand_index(a, b) == pytest.approx(1 / 6, abs=1e-12)
    assert adjusted_rand_index(a, b) == pytest.approx(ari_pair_counting(a, b), abs=1e-12)


def test_length_mismatch():
    with pytest.raises(ValueError):
        adjusted_rand_index([1, 2], [1, 2, 3])


@given(st.integers(0, 100_000))
@settings(max_examples=80, deadline=None)
def test_matches_pair_counting_oracle(seed):
    gen = RngStream(seed).generator()
    n = int(gen.integers(2, 51))
    a = gen.integers(0, int(gen.integers(1, 6)) + 1, size=n)
    b = gen.integers(0, int(gen.integers(1, 6)) + 1, size=n)
    assert adjusted_rand_index(a, b) == pytest.approx(
        ari_pair_counting(a, b), abs=1e-12
    )


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_symmetry_and_relabeling_invariance(seed):
    gen = RngStream(seed).generator()
    n = int(gen.integers(2, 40))
    a = gen.integers(0, 4, size=n)
    b = gen.integers(0, 4, size=n)
    assert adjusted_rand_index(a, b) == adjusted_rand_index(b, a)
    remap = {0: 7, 1: 3, 2: 11, 3: 0}
    a2 = np.array([remap[v] for v in a])
    assert adjusted_rand_index(a, b) == pytest.approx(
        adjusted_rand_index(a2, b), abs=0
    )


def test_correct_k_rate():
    assert correct_k_rate([4, 4, 4], 4) == 1.0
    assert correct_k_rate([1, 2, 3], 4) == 0.0
    assert correct_k_rate([4] * 7 + [3] * 3, 4) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        correct_k_rate([], 2)
