"""Partition-agreement metrics.

Label 0 (noise / trimmed) is deliberately treated as an ordinary class, so a
method that trims observations is scored on where it puts them.
"""

from __future__ import annotations

import numpy as np


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement between two labelings of the same items.

    Computed from the contingency table with the permutation-model expected
    index; equals 1 exactly when the partitions coincide up to relabeling.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"label vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    table = _contingency(a, b)
    sum_cells = int(_comb2(table).sum())
    sum_rows = int(_comb2(table.sum(axis=1)).sum())
    sum_cols = int(_comb2(table.sum(axis=0)).sum())
    total = int(_comb2(n))
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # both partitions are the same trivial partition
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def correct_k_rate(fitted_ks, truth: int) -> float:
    """Fraction of fitted cluster counts equal to the true one."""
    ks = list(fitted_ks)
    if not ks:
        raise ValueError("empty result list")
    return sum(1 for k in ks if k == truth) / len(ks)
