"""Shared generators for tests that need a known low-rank ground truth."""
import numpy as np


def rank2_case(seed: int, n: int, frac: float = 0.5):
    """Symmetric nonnegative rank-2 matrix with zero diagonal, plus a symmetric mask.

    The zero diagonal forces a bipartite support: ``a b^T + b a^T`` with
    ``a`` and ``b`` on disjoint halves.
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    a, b = np.zeros(n), np.zeros(n)
    a[perm[: n // 2]] = rng.uniform(0.2, 1.0, n // 2)
    b[perm[n // 2:]] = rng.uniform(0.2, 1.0, n - n // 2)
    d = np.outer(a, b) + np.outer(b, a)
    d /= d.max()
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < frac
    mask = np.zeros((n, n), dtype=bool)
    mask[iu[0][keep], iu[1][keep]] = True
    return d, mask | mask.T
