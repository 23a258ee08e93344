"""Evidence difference measures and credibility.

DistP uses the Euclidean pignistic distance scaled by ``1/sqrt(2)`` so that
opposed point masses sit at distance 1.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Sequence

import numpy as np

from .evidence import MassFunction, argmax_betp, betp


def distp(p: Sequence[float], q: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return math.sqrt(0.5 * float(np.sum((p - q) ** 2)))


def distp_from_dots(pp: float, qq: float, pq: float) -> float:
    """DistP from the three inner products <p,p>, <q,q>, <p,q>."""
    return math.sqrt(max(0.5 * (pp + qq - 2.0 * pq), 0.0))


def confp(p: Sequence[float], q: Sequence[float]) -> float:
    if argmax_betp(p) == argmax_betp(q):
        return 0.0
    return float(np.max(p)) * float(np.max(q))


def combine_dist_conf(dist: float, conf: float) -> float:
    return (dist + conf) / (1.0 + dist * conf)


def dismp(m1: MassFunction, m2: MassFunction) -> float:
    if m1.frame != m2.frame:
        raise ValueError("mass functions live on different frames")
    p, q = betp(m1), betp(m2)
    return combine_dist_conf(distp(p, q), confp(p, q))


def edmm(evidence: Sequence[MassFunction]) -> np.ndarray:
    """Complete pairwise DismP matrix."""
    n = len(evidence)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = dismp(evidence[i], evidence[j])
    return d


def credibility_from_edmm(d: np.ndarray) -> np.ndarray:
    """Normalized inverse total difference per row.

    When every row sum is zero (identical evidence) all credibilities are 1.
    A zero row next to nonzero rows cannot occur for a valid EDMM but is
    mapped to 1 as well.
    """
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
        raise ValueError(f"expected a square matrix with N >= 2, got {d.shape}")
    off = d - np.diag(np.diag(d))
    rows = off.sum(axis=1)
    if not np.any(rows > 0):
        return np.ones(d.shape[0])
    lowest = rows.min()
    cred = np.ones(d.shape[0])
    positive = rows > 0
    cred[positive] = lowest / rows[positive]
    return cred


def edmm_to_csv(d: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(d):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def edmm_from_csv(text: str) -> np.ndarray:
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"matrix CSV is not square: {arr.shape}")
    return arr
