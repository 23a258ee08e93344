"""Centralized credible fusion and plain Dempster folding, used as references."""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .edm import credibility_from_edmm, edmm
from .evidence import (CRED_CLAMP, MassFunction, dempster_pair, discount, discounted_weights,
                       mass_from_weights)

CROSS_CHECK_TOL = 1e-9


@dataclass(frozen=True)
class CcefResult:
    credibilities: np.ndarray
    fused: MassFunction
    edmm: np.ndarray
    discounted: tuple


def dr_fold(evidence: Sequence[MassFunction]) -> MassFunction:
    if len(evidence) == 0:
        raise ValueError("need at least one piece of evidence")
    return reduce(dempster_pair, evidence)


def ccef_from_credibility(evidence: Sequence[MassFunction], cred: np.ndarray,
                          d: np.ndarray, check: bool = True) -> CcefResult:
    pieces = tuple(discount(m, float(c)) for m, c in zip(evidence, cred))
    fused = dr_fold(pieces)
    if check:
        # Cross-check against the weight-sum path on the same (clamped) credibilities.
        w = np.sum([discounted_weights(m, float(c)) for m, c in zip(evidence, cred)], axis=0)
        alt = mass_from_weights(evidence[0].frame, w)
        ref = fused
        if np.max(cred) > CRED_CLAMP:
            ref = dr_fold([discount(m, min(float(c), CRED_CLAMP)) for m, c in zip(evidence, cred)])
        gap = float(np.max(np.abs(alt.masses - ref.masses)))
        if gap > CROSS_CHECK_TOL:
            raise ArithmeticError(f"fusion paths disagree by {gap:.3e}")
    return CcefResult(np.asarray(cred, dtype=float), fused, d, pieces)


def ccef(evidence: Sequence[MassFunction], check: bool = True) -> CcefResult:
    """EDMM, credibilities, discount, then Dempster fold."""
    if len(evidence) < 2:
        raise ValueError("need at least two pieces of evidence")
    frames = {m.frame for m in evidence}
    if len(frames) != 1:
        raise ValueError("evidence lives on different frames")
    d = edmm(evidence)
    return ccef_from_credibility(evidence, credibility_from_edmm(d), d, check)
