"""Dempster-Shafer evidence algebra on a finite frame.

Subsets of the frame are bitmasks: bit ``k`` stands for the ``k``-th label,
so for labels ``("a", "b", "c")`` the mask ``0b101`` is ``{a, c}``.  Every
set function (mass, commonality) is stored densely as a float vector of
length ``2**n`` indexed by mask.  Weight assignments skip the empty set and
the whole frame and have length ``2**n - 2`` (entry ``i`` is mask ``i + 1``).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DogmaticEvidence, NonMass, TotalConflict

MASS_TOL = 1e-9
DOGMATIC_TOL = 1e-12
CONFLICT_TOL = 1e-15
CANCEL_TOL = 1e-12
CRED_CLAMP = 1.0 - 1e-9

SubsetLike = Union[int, str, Iterable[str]]


@dataclass(frozen=True)
class Frame:
    """Ordered frame of discernment."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a frame needs at least two labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")

    @classmethod
    def of_size(cls, n: int) -> "Frame":
        if n <= 26:
            return cls(tuple("abcdefghijklmnopqrstuvwxyz"[:n]))
        return cls(tuple(f"c{k}" for k in range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return 1 << self.n

    @property
    def omega(self) -> int:
        return (1 << self.n) - 1

    def subset(self, s: SubsetLike) -> int:
        """Bitmask of ``s``: an int mask, a single label, or an iterable of labels."""
        if isinstance(s, (int, np.integer)):
            mask = int(s)
            if not 0 <= mask <= self.omega:
                raise ValueError(f"mask {mask} outside frame of size {self.n}")
            return mask
        if isinstance(s, str) and s in self.labels:
            return 1 << self.labels.index(s)
        mask = 0
        for label in s:
            try:
                mask |= 1 << self.labels.index(label)
            except ValueError:
                raise ValueError(f"unknown label {label!r}") from None
        return mask

    def members(self, mask: int) -> tuple:
        return tuple(lab for k, lab in enumerate(self.labels) if mask >> k & 1)

    def singleton(self, k: int) -> int:
        return 1 << k


@lru_cache(maxsize=None)
def _popcount(n: int) -> np.ndarray:
    masks = np.arange(1 << n)
    counts = np.zeros(1 << n, dtype=np.int64)
    for k in range(n):
        counts += (masks >> k) & 1
    counts.setflags(write=False)
    return counts


@lru_cache(maxsize=None)
def _betp_matrix(n: int) -> np.ndarray:
    masks = np.arange(1 << n)
    card = _popcount(n)
    mat = np.zeros((n, 1 << n))
    for k in range(n):
        member = ((masks >> k) & 1).astype(bool)
        mat[k, member] = 1.0 / card[member]
    mat.setflags(write=False)
    return mat


def superset_sum(v: np.ndarray, n: int) -> np.ndarray:
    """Zeta transform: ``out[A] = sum_{B >= A} v[B]``."""
    out = np.array(v, dtype=float, copy=True)
    for k in range(n):
        view = out.reshape(-1, 2, 1 << k)
        view[:, 0, :] += view[:, 1, :]
    return out


def superset_mobius(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`superset_sum`: ``out[A] = sum_{B >= A} (-1)^{|B|-|A|} v[B]``."""
    out = np.array(v, dtype=float, copy=True)
    for k in range(n):
        view = out.reshape(-1, 2, 1 << k)
        view[:, 0, :] -= view[:, 1, :]
    return out


class MassFunction:
    """Basic belief assignment over ``frame``; immutable once built."""

    __slots__ = ("frame", "masses")

    def __init__(self, frame: Frame, masses: Sequence[float], *, validate: bool = True):
        arr = np.array(masses, dtype=float)
        if arr.shape != (frame.size,):
            raise NonMass(f"expected {frame.size} masses, got shape {arr.shape}")
        if validate:
            if not np.all(np.isfinite(arr)):
                raise NonMass("non-finite mass")
            if abs(arr[0]) > MASS_TOL:
                raise NonMass(f"m(empty) = {arr[0]}")
            if arr.min() < -MASS_TOL:
                raise NonMass(f"negative mass {arr.min()}")
            if abs(arr.sum() - 1.0) > MASS_TOL:
                raise NonMass(f"masses sum to {arr.sum()}")
            arr[0] = 0.0
            np.clip(arr, 0.0, None, out=arr)
        arr.setflags(write=False)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "masses", arr)

    def __setattr__(self, name, value):
        raise AttributeError("MassFunction is immutable")

    @classmethod
    def from_focal(cls, frame: Frame, focal: Mapping[SubsetLike, float]) -> "MassFunction":
        """Build from ``{subset: mass}``; use ``frame.omega`` for the whole frame."""
        arr = np.zeros(frame.size)
        for subset, value in focal.items():
            arr[frame.subset(subset)] += value
        return cls(frame, arr)

    @classmethod
    def vacuous(cls, frame: Frame) -> "MassFunction":
        arr = np.zeros(frame.size)
        arr[frame.omega] = 1.0
        return cls(frame, arr)

    def __getitem__(self, subset: SubsetLike) -> float:
        return float(self.masses[self.frame.subset(subset)])

    def focal(self) -> dict:
        return {int(a): float(v) for a, v in enumerate(self.masses) if v != 0.0}

    def allclose(self, other: "MassFunction", atol: float = 1e-12) -> bool:
        return self.frame == other.frame and np.allclose(self.masses, other.masses, rtol=0, atol=atol)

    def __repr__(self):
        parts = ", ".join(
            f"{''.join(map(str, self.frame.members(a))) or '{}'}:{v:.6g}" for a, v in self.focal().items()
        )
        return f"MassFunction({parts})"


def _normalized(frame: Frame, unnorm: np.ndarray) -> MassFunction:
    unnorm = np.array(unnorm, dtype=float)
    unnorm[0] = 0.0
    total = unnorm.sum()
    if not total > CONFLICT_TOL:
        raise TotalConflict(f"normalization mass {total:.3e}")
    out = unnorm / total
    out[np.abs(out) < 1e-15] = 0.0
    return MassFunction(frame, out)


def betp(m: MassFunction) -> np.ndarray:
    """Pignistic probabilities, one per label."""
    return _betp_matrix(m.frame.n) @ m.masses


def argmax_betp(p: Sequence[float]) -> int:
    """1-based index of the largest entry; ties go to the lowest index."""
    return int(np.argmax(np.asarray(p))) + 1


def commonality(m: MassFunction) -> np.ndarray:
    """``q[A] = sum_{B >= A} m(B)`` for every mask; ``q[0]`` is 1."""
    return superset_sum(m.masses, m.frame.n)


def mass_from_commonality(frame: Frame, q: Sequence[float]) -> MassFunction:
    q = np.asarray(q, dtype=float)
    if q.shape == (frame.size - 1,):
        q = np.concatenate([[1.0], q])
    m = superset_mobius(q, frame.n)
    m[0] = 0.0
    if m.min() < -1e-9 or abs(m.sum() - 1.0) > 1e-9:
        raise NonMass("commonality does not invert to a mass function")
    m[np.abs(m) < 1e-15] = 0.0
    return MassFunction(frame, np.clip(m, 0.0, None) / np.clip(m, 0.0, None).sum())


def weights_from_mass(m: MassFunction) -> np.ndarray:
    """Log-weight assignment of non-dogmatic evidence, length ``2**n - 2``."""
    if m.masses[m.frame.omega] < DOGMATIC_TOL:
        raise DogmaticEvidence(f"m(Omega) = {m.masses[m.frame.omega]:.3e}")
    logq = np.log(commonality(m))
    return superset_mobius(logq, m.frame.n)[1:-1]


def mass_from_weights(frame: Frame, w: Sequence[float]) -> MassFunction:
    """Dempster combination of the simple mass functions ``A^{w(A)}``.

    ``A^{w}`` puts ``1 - exp(-w)`` on ``A`` and ``exp(-w)`` on the frame;
    negative weights give the generalized (signed) simple functions needed
    for non-separable evidence.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (frame.size - 2,):
        raise ValueError(f"expected {frame.size - 2} weights, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite weight")
    masks = np.arange(frame.size)
    m = np.zeros(frame.size)
    m[frame.omega] = 1.0
    for a in np.flatnonzero(w) + 1:
        keep = np.exp(-w[a - 1])
        moved = np.bincount(masks & a, weights=m, minlength=frame.size)
        kept, shifted = keep * m, (1.0 - keep) * moved
        m = kept + shifted
        m[0] = 0.0
        total = m.sum()
        # Signed factors can push the running total negative; any nonzero constant
        # cancels in the final normalization, so only cancellation to ~0 is fatal.
        scale = np.abs(kept[1:]).sum() + np.abs(shifted[1:]).sum()
        if not abs(total) > CANCEL_TOL * scale:
            raise TotalConflict(f"normalization mass {total:.3e} lost to conflict")
        # Rescaling each step keeps products of many conflicting factors in range.
        m /= total
    m[np.abs(m) < 1e-15] = 0.0
    if m.min() < -1e-9:
        raise NonMass(f"weights do not describe a mass function (min {m.min():.3e})")
    return MassFunction(frame, np.clip(m, 0.0, None) / np.clip(m, 0.0, None).sum())


def mass_from_weights_commonality(frame: Frame, w: Sequence[float]) -> MassFunction:
    """Same result as :func:`mass_from_weights`, computed in commonality space."""
    w_full = np.zeros(frame.size)
    w_full[1:-1] = w
    logq = superset_sum(w_full, frame.n)
    logq -= logq[frame.omega]
    q = np.exp(logq - logq[1:].max())
    unnorm = superset_mobius(q, frame.n)
    return _normalized(frame, unnorm)


def conflict_mass(m1: MassFunction, m2: MassFunction) -> float:
    masks = np.arange(m1.frame.size)
    inter = masks[:, None] & masks[None, :]
    prod = np.outer(m1.masses, m2.masses)
    return float(prod[inter == 0].sum())


def dempster_pair(m1: MassFunction, m2: MassFunction) -> MassFunction:
    if m1.frame != m2.frame:
        raise ValueError("mass functions live on different frames")
    masks = np.arange(m1.frame.size)
    inter = (masks[:, None] & masks[None, :]).ravel()
    unnorm = np.bincount(inter, weights=np.outer(m1.masses, m2.masses).ravel(), minlength=m1.frame.size)
    return _normalized(m1.frame, unnorm)


def discount(m: MassFunction, c: float) -> MassFunction:
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"credibility {c} outside [0, 1]")
    out = c * m.masses
    out[m.frame.omega] = 0.0
    out[m.frame.omega] = 1.0 - out.sum()
    return MassFunction(m.frame, out)


def undiscount(m: MassFunction, c: float) -> MassFunction:
    """Inverse of :func:`discount` for ``c > 0``."""
    out = m.masses / c
    out[m.frame.omega] = 0.0
    out[m.frame.omega] = 1.0 - out.sum()
    return MassFunction(m.frame, out)


def discounted_weights(m: MassFunction, c: float) -> np.ndarray:
    """Weights of ``discount(m, c)`` with ``c`` clamped below 1."""
    return weights_from_mass(discount(m, min(c, CRED_CLAMP)))


# -- serialization -----------------------------------------------------------

def mass_to_csv(m: MassFunction) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subset_bitmask", "mass"])
    for a, v in enumerate(m.masses):
        if a:
            writer.writerow([a, repr(float(v))])
    return buf.getvalue()


def mass_from_csv(frame: Frame, text: str) -> MassFunction:
    rows = list(csv.DictReader(io.StringIO(text)))
    arr = np.zeros(frame.size)
    for row in rows:
        arr[frame.subset(int(row["subset_bitmask"]))] = float(row["mass"])
    return MassFunction(frame, arr)


def frame_to_text(frame: Frame) -> str:
    return "\n".join(frame.labels) + "\n"


def frame_from_text(text: str) -> Frame:
    return Frame(tuple(line.strip() for line in text.splitlines() if line.strip()))
