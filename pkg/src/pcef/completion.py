"""Rank-adaptive Riemannian completion of a partially observed EDMM.

Iterates live on the manifold of N x N matrices of fixed rank k, stored as a
thin SVD ``U diag(s) V^T``.  Tangent vectors at ``(U, V)`` use the factored
form ``U M V^T + Up V^T + U Vp^T`` with ``U^T Up = V^T Vp = 0``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .errors import DegenerateDirection, RankCollapse

COLLAPSE_TOL = 1e-14
DEGENERATE_TOL = 1e-14
BB_DEGENERATE = 1e-300


@dataclass(frozen=True)
class CompletionParams:
    lam: float = 2.0
    k0: int = 10
    s: int = 36
    l: int = 1
    delta_rank: float = 0.1
    eps: float = 10.0
    beta: float = 1e-4
    delta: float = 0.1
    theta: float = 0.9
    gamma_min: float = 1e-15
    gamma_max: float = 1e15
    iter_ra: int = 200
    iter_ruc: int = 20
    iter_zeta: int = 5

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not (1 <= self.k0 and 1 <= self.s and 1 <= self.l):
            raise ValueError("k0, s and l must be positive")
        if not (0 < self.beta < 1 and 0 < self.delta < 1 and 0 <= self.theta <= 1):
            raise ValueError("beta, delta must be in (0,1) and theta in [0,1]")
        if not (0 < self.gamma_min <= self.gamma_max):
            raise ValueError("need 0 < gamma_min <= gamma_max")
        if self.delta_rank <= 0 or self.eps <= 0:
            raise ValueError("rank thresholds must be positive")
        if self.iter_zeta < 1:
            raise ValueError("iter_zeta must be >= 1")


@dataclass(frozen=True)
class Tangent:
    M: np.ndarray
    Up: np.ndarray
    Vp: np.ndarray

    def dense(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        return U @ self.M @ V.T + self.Up @ V.T + U @ self.Vp.T

    def inner(self, other: "Tangent") -> float:
        # Valid when both live at the same base point: the three blocks are orthogonal.
        return float(np.sum(self.M * other.M) + np.sum(self.Up * other.Up) + np.sum(self.Vp * other.Vp))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def scaled(self, a: float) -> "Tangent":
        return Tangent(a * self.M, a * self.Up, a * self.Vp)

    def __sub__(self, other: "Tangent") -> "Tangent":
        return Tangent(self.M - other.M, self.Up - other.Up, self.Vp - other.Vp)

    def __neg__(self) -> "Tangent":
        return self.scaled(-1.0)


@dataclass
class CompletionState:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    c: Optional[float] = None
    q: float = 1.0
    gamma: Optional[float] = None
    prev_direction: Optional[Tangent] = None
    prev_step: float = 0.0
    prev_U: Optional[np.ndarray] = None
    prev_V: Optional[np.ndarray] = None
    t: int = 0
    stable: int = 0

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    def dense(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def reset_search(self, f_value: float) -> None:
        self.c = f_value
        self.q = 1.0
        self.gamma = None
        self.prev_direction = None
        self.prev_U = self.prev_V = None


@dataclass
class StepReport:
    f: float
    step: float
    trials: int
    exhausted: bool = False
    converged: bool = False


def objective(Dt: np.ndarray, D: np.ndarray, mask: np.ndarray, lam: float) -> float:
    r = np.where(mask, D - Dt, 0.0)
    return float(np.sum(r * r) / lam + np.sum(np.diag(Dt) ** 2))


def euclid_grad(Dt: np.ndarray, D: np.ndarray, mask: np.ndarray, lam: float) -> np.ndarray:
    g = (2.0 / lam) * np.where(mask, Dt - D, 0.0)
    g[np.diag_indices_from(g)] += 2.0 * np.diag(Dt)
    return g


def tangent_project(G: np.ndarray, U: np.ndarray, V: np.ndarray) -> Tangent:
    GV = G @ V
    GtU = G.T @ U
    M = U.T @ GV
    return Tangent(M, GV - U @ M, GtU - V @ M.T)


def svd_factors(A: np.ndarray, k: int):
    """Leading-k SVD with a deterministic sign convention."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    u, s, v = u[:, :k], s[:k], vt[:k].T
    return _fix_signs(u, s, v)


def _fix_signs(u, s, v):
    # Largest-magnitude entry of every left factor column made positive.
    idx = np.argmax(np.abs(u), axis=0)
    sgn = np.sign(u[idx, np.arange(u.shape[1])])
    sgn[sgn == 0] = 1.0
    return u * sgn, s, v * sgn


def retract(state: CompletionState, Z: Tangent, h: float):
    """Partitioned-SVD retraction of ``h Z`` keeping rank k.

    Returns new ``(U, sigma, V)``; raises :class:`RankCollapse` if the
    retracted point has fewer than k singular values above 1e-14.
    """
    U, s, V, k = state.U, state.sigma, state.V, state.k
    Qu, Ru = np.linalg.qr(h * Z.Up)
    Qv, Rv = np.linalg.qr(h * Z.Vp)
    block = np.zeros((2 * k, 2 * k))
    block[:k, :k] = np.diag(s) + h * Z.M
    block[:k, k:] = Rv.T
    block[k:, :k] = Ru
    ur, sr, vrt = np.linalg.svd(block)
    if sr[k - 1] <= COLLAPSE_TOL:
        raise RankCollapse(f"retraction kept only {int(np.sum(sr > COLLAPSE_TOL))} of {k} singular values")
    Un = np.hstack([U, Qu]) @ ur[:, :k]
    Vn = np.hstack([V, Qv]) @ vrt[:k].T
    return _fix_signs(Un, sr[:k].copy(), Vn)


def vector_transport(Z: Tangent, U_old, V_old, U_new, V_new) -> Tangent:
    return tangent_project(Z.dense(U_old, V_old), U_new, V_new)


def bb_gamma(S: Tangent, K: Tangent, t: int, gamma_min: float, gamma_max: float,
             previous: Optional[float] = None) -> float:
    sk = abs(S.inner(K))
    kk = K.inner(K)
    if sk < BB_DEGENERATE or kk == 0.0:
        g = 1.0 if previous is None else previous
    elif t % 2 == 1:
        g = S.inner(S) / sk
    else:
        g = sk / kk
    return float(min(max(g, gamma_min), gamma_max))


def _initial_gamma(Dt, D, mask, grad_dense, params: CompletionParams) -> Optional[float]:
    pg = np.where(mask, grad_dense, 0.0)
    denom = float(np.sum(pg * pg))
    if denom == 0.0:
        return None
    target = np.where(mask, Dt - D, 0.0) + np.diag(np.diag(Dt))
    g = abs(float(np.sum(pg * target))) / denom
    return float(min(max(g, params.gamma_min), params.gamma_max))


def fixed_rank_step(state: CompletionState, D: np.ndarray, mask: np.ndarray,
                    params: CompletionParams) -> StepReport:
    """One non-monotone Armijo/BB step on the fixed-rank manifold (mutates ``state``)."""
    Dt = state.dense()
    f0 = objective(Dt, D, mask, params.lam)
    if state.c is None:
        state.c = f0
    G = euclid_grad(Dt, D, mask, params.lam)
    rgrad = tangent_project(G, state.U, state.V)
    Z = -rgrad
    gnorm2 = rgrad.inner(rgrad)
    if gnorm2 == 0.0:
        return StepReport(f0, 0.0, 0, converged=True)

    if state.prev_direction is not None and state.gamma is not None:
        moved = vector_transport(state.prev_direction, state.prev_U, state.prev_V, state.U, state.V)
        S = moved.scaled(state.prev_step)
        K = moved - Z
        gamma = bb_gamma(S, K, state.t, params.gamma_min, params.gamma_max, state.gamma)
    else:
        gamma = _initial_gamma(Dt, D, mask, rgrad.dense(state.U, state.V), params)
        if gamma is None:
            return StepReport(f0, 0.0, 0, converged=True)

    h = gamma
    accepted = None
    exhausted = True
    trials = 0
    for zeta in range(1, params.iter_zeta + 1):
        trials += 1
        try:
            cand = retract(state, Z, h)
        except RankCollapse:
            cand = None
        if cand is not None:
            f_new = objective((cand[0] * cand[1]) @ cand[2].T, D, mask, params.lam)
            accepted = (cand, f_new, h)
            if f_new <= state.c - params.beta * h * gnorm2:
                exhausted = False
                break
        h = gamma * params.delta ** zeta
    if accepted is None:
        raise RankCollapse("every line-search trial collapsed the rank")

    (Un, sn, Vn), f_new, h = accepted
    state.prev_direction, state.prev_U, state.prev_V = Z, state.U, state.V
    state.prev_step = h
    state.gamma = gamma
    state.U, state.sigma, state.V = Un, sn, Vn
    q_new = params.theta * state.q + 1.0
    state.c = (params.theta * state.q * state.c + f_new) / q_new
    state.q = q_new
    state.t += 1
    return StepReport(f_new, h, trials, exhausted=exhausted)


def rank_decrease_target(sigma: np.ndarray, delta_rank: float) -> Optional[int]:
    """Target rank if the gap rule fires, else ``None``."""
    sigma = np.asarray(sigma, dtype=float)
    k = sigma.shape[0]
    if k < 2 or sigma[0] <= 0:
        return None
    gaps = (sigma[:-1] - sigma[1:]) / sigma[:-1]
    r = int(np.sum(sigma >= delta_rank * sigma[0]))
    if gaps.max() > delta_rank and r < k:
        return r
    return None


def rank_decrease(state: CompletionState, delta_rank: float) -> bool:
    r = rank_decrease_target(state.sigma, delta_rank)
    if r is None:
        return False
    state.U, state.sigma, state.V = state.U[:, :r], state.sigma[:r], state.V[:, :r]
    return True


def _normal_part(G: np.ndarray, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    A = G - U @ (U.T @ G)
    return A - (A @ V) @ V.T


def rank_increase_test(state: CompletionState, D, mask, params: CompletionParams) -> bool:
    if state.k >= params.s:
        return False
    G = euclid_grad(state.dense(), D, mask, params.lam)
    tangent_norm = tangent_project(G, state.U, state.V).norm()
    sv = np.linalg.svd(_normal_part(G, state.U, state.V), compute_uv=False)
    normal_norm = float(np.sqrt(np.sum(sv[: params.s - state.k] ** 2)))
    return normal_norm > params.eps * tangent_norm


def rank_increase(state: CompletionState, D, mask, params: CompletionParams) -> int:
    """Append ``min(l, s-k, rank of the normal gradient)`` directions; returns the increment."""
    Dt = state.dense()
    G = euclid_grad(Dt, D, mask, params.lam)
    Nmat = -_normal_part(G, state.U, state.V)
    u, sv, vt = np.linalg.svd(Nmat)
    scale = sv[0] if sv.size and sv[0] > 0 else 1.0
    rbar = int(np.sum(sv > 1e-12 * scale)) if sv.size and sv[0] > 0 else 0
    inc = min(params.l, params.s - state.k, rbar)
    if inc <= 0:
        raise DegenerateDirection("normal gradient component vanishes")
    W, H, Y = u[:, :inc], sv[:inc], vt[:inc].T
    weight = mask | np.eye(mask.shape[0], dtype=bool)
    X = np.where(weight, (W * H) @ Y.T, 0.0)
    xx = float(np.sum(X * X))
    if np.sqrt(xx) < DEGENERATE_TOL:
        raise DegenerateDirection("rank-increase direction vanishes on the observed entries")
    R = np.where(weight, Dt - D, 0.0)
    alpha = -float(np.sum(X * R)) / xx
    if alpha < 0:
        W = -W
    U = np.hstack([state.U, W])
    V = np.hstack([state.V, Y])
    sig = np.concatenate([state.sigma, abs(alpha) * H])
    # Columns of W and Y are orthogonal to U and V already; QR only cleans round-off.
    Uq, Ru = np.linalg.qr(U)
    Vq, Rv = np.linalg.qr(V)
    core = (Ru * sig) @ Rv.T
    uc, sc, vct = np.linalg.svd(core)
    state.U, state.sigma, state.V = _fix_signs(Uq @ uc, sc, Vq @ vct.T)
    return inc


def initial_state(D: np.ndarray, mask: np.ndarray, params: CompletionParams) -> CompletionState:
    P = np.where(mask, D, 0.0)
    k = min(params.k0, params.s, P.shape[0])
    U, s, V = svd_factors(P, k)
    if k >= 2 and s[0] > 0:
        safe = np.where(s[:-1] > 0, s[:-1], 1.0)
        gaps = (s[:-1] - s[1:]) / safe
        r = int(np.argmax(gaps)) + 1
        if k > r:
            U, s, V = U[:, :r], s[:r], V[:, :r]
    s = np.maximum(s, COLLAPSE_TOL * 10)
    return CompletionState(U, s, V)


@dataclass
class TraceRow:
    iteration: int
    rank: int
    objective: float
    exhausted: bool = False


@dataclass
class CompletionResult:
    matrix: np.ndarray
    rank: int
    trace: List[TraceRow] = field(default_factory=list)
    raw: Optional[np.ndarray] = None


def postprocess(Dt: np.ndarray) -> np.ndarray:
    out = np.clip(0.5 * (Dt + Dt.T), 0.0, 1.0)
    np.fill_diagonal(out, 0.0)
    return out


class RankAdaptiveCompleter:
    """Stepwise driver so callers can interleave completion with other rounds."""

    def __init__(self, D: np.ndarray, mask: np.ndarray, params: CompletionParams = CompletionParams()):
        self.D = np.where(mask, np.asarray(D, dtype=float), 0.0)
        self.mask = np.asarray(mask, dtype=bool)
        self.params = params
        self.state = initial_state(self.D, self.mask, params)
        self.trace: List[TraceRow] = []
        self.iteration = 0
        self.converged = False
        off = ~np.eye(self.mask.shape[0], dtype=bool)
        # Nothing to estimate when every off-diagonal entry is observed.
        self.full = bool(np.all(self.mask[off]))
        self.done = self.full

    def f(self) -> float:
        return objective(self.state.dense(), self.D, self.mask, self.params.lam)

    def current(self) -> np.ndarray:
        if self.full:
            return postprocess(self.D)
        return postprocess(self.state.dense())

    def step(self) -> bool:
        """One outer iteration; returns False once the loop has terminated."""
        p = self.params
        if self.done:
            return False
        if self.iteration >= p.iter_ra or self.state.stable >= p.iter_ruc:
            self.done = True
            return False
        self.iteration += 1
        st = self.state
        k_before = st.k
        exhausted = False
        try:
            report = fixed_rank_step(st, self.D, self.mask, p)
            exhausted = report.exhausted
            self.converged = report.converged
        except RankCollapse:
            st.U, st.sigma, st.V = st.U[:, :-1], st.sigma[:-1], st.V[:, :-1]
        if st.k == k_before and rank_decrease(st, p.delta_rank):
            pass
        elif st.k == k_before and st.k < p.s and rank_increase_test(st, self.D, self.mask, p):
            try:
                rank_increase(st, self.D, self.mask, p)
            except DegenerateDirection:
                pass
        fval = self.f()
        if st.k != k_before:
            st.reset_search(fval)
            st.stable = 0
        else:
            st.stable += 1
        self.trace.append(TraceRow(self.iteration, st.k, fval, exhausted))
        return True

    def run(self) -> CompletionResult:
        while self.step():
            pass
        if self.full:
            rank = int(np.linalg.matrix_rank(self.D))
            return CompletionResult(postprocess(self.D), rank, self.trace, self.D.copy())
        raw = self.state.dense()
        return CompletionResult(postprocess(raw), self.state.k, self.trace, raw)


def complete_edmm(D: np.ndarray, mask: np.ndarray, params: CompletionParams = CompletionParams(),
                  trace_sink: Optional[Callable[[TraceRow], None]] = None) -> CompletionResult:
    result = RankAdaptiveCompleter(D, mask, params).run()
    if trace_sink is not None:
        for row in result.trace:
            trace_sink(row)
    return result


def trace_to_csv(trace: List[TraceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "rank", "objective"])
    for row in trace:
        writer.writerow([row.iteration, row.rank, repr(row.objective)])
    return buf.getvalue()
