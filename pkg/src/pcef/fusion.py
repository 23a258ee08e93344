"""Privacy-preserving consensus on weight assignments.

Each agent runs linear average consensus on the weight vector of its
credibility-discounted evidence.  Two terms are injected:

* a self-canceling Gaussian term that hides the initial state and sums to
  zero by the agent's private stop time ``t_i``;
* a credibility term equal to the change of the discounted weights while
  the agent's credibility estimate is still moving.

The limit is the average of the final discounted weights, so ``N`` times the
consensus state is the weight vector of the centralized fusion result.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InfeasibleAttack, NotConverged, ZeroNoise
from .evidence import (CRED_CLAMP, Frame, MassFunction, commonality, mass_from_weights,
                       superset_mobius, undiscount)
from .network import NetworkGraph

CONSENSUS_GAP = 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    t_i: int
    terms: np.ndarray  # (t_i + 1, r); row t is u^R(t)

    def at(self, t: int) -> np.ndarray:
        if t <= self.t_i:
            return self.terms[t]
        return np.zeros(self.terms.shape[1])

    @property
    def r(self) -> int:
        return self.terms.shape[1]


def make_noise_schedule(t_i: int, sigma0: float, rho: float, r: int,
                        rng: np.random.Generator) -> NoiseSchedule:
    """Geometrically decaying Gaussian noise whose last term cancels the rest."""
    if t_i < 1:
        raise ValueError("t_i must be at least 1")
    if sigma0 == 0:
        raise ZeroNoise("sigma0 = 0 gives a noise term with no effect")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    terms = np.empty((t_i + 1, r))
    scale = sigma0 * rho ** np.arange(t_i)
    terms[:t_i] = scale[:, None] * rng.standard_normal((t_i, r))
    terms[t_i] = -terms[:t_i].sum(axis=0)
    return NoiseSchedule(t_i, terms)


def discounted_weights_q(q: np.ndarray, cred: float, n: int) -> np.ndarray:
    """Weights of the ``cred``-discount of the evidence with commonality ``q``."""
    c = min(cred, CRED_CLAMP)
    logq = np.log(1.0 - c * (1.0 - np.asarray(q, dtype=float)))
    return superset_mobius(logq, n)[1:-1]


def cred_compensation(q_self: np.ndarray, cred_t: float, cred_prev: Optional[float], n: int) -> np.ndarray:
    """Credibility compensation term; ``cred_prev=None`` stands for round 0."""
    if cred_prev is None:
        return np.zeros((1 << n) - 2)
    c_t, c_p = min(cred_t, CRED_CLAMP), min(cred_prev, CRED_CLAMP)
    q = np.asarray(q_self, dtype=float)
    ratio = np.log((1.0 - c_t * (1.0 - q)) / (1.0 - c_p * (1.0 - q)))
    return superset_mobius(ratio, n)[1:-1]


@dataclass
class FusionRun:
    history: np.ndarray      # (T + 1, N, r) states x(0..T)
    injected: np.ndarray     # (T + 1, N, r) u(0..T)
    schedules: List[NoiseSchedule]
    c: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]

    @property
    def rounds(self) -> int:
        return self.history.shape[0] - 1


def run_fusion(evidence: Sequence[MassFunction], c: np.ndarray, creds: np.ndarray,
               schedules: Sequence[Optional[NoiseSchedule]], rounds: int) -> FusionRun:
    """Simulate ``rounds`` synchronous fusion rounds.

    ``creds`` is either a length-N vector (serial mode) or an array of shape
    (T', N) giving each agent's credibility after each completion iteration;
    rows past the end repeat the last one.
    """
    n_agents = len(evidence)
    n = evidence[0].frame.n
    r = (1 << n) - 2
    creds = np.atleast_2d(np.asarray(creds, dtype=float))
    if creds.shape[1] != n_agents:
        raise ValueError(f"credibility array has {creds.shape[1]} agents, expected {n_agents}")
    q = np.stack([commonality(m) for m in evidence])

    def cred_at(t):
        return creds[min(t, creds.shape[0] - 1)]

    def noise(i, t):
        s = schedules[i]
        return np.zeros(r) if s is None else s.at(t)

    history = np.empty((rounds + 1, n_agents, r))
    injected = np.zeros((rounds + 1, n_agents, r))
    c0 = cred_at(0)
    w_prev = np.stack([discounted_weights_q(q[i], c0[i], n) for i in range(n_agents)])
    for i in range(n_agents):
        injected[0, i] = noise(i, 0)
    history[0] = w_prev + injected[0]
    for t in range(1, rounds + 1):
        ct = cred_at(t)
        if t < creds.shape[0]:
            w_now = np.stack([discounted_weights_q(q[i], ct[i], n) for i in range(n_agents)])
            comp = w_now - w_prev
            w_prev = w_now
        else:
            comp = 0.0
        for i in range(n_agents):
            injected[t, i] = noise(i, t)
        injected[t] += comp
        history[t] = c @ history[t - 1] + injected[t]
    return FusionRun(history, injected, list(schedules), c)


def consensus_gap(x: np.ndarray) -> float:
    return float(np.max(x.max(axis=0) - x.min(axis=0)))


def finalize_fusion(x: np.ndarray, frame: Frame, gap_tol: float = CONSENSUS_GAP) -> List[MassFunction]:
    """Per-agent fused masses from the consensus states ``x`` of shape (N, r)."""
    x = np.asarray(x, dtype=float)
    gap = consensus_gap(x)
    if not gap < gap_tol:
        raise NotConverged(f"consensus gap {gap:.3e} exceeds {gap_tol:.1e}")
    n_agents = x.shape[0]
    return [mass_from_weights(frame, n_agents * x[i]) for i in range(n_agents)]


def attack_feasible(g: NetworkGraph, adversary: int, target: int) -> bool:
    """Whether ``adversary`` observes the target and every other neighbor of it."""
    if adversary == target or not g.adjacency[adversary, target]:
        return False
    others = set(g.neighbors(target).tolist()) - {adversary}
    return others <= set(g.neighbors(adversary).tolist())


def infer_weights(g: NetworkGraph, c: np.ndarray, adversary: int, target: int,
                  history: np.ndarray) -> np.ndarray:
    """Recover the target's final discounted weights from observed states.

    Sums ``x_i(t+1) - sum_l c_il x_l(t)`` over all observed rounds; the noise
    telescopes away and the compensation terms telescope to the final weights.
    """
    if not attack_feasible(g, adversary, target):
        raise InfeasibleAttack(
            f"agent {adversary} cannot observe every neighbor of agent {target}")
    visible = set(g.neighbors(adversary).tolist()) | {adversary}
    needed = set(g.neighbors(target).tolist()) | {target}
    assert needed <= visible
    cols = sorted(needed)
    x = history
    acc = x[0, target].copy()
    for t in range(x.shape[0] - 1):
        acc += x[t + 1, target] - c[target, cols] @ x[t, cols]
    return acc


def infer_attack(g: NetworkGraph, c: np.ndarray, adversary: int, target: int,
                 history: np.ndarray, cred_target: float, frame: Frame) -> MassFunction:
    w = infer_weights(g, c, adversary, target, history)
    discounted = mass_from_weights(frame, w)
    return undiscount(discounted, min(cred_target, CRED_CLAMP))


def fusion_trace_to_csv(history: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "agent", "component", "value"])
    for t, states in enumerate(history):
        for agent, row in enumerate(states):
            for comp, value in enumerate(row):
                writer.writerow([t, agent, comp, repr(float(value))])
    return buf.getvalue()


@dataclass(frozen=True)
class AttackReport:
    adversary: int
    target: int
    feasible: bool
    max_abs_error: float


def attack_report_to_csv(rows: Sequence[AttackReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["adversary", "target", "feasible", "max_abs_error"])
    for r in rows:
        err = "" if not np.isfinite(r.max_abs_error) else repr(r.max_abs_error)
        writer.writerow([r.adversary, r.target, int(r.feasible), err])
    return buf.getvalue()
