"""Undirected agent graphs and round-synchronous consensus engines."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import DisconnectedGraph

COLLECT_GRID = 1e-9


@dataclass(frozen=True)
class NetworkGraph:
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n_agents: int, edges) -> "NetworkGraph":
        adj = np.zeros((n_agents, n_agents), dtype=bool)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at {i}")
            adj[i, j] = adj[j, i] = True
        return cls(adj)

    @classmethod
    def complete(cls, n: int) -> "NetworkGraph":
        return cls(~np.eye(n, dtype=bool))

    @classmethod
    def path(cls, n: int) -> "NetworkGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def ring(cls, n: int) -> "NetworkGraph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @classmethod
    def star(cls, n: int, center: int = 0) -> "NetworkGraph":
        return cls.from_edges(n, [(center, j) for j in range(n) if j != center])

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> List[tuple]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return list(zip(i.tolist(), j.tolist()))

    def is_connected(self) -> bool:
        n_comp, _ = connected_components(self.adjacency, directed=False)
        return n_comp == 1

    def diameter(self) -> int:
        dist = shortest_path(self.adjacency.astype(float), unweighted=True, directed=False)
        if not np.all(np.isfinite(dist)):
            raise DisconnectedGraph("graph is not connected")
        return int(dist.max())

    def density(self) -> float:
        n = self.n_agents
        return len(self.edges()) / (n * (n - 1) / 2)

    def local_adjacency(self, i: int) -> np.ndarray:
        """Agent ``i``'s view of the edge set: its own row and column."""
        local = np.zeros_like(self.adjacency)
        local[i, :] = self.adjacency[i, :]
        local[:, i] = self.adjacency[:, i]
        return local

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j"])
        writer.writerows(self.edges())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_agents: Optional[int] = None) -> "NetworkGraph":
        rows = [(int(r["i"]), int(r["j"])) for r in csv.DictReader(io.StringIO(text))]
        if n_agents is None:
            n_agents = 1 + max(max(e) for e in rows)
        return cls.from_edges(n_agents, rows)


def random_connected_graph(n: int, density: float, rng: np.random.Generator) -> NetworkGraph:
    """Random spanning tree plus uniformly chosen extra edges up to ``density``."""
    if n < 2:
        raise ValueError("need at least two agents")
    total_pairs = n * (n - 1) // 2
    target = int(round(density * total_pairs))
    target = min(max(target, n - 1), total_pairs)
    adj = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for pos in range(1, n):
        u = order[pos]
        v = order[rng.integers(pos)]
        adj[u, v] = adj[v, u] = True
    iu, ju = np.triu_indices(n, 1)
    free = np.flatnonzero(~adj[iu, ju])
    extra = rng.choice(free, size=target - (n - 1), replace=False)
    adj[iu[extra], ju[extra]] = True
    adj[ju[extra], iu[extra]] = True
    return NetworkGraph(adj)


def mh_weights(g: NetworkGraph) -> np.ndarray:
    """Metropolis-Hastings consensus matrix (doubly stochastic)."""
    if not g.is_connected():
        raise DisconnectedGraph("Metropolis-Hastings weights need a connected graph")
    deg = g.degrees()
    c = np.where(g.adjacency, 1.0 / (np.maximum(deg[:, None], deg[None, :]) + 1.0), 0.0)
    np.fill_diagonal(c, 1.0 - c.sum(axis=1))
    return c


def lac_step(states: np.ndarray, c: np.ndarray) -> np.ndarray:
    """One round of x_i <- x_i + sum_j c_ij (x_j - x_i) for every agent."""
    states = np.asarray(states, dtype=float)
    flat = states.reshape(states.shape[0], -1)
    return (c @ flat).reshape(states.shape)


def lac_run(initial: np.ndarray, c: np.ndarray, iters: int, trace: Optional[list] = None) -> np.ndarray:
    """Linear average consensus; axis 0 of ``initial`` indexes agents."""
    x = np.array(initial, dtype=float)
    if trace is not None:
        trace.append(x.copy())
    for _ in range(iters):
        x = lac_step(x, c)
        if trace is not None:
            trace.append(x.copy())
    return x


def max_consensus(initial: np.ndarray, g: NetworkGraph, iters: int) -> np.ndarray:
    """Each round every agent keeps the elementwise max over itself and its neighbors."""
    x = np.array(initial)
    closed = g.adjacency | np.eye(g.n_agents, dtype=bool)
    for _ in range(iters):
        x = np.stack([x[closed[i]].max(axis=0) for i in range(g.n_agents)])
    return x


def local_edmms(d: np.ndarray, g: NetworkGraph) -> np.ndarray:
    """Stack of each agent's locally known EDMM slice, shape (N, N, N)."""
    return np.stack([np.where(g.local_adjacency(i), d, 0.0) for i in range(g.n_agents)])


@dataclass
class CollectedEdmm:
    values: np.ndarray  # (N, N, N): agent i's copy of P_A(D)
    masks: np.ndarray   # (N, N, N): agent i's copy of the adjacency
    rounds: int


def collect_edmm(local: np.ndarray, g: NetworkGraph, mode: str = "lac",
                 iters: Optional[int] = None, c: Optional[np.ndarray] = None) -> CollectedEdmm:
    """Spread the neighbor EDMs so every agent holds the full observed matrix.

    ``local[i]`` is agent ``i``'s LEDMM.  The adjacency pattern is localized
    by max-consensus in either mode; it is exact for 0/1 entries.
    """
    local = np.asarray(local, dtype=float)
    n = g.n_agents
    if local.shape != (n, n, n):
        raise ValueError(f"expected local EDMMs of shape {(n, n, n)}, got {local.shape}")
    diam = g.diameter()
    masks0 = np.stack([g.local_adjacency(i) for i in range(n)]).astype(np.uint8)
    masks = max_consensus(masks0, g, max(diam, 1)).astype(bool)
    if mode == "max":
        rounds = diam if iters is None else iters
        values = max_consensus(local, g, rounds)
    elif mode == "lac":
        rounds = 100 if iters is None else iters
        c = mh_weights(g) if c is None else c
        values = lac_run(local, c, rounds) * (n / 2.0)
        values = np.round(values / COLLECT_GRID) * COLLECT_GRID
        values = np.where(masks, values, 0.0)
    else:
        raise ValueError(f"unknown collection mode {mode!r}")
    return CollectedEdmm(values, masks, rounds)


def trace_to_csv(trace: Sequence[np.ndarray]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "agent", "component", "value"])
    for t, states in enumerate(trace):
        flat = np.asarray(states).reshape(len(states), -1)
        for agent, row in enumerate(flat):
            for comp, value in enumerate(row):
                writer.writerow([t, agent, comp, repr(float(value))])
    return buf.getvalue()
