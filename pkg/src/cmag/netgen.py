"""Scale-free network generation and the hub/periphery split."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Policy, Targeting


@dataclass(frozen=True)
class Network:
    n: int
    adjacency: tuple[tuple[int, ...], ...]

    @classmethod
    def from_edges(cls, n: int, edges) -> "Network":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs))

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=int)

    @property
    def n_edges(self) -> int:
        return int(self.degrees.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nb in enumerate(self.adjacency) for v in nb if u < v]

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = {0}
        frontier = [0]
        while frontier:
            u = frontier.pop()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return len(seen) == self.n

    def neighbor_mean_matrix(self) -> np.ndarray:
        """Row-stochastic averaging operator; isolated nodes average over themselves."""
        P = np.zeros((self.n, self.n))
        for u, nb in enumerate(self.adjacency):
            if nb:
                P[u, list(nb)] = 1.0 / len(nb)
            else:
                P[u, u] = 1.0
        return P

    def write_edgelist(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{u} {v}\n" for u, v in self.edges()))


@dataclass(frozen=True)
class SubgroupPartition:
    hubs: frozenset[int]
    periphery: frozenset[int]


def generate_ba(n: int, m: int, rng: np.random.Generator) -> Network:
    """Barabási–Albert preferential attachment.

    Seeds with the complete graph on ``m + 1`` nodes; every later node links to
    ``m`` distinct existing nodes drawn with probability proportional to degree
    (draws are repeated until ``m`` distinct targets are found).
    """
    if not (n > m >= 1):
        raise ValueError(f"need n > m >= 1, got n={n}, m={m}")
    edges = [(u, v) for u in range(m + 1) for v in range(u + 1, m + 1)]
    # each node appears once per incident edge, so uniform draws are degree-weighted
    ends: list[int] = [x for e in edges for x in e]
    for new in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(ends[int(rng.integers(len(ends)))])
        for old in sorted(chosen):
            edges.append((old, new))
            ends.extend((old, new))
    return Network.from_edges(n, edges)


def hub_partition(net: Network, quantile: float = 0.75) -> SubgroupPartition:
    """Nodes with degree at or above the ``quantile`` degree value are hubs.

    Ties at the threshold go to the hubs. When that would make every node a
    hub although degrees differ (e.g. a star, where the quantile lands on the
    leaf degree), only nodes strictly above the threshold are kept.
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    deg = net.degrees
    threshold = np.quantile(deg, quantile)
    hubs = {i for i in range(net.n) if deg[i] >= threshold}
    if len(hubs) == net.n and deg.min() < deg.max():
        hubs = {i for i in range(net.n) if deg[i] > threshold}
    return SubgroupPartition(frozenset(hubs), frozenset(range(net.n)) - frozenset(hubs))


def target_count(n: int, f_tgt: float) -> int:
    # round half away from zero, never below one target
    return max(1, int(np.floor(f_tgt * n + 0.5)))


def targets_for(net: Network, policy: Policy, f_tgt: float, rng: np.random.Generator) -> list[int]:
    if not 0 < f_tgt <= 1:
        raise ValueError("f_tgt must lie in (0, 1]")
    k = target_count(net.n, f_tgt)
    deg = net.degrees
    ids = np.arange(net.n)
    if policy.targeting is Targeting.HUBS:
        order = np.lexsort((ids, -deg))
    elif policy.targeting is Targeting.PERIPHERY:
        order = np.lexsort((ids, deg))
    else:
        return sorted(int(i) for i in rng.choice(net.n, size=k, replace=False))
    return sorted(int(i) for i in order[:k])
