"""Undirected communication graphs with a canonical directed-edge ordering.

Every stacked edge vector in the package (ADMM variables, error-feedback
integrators, messages) is laid out agent-major, neighbor-ascending: block
``(i, j)`` for ``i = 0..N-1`` and ``j`` in ``sorted(neighbors[i])``.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "TopologyError",
    "ring",
    "complete",
    "random_connected",
    "is_connected",
    "from_spec",
]


class TopologyError(ValueError):
    """Raised for graphs that are degenerate, asymmetric or disconnected."""


def is_connected(adjacency: Graph | Sequence[Iterable[int]]) -> bool:
    """Return True if a BFS from node 0 reaches every node.

    Accepts a :class:`Graph` or a raw sequence of neighbor collections, so
    that candidate topologies can be checked before construction.
    """
    nbrs = adjacency.neighbors if isinstance(adjacency, Graph) else [list(a) for a in adjacency]
    n_nodes = len(nbrs)
    if n_nodes <= 1:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n_nodes


@dataclass(frozen=True)
class Graph:
    """Immutable undirected connected graph.

    Attributes
    ----------
    N : int
        Number of agents.
    neighbors : tuple of tuple of int
        ``neighbors[i]`` is the ascending neighbor list of agent ``i``.
    """

    N: int
    neighbors: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...] = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    reverse: np.ndarray = field(init=False, repr=False, compare=False)
    source: np.ndarray = field(init=False, repr=False, compare=False)
    target: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.N < 1:
            raise TopologyError(f"need at least one agent, got N={self.N}")
        if len(self.neighbors) != self.N:
            raise TopologyError("neighbors must list one entry per agent")
        nbrs = tuple(tuple(sorted(set(int(j) for j in a))) for a in self.neighbors)
        for i, a in enumerate(nbrs):
            for j in a:
                if j == i:
                    raise TopologyError(f"self-loop at agent {i}")
                if not 0 <= j < self.N:
                    raise TopologyError(f"neighbor {j} of agent {i} out of range")
                if i not in nbrs[j]:
                    raise TopologyError(f"asymmetric adjacency: {j} in N_{i} but {i} not in N_{j}")
        if not is_connected(nbrs):
            raise TopologyError("graph is not connected")

        edges = tuple((i, j) for i in range(self.N) for j in nbrs[i])
        index = {e: k for k, e in enumerate(edges)}
        offsets = np.zeros(self.N + 1, dtype=np.intp)
        offsets[1:] = np.cumsum([len(a) for a in nbrs])
        for name, arr in (
            ("offsets", offsets),
            ("reverse", np.array([index[(j, i)] for i, j in edges], dtype=np.intp)),
            ("source", np.array([i for i, _ in edges], dtype=np.intp)),
            ("target", np.array([j for _, j in edges], dtype=np.intp)),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "neighbors", nbrs)
        object.__setattr__(self, "edges", edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_directed(self) -> int:
        """Total degree, i.e. the number of directed edges."""
        return len(self.edges)

    @property
    def n_undirected(self) -> int:
        return len(self.edges) // 2

    def edge_index(self, i: int, j: int) -> int:
        """Position of the directed pair ``(i, j)`` in the canonical ordering."""
        lo, hi = self.offsets[i], self.offsets[i + 1]
        for k in range(lo, hi):
            if self.edges[k][1] == j:
                return int(k)
        raise KeyError((i, j))

    def agent_slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    @classmethod
    def from_edges(cls, N: int, undirected: Iterable[tuple[int, int]]) -> Graph:
        nbrs: list[set[int]] = [set() for _ in range(N)]
        for i, j in undirected:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return cls(N, tuple(tuple(a) for a in nbrs))


def ring(N: int) -> Graph:
    """Cycle graph where agent ``i`` talks to ``i-1`` and ``i+1`` (mod N)."""
    if N < 3:
        raise TopologyError(f"ring requires N >= 3, got {N}")
    return Graph.from_edges(N, ((i, (i + 1) % N) for i in range(N)))


def complete(N: int) -> Graph:
    if N < 2:
        raise TopologyError(f"complete graph requires N >= 2, got {N}")
    return Graph.from_edges(N, ((i, j) for i in range(N) for j in range(i + 1, N)))


def random_connected(N: int, p: float, seed: int | np.random.SeedSequence, max_tries: int = 1000) -> Graph:
    """Erdos-Renyi draw G(N, p), resampled until connected."""
    if N < 2:
        raise TopologyError(f"random graph requires N >= 2, got {N}")
    if not 0.0 < p <= 1.0:
        raise TopologyError(f"edge probability must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(N, k=1)
    for _ in range(max_tries):
        keep = rng.random(iu.size) < p
        nbrs: list[list[int]] = [[] for _ in range(N)]
        for i, j in zip(iu[keep], ju[keep]):
            nbrs[i].append(int(j))
            nbrs[j].append(int(i))
        if is_connected(nbrs):
            return Graph(N, tuple(tuple(a) for a in nbrs))
    raise TopologyError(f"no connected G({N}, {p}) sample in {max_tries} tries")


def from_spec(topology: str, n_agents: int, edge_prob: float = 0.5, seed: int | np.random.SeedSequence = 0) -> Graph:
    if topology == "ring":
        return ring(n_agents)
    if topology == "complete":
        return complete(n_agents)
    if topology == "random":
        return random_connected(n_agents, edge_prob, seed)
    raise TopologyError(f"unknown topology {topology!r}")
