"""Communication graph and block schedules."""
from __future__ import annotations

from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

POLICIES = ("cyclic_v_first", "singleton_cyclic", "random_coverage", "edge_coloring_parallel")


class Vertex(NamedTuple):
    i: int

    def touches(self):
        return (self.i,)

    def __str__(self):
        return f"Vertex({self.i})"


class Edge(NamedTuple):
    i: int
    j: int

    def touches(self):
        return (self.i, self.j)

    def __str__(self):
        return f"Edge({self.i},{self.j})"


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        index = {e: k for k, e in enumerate(self.edges)}
        object.__setattr__(self, "_index", index)

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_index(self, i, j):
        return self._index[(min(i, j), max(i, j))]

    def members(self):
        return [Vertex(i) for i in range(self.n_vertices)] + [Edge(i, j) for i, j in self.edges]

    def incidence(self):
        """Signed incidence matrix (V x E): +1 at the smaller endpoint, -1 at the larger."""
        B = np.zeros((self.n_vertices, self.n_edges))
        for k, (i, j) in enumerate(self.edges):
            B[i, k] = 1.0
            B[j, k] = -1.0
        return B

    def to_dict(self):
        return {"n": self.n_vertices, "edges": [list(e) for e in self.edges]}


def build_graph(n, edges) -> Graph:
    n = int(n)
    if n < 1:
        raise GraphError("graph needs at least one vertex")
    seen = set()
    canon = []
    for pair in edges:
        i, j = (int(p) for p in pair)
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge {(i, j)} out of range for {n} vertices")
        if i == j:
            raise GraphError(f"self-loop {(i, j)}")
        e = (min(i, j), max(i, j))
        if e in seen:
            raise GraphError(f"duplicate edge {(i, j)}")
        seen.add(e)
        canon.append(e)
    adj = [[] for _ in range(n)]
    for i, j in canon:
        adj[i].append(j)
        adj[j].append(i)
    reached = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in reached:
                reached.add(w)
                queue.append(w)
    if len(reached) < n:
        missing = min(set(range(n)) - reached)
        raise GraphError(f"graph is disconnected: vertex {missing} unreachable from vertex 0")
    return Graph(n, tuple(canon))


def graph_from_spec(spec: str) -> Graph:
    """Parse ``path:N``, ``cycle:N``, ``star:N``, ``complete:N`` or ``edges:N:0-1,1-2``."""
    try:
        kind, _, rest = spec.partition(":")
        if kind == "edges":
            n_str, _, pairs = rest.partition(":")
            edges = [tuple(int(v) for v in p.split("-")) for p in pairs.split(",") if p]
            return build_graph(int(n_str), edges)
        n = int(rest)
    except ValueError as exc:
        raise GraphError(f"cannot parse graph spec {spec!r}") from exc
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            raise GraphError("cycle graph needs n >= 3")
        edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    elif kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        raise GraphError(f"unknown graph kind {kind!r}")
    return build_graph(n, edges)


@dataclass(frozen=True)
class Block:
    members: tuple

    def __post_init__(self):
        if not self.members:
            raise ValueError("block must be nonempty")

    def coupling(self):
        """Return ``(coordinate, members)`` for the first shared coordinate, or None."""
        owner = {}
        for mem in self.members:
            for c in mem.touches():
                if c in owner:
                    return c, (owner[c], mem)
                owner[c] = mem
        return None

    def __str__(self):
        return "{" + ", ".join(str(m) for m in self.members) + "}"


class _RandomCycles(Sequence):
    """Cycle n is a permutation of ``singles`` drawn from ``default_rng([seed, n])``.

    Cycles are produced on access, so long schedules cost no memory.
    """

    def __init__(self, singles, n_cycles, seed):
        self.singles, self.n_cycles, self.seed = tuple(singles), n_cycles, seed

    def __len__(self):
        return self.n_cycles

    def __eq__(self, other):
        if isinstance(other, _RandomCycles):
            return (self.singles, self.n_cycles, self.seed) == (other.singles, other.n_cycles, other.seed)
        return NotImplemented

    def __hash__(self):
        return hash((self.singles, self.n_cycles, self.seed))

    def __getitem__(self, n):
        if isinstance(n, slice):
            return tuple(self[k] for k in range(*n.indices(self.n_cycles)))
        if n < 0:
            n += self.n_cycles
        if not 0 <= n < self.n_cycles:
            raise IndexError(n)
        perm = np.random.default_rng([self.seed, n]).permutation(len(self.singles))
        return tuple(self.singles[k] for k in perm)


@dataclass(frozen=True)
class Schedule:
    cycles: Sequence
    starts_with_all_vertices: bool = False
    policy: str = "custom"
    seed: int | None = None

    def __len__(self):
        return len(self.cycles)


@dataclass(frozen=True)
class Violation:
    cycle: int
    missing: tuple = ()
    coupled: tuple = ()
    message: str = ""

    def __str__(self):
        return self.message


def _edge_colouring(graph):
    colours = []
    for e in graph.edges:
        for cls in colours:
            if all(e[0] not in f and e[1] not in f for f in cls):
                cls.append(e)
                break
        else:
            colours.append([e])
    return colours


def make_schedule(graph: Graph, policy: str, n_cycles: int, seed: int | None = None) -> Schedule:
    all_v = Block(tuple(Vertex(i) for i in range(graph.n_vertices)))
    edge_blocks = tuple(Block((Edge(*e),)) for e in graph.edges)
    vertex_blocks = tuple(Block((Vertex(i),)) for i in range(graph.n_vertices))
    if policy == "cyclic_v_first":
        cycle = (all_v,) + edge_blocks
        return Schedule((cycle,) * n_cycles, True, policy)
    if policy == "singleton_cyclic":
        return Schedule((vertex_blocks + edge_blocks,) * n_cycles, False, policy)
    if policy == "edge_coloring_parallel":
        cycle = (all_v,) + tuple(Block(tuple(Edge(*e) for e in cls)) for cls in _edge_colouring(graph))
        return Schedule((cycle,) * n_cycles, True, policy)
    if policy == "random_coverage":
        if seed is None:
            raise ValueError("random_coverage requires a seed")
        return Schedule(_RandomCycles(vertex_blocks + edge_blocks, n_cycles, seed), False, policy, seed)
    raise ValueError(f"unknown schedule policy {policy!r}")


def validate_schedule(graph: Graph, schedule: Schedule) -> Violation | None:
    """Return None when every cycle covers V and E with decoupled blocks.

    Cycles are numbered from 1 in the returned violation.
    """
    prev = None
    for n, cycle in enumerate(schedule.cycles, start=1):
        if cycle is prev:
            continue
        prev = cycle
        bad = validate_cycle(graph, cycle, n, schedule.starts_with_all_vertices)
        if bad is not None:
            return bad
    return None


def validate_cycle(graph: Graph, cycle, n: int, starts_with_all_vertices: bool = False) -> Violation | None:
    """Check one cycle (numbered ``n``) of a schedule."""
    for block in cycle:
        for mem in block.members:
            if isinstance(mem, Vertex):
                ok = 0 <= mem.i < graph.n_vertices
            else:
                ok = mem.i < mem.j and (mem.i, mem.j) in graph._index
            if not ok:
                return Violation(n, message=f"cycle {n} names unknown member {mem}")
        hit = block.coupling()
        if hit is not None:
            c, pair = hit
            return Violation(n, coupled=pair,
                             message=f"cycle {n}: block {block} coupled on coordinate {c}")
    present = {mem for block in cycle for mem in block.members}
    missing = tuple(mem for mem in graph.members() if mem not in present)
    if missing:
        names = ", ".join(str(m) for m in missing)
        return Violation(n, missing=missing, message=f"cycle {n} misses {names}")
    if starts_with_all_vertices:
        first = cycle[0].members if cycle else ()
        if set(first) != {Vertex(i) for i in range(graph.n_vertices)}:
            return Violation(n, message=f"cycle {n} does not start with the all-vertex block")
    return None
