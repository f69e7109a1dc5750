"""Causal DAGs: Markov boundaries, d-separation and collider partitions.

Vertices are referred to by name or by integer index; set-valued queries
return frozensets of indices.  A Dag is immutable after construction and all
queries are read-only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from collections import deque


class GraphError(ValueError):
    """Invalid graph construction or query."""


class CycleError(GraphError):
    """The edge set contains a directed cycle."""


class PartitionError(GraphError):
    """The boundary cannot be partitioned into a valid collider structure."""


VertexLike = "int | str"


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over named vertices.

    ``edges`` are (parent, child) index pairs.  Parent/child index sets per
    vertex are precomputed; construction rejects self-loops, duplicate edges
    and cycles.
    """

    vertices: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    parent_sets: tuple[frozenset[int], ...]
    child_sets: tuple[frozenset[int], ...]

    @classmethod
    def from_edges(cls, vertices, edges) -> "Dag":
        vertices = tuple(str(v) for v in vertices)
        if len(set(vertices)) != len(vertices):
            raise GraphError("duplicate vertex names")
        n = len(vertices)
        seen: set[tuple[int, int]] = set()
        parents: list[set[int]] = [set() for _ in range(n)]
        children: list[set[int]] = [set() for _ in range(n)]
        for p, c in edges:
            p, c = int(p), int(c)
            if not (0 <= p < n and 0 <= c < n):
                raise GraphError(f"edge ({p}, {c}) references an unknown vertex")
            if p == c:
                raise GraphError(f"self-loop at vertex {vertices[p]!r}")
            if (p, c) in seen:
                raise GraphError(f"duplicate edge {vertices[p]} -> {vertices[c]}")
            seen.add((p, c))
            parents[c].add(p)
            children[p].add(c)
        dag = cls(
            vertices=vertices,
            edges=tuple(sorted(seen)),
            parent_sets=tuple(frozenset(s) for s in parents),
            child_sets=tuple(frozenset(s) for s in children),
        )
        dag._check_acyclic()
        return dag

    def _check_acyclic(self) -> None:
        # Kahn's algorithm; leftover vertices lie on a cycle.
        indeg = [len(s) for s in self.parent_sets]
        queue = deque(i for i, d in enumerate(indeg) if d == 0)
        seen = 0
        while queue:
            v = queue.popleft()
            seen += 1
            for c in self.child_sets[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.vertices):
            cyclic = [self.vertices[i] for i, d in enumerate(indeg) if d > 0]
            raise CycleError(f"cycle detected among {cyclic}")

    @property
    def n(self) -> int:
        return len(self.vertices)

    def index(self, v) -> int:
        if isinstance(v, str):
            try:
                return self.vertices.index(v)
            except ValueError:
                raise GraphError(f"unknown vertex {v!r}") from None
        i = int(v)
        if not 0 <= i < self.n:
            raise GraphError(f"vertex index {i} out of range")
        return i

    def indices(self, vs) -> frozenset[int]:
        return frozenset(self.index(v) for v in vs)

    def names(self, ixs) -> set[str]:
        return {self.vertices[i] for i in ixs}

    def parents(self, v) -> frozenset[int]:
        return self.parent_sets[self.index(v)]

    def children(self, v) -> frozenset[int]:
        return self.child_sets[self.index(v)]

    def spouses(self, v) -> frozenset[int]:
        """Other parents of v's children."""
        v = self.index(v)
        out: set[int] = set()
        for c in self.child_sets[v]:
            out |= self.parent_sets[c]
        out.discard(v)
        return frozenset(out)

    def has_edge(self, p, c) -> bool:
        return self.index(c) in self.child_sets[self.index(p)]

    def adjacent(self, a, b) -> bool:
        return self.has_edge(a, b) or self.has_edge(b, a)

    def ancestors(self, vs) -> frozenset[int]:
        """Proper ancestors of the vertex set (the set itself excluded)."""
        todo = deque(self.index(v) for v in (vs if not isinstance(vs, (int, str)) else [vs]))
        out: set[int] = set()
        while todo:
            v = todo.popleft()
            for p in self.parent_sets[v]:
                if p not in out:
                    out.add(p)
                    todo.append(p)
        return frozenset(out)


_EDGE_RE = re.compile(r"^(.+?)\s*->\s*(.+?)$")


def parse_dag(text: str) -> Dag:
    """Parse the one-edge-per-line text format ``parent -> child``.

    ``#`` starts a comment, blank lines are ignored and vertex order is
    first-appearance order.
    """
    order: list[str] = []
    index: dict[str, int] = {}
    edges: list[tuple[int, int]] = []

    def intern(name: str) -> int:
        if name not in index:
            index[name] = len(order)
            order.append(name)
        return index[name]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _EDGE_RE.match(line)
        if not m or "->" in m.group(2):
            raise GraphError(f"malformed edge on line {lineno}: {raw.strip()!r}")
        p, c = m.group(1).strip(), m.group(2).strip()
        edges.append((intern(p), intern(c)))
    return Dag.from_edges(order, edges)


def markov_boundary(dag: Dag, y) -> frozenset[int]:
    """Parents, children and spouses of y."""
    y = dag.index(y)
    return dag.parents(y) | dag.children(y) | dag.spouses(y)


_UP, _DOWN = 0, 1


def d_separated(dag: Dag, a, b, s) -> bool:
    """Whether every path between the sets a and b is blocked by s.

    Chains and forks are blocked by conditioning; a collider blocks unless it
    or one of its descendants is conditioned on.  Implemented as linear-time
    reachability over (vertex, travel direction) states rather than path
    enumeration.
    """
    a, b, s = dag.indices(a), dag.indices(b), dag.indices(s)
    if a & b or a & s or b & s:
        raise GraphError("a, b and s must be pairwise disjoint")
    # Colliders open iff they have a conditioned inclusive descendant,
    # i.e. lie in s or among its ancestors.
    open_colliders = s | dag.ancestors(s)
    queue: deque[tuple[int, int]] = deque((v, _UP) for v in a)
    visited: set[tuple[int, int]] = set(queue)

    def push(v: int, direction: int) -> None:
        if (v, direction) not in visited:
            visited.add((v, direction))
            queue.append((v, direction))

    while queue:
        v, direction = queue.popleft()
        if v in b:
            return False
        if direction == _UP and v not in s:
            for p in dag.parent_sets[v]:
                push(p, _UP)
            for c in dag.child_sets[v]:
                push(c, _DOWN)
        elif direction == _DOWN:
            if v not in s:
                for c in dag.child_sets[v]:
                    push(c, _DOWN)
            if v in open_colliders:
                for p in dag.parent_sets[v]:
                    push(p, _UP)
    return True


def boundary_colliders(dag: Dag, y) -> list[int]:
    """Boundary vertices whose parent structure opens an independence with y.

    A vertex v in Mb(y) qualifies when it has at least two parents inside
    Mb(y) or y itself, one of which is a boundary vertex not adjacent to y.
    The returned list is nonempty exactly when some Z in Mb(y) can be
    d-separated from y by a subset of the boundary.
    """
    y = dag.index(y)
    mb = markov_boundary(dag, y)
    adjacent = dag.parents(y) | dag.children(y)
    out = []
    for v in sorted(mb):
        inside = dag.parents(v) & (mb | {y})
        if len(inside) < 2:
            continue
        if any(p != y and p not in adjacent for p in inside):
            out.append(v)
    return out


@dataclass(frozen=True)
class ColliderPartition:
    """Split of Mb(y) into children, parents, and everything else.

    ``children`` collects the direct children of the target, ``parents`` its
    direct parents, and ``others`` the remaining boundary vertices (spouses
    and their in-boundary ancestors).  Valid partitions carry no edge from
    ``children`` into ``others`` and satisfy y d-separated from ``others``
    given ``parents``.
    """

    target: int
    children: frozenset[int]
    others: frozenset[int]
    parents: frozenset[int]


def collider_partition(dag: Dag, y) -> ColliderPartition:
    y = dag.index(y)
    mb = markov_boundary(dag, y)
    if not mb:
        raise PartitionError(f"vertex {dag.vertices[y]!r} has an empty Markov boundary")
    children = dag.children(y)
    parents = dag.parents(y)
    others = mb - children - parents
    for c in children:
        for o in others:
            if dag.has_edge(c, o):
                raise PartitionError(
                    f"edge {dag.vertices[c]} -> {dag.vertices[o]} runs from the "
                    "children block into the others block"
                )
    if others and not d_separated(dag, {y}, others, parents):
        raise PartitionError(
            "target is not d-separated from the others block given its parents"
        )
    return ColliderPartition(target=y, children=children, others=others, parents=parents)
