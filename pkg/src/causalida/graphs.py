"""Graph types and Markov-equivalence machinery.

Graphs are immutable. Node labels are strings and every ordering or
tie-break in this package is lexicographic on labels.
"""

from __future__ import annotations

import itertools
from collections import deque
from typing import Iterable, Iterator

__all__ = [
    "GraphError",
    "CycleError",
    "Pdag",
    "Dag",
    "parents",
    "skeleton",
    "is_d_separated",
    "unshielded_colliders",
    "meek_closure",
    "dag_to_cpdag",
    "enumerate_dags_in_class",
    "topological_order",
    "graph_to_json",
    "graph_from_json",
]


class GraphError(ValueError):
    """Invalid graph input: unknown labels, overlapping sets, bad edges."""


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(self.cycle))


class Pdag:
    """Partially directed graph over string-labelled nodes.

    Parameters
    ----------
    nodes : iterable of str
        Node labels. Stored in the order given (duplicates rejected).
    directed : iterable of (str, str)
        Directed edges ``(tail, head)``.
    undirected : iterable of (str, str)
        Undirected edges; orientation of each pair is irrelevant.
    """

    __slots__ = ("nodes", "directed", "undirected", "_pa", "_ch", "_ne", "_adj")

    def __init__(self, nodes: Iterable[str], directed=(), undirected=()):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node labels")
        known = set(nodes)
        pa = {v: set() for v in nodes}
        ch = {v: set() for v in nodes}
        ne = {v: set() for v in nodes}
        adj = {v: set() for v in nodes}

        def _check(u, v):
            if u not in known or v not in known:
                raise GraphError(f"edge ({u!r}, {v!r}) uses an unknown node")
            if u == v:
                raise GraphError(f"self-loop at {u!r}")
            if v in adj[u]:
                raise GraphError(f"more than one edge between {u!r} and {v!r}")

        d_edges = []
        for u, v in directed:
            _check(u, v)
            pa[v].add(u)
            ch[u].add(v)
            adj[u].add(v)
            adj[v].add(u)
            d_edges.append((u, v))
        u_edges = []
        for u, v in undirected:
            _check(u, v)
            ne[u].add(v)
            ne[v].add(u)
            adj[u].add(v)
            adj[v].add(u)
            u_edges.append(frozenset((u, v)))

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "directed", frozenset(d_edges))
        object.__setattr__(self, "undirected", frozenset(u_edges))
        object.__setattr__(self, "_pa", {v: frozenset(s) for v, s in pa.items()})
        object.__setattr__(self, "_ch", {v: frozenset(s) for v, s in ch.items()})
        object.__setattr__(self, "_ne", {v: frozenset(s) for v, s in ne.items()})
        object.__setattr__(self, "_adj", {v: frozenset(s) for v, s in adj.items()})

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _require(self, v):
        if v not in self._adj:
            raise GraphError(f"unknown node {v!r}")

    def parents(self, v: str) -> frozenset:
        self._require(v)
        return self._pa[v]

    def children(self, v: str) -> frozenset:
        self._require(v)
        return self._ch[v]

    def neighbors(self, v: str) -> frozenset:
        """Nodes joined to ``v`` by an undirected edge."""
        self._require(v)
        return self._ne[v]

    def adjacent(self, v: str) -> frozenset:
        self._require(v)
        return self._adj[v]

    def is_adjacent(self, u: str, v: str) -> bool:
        return v in self._adj[u]

    def has_directed(self, u: str, v: str) -> bool:
        return u in self._pa[v]

    def has_undirected(self, u: str, v: str) -> bool:
        return v in self._ne[u]

    def sorted_directed(self) -> list:
        return sorted(self.directed)

    def sorted_undirected(self) -> list:
        return sorted(tuple(sorted(e)) for e in self.undirected)

    def skeleton_pairs(self) -> set:
        return {frozenset(e) for e in self.directed} | set(self.undirected)

    @property
    def is_directed(self) -> bool:
        return not self.undirected

    def __eq__(self, other):
        if not isinstance(other, Pdag):
            return NotImplemented
        return (
            set(self.nodes) == set(other.nodes)
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def __hash__(self):
        return hash((frozenset(self.nodes), self.directed, self.undirected))

    def __repr__(self):
        parts = [f"{u}->{v}" for u, v in self.sorted_directed()]
        parts += [f"{u}-{v}" for u, v in self.sorted_undirected()]
        return f"{type(self).__name__}({list(self.nodes)}, [{', '.join(parts)}])"


class Dag(Pdag):
    """Directed acyclic graph. Construction fails on any directed cycle."""

    __slots__ = ()

    def __init__(self, nodes: Iterable[str], edges=()):
        super().__init__(nodes, directed=edges)
        # topological_order raises CycleError for cyclic input
        topological_order(self)

    @property
    def edges(self) -> frozenset:
        return self.directed

    @classmethod
    def from_pdag(cls, g: Pdag) -> "Dag":
        if g.undirected:
            raise GraphError("graph has undirected edges")
        return cls(g.nodes, g.directed)


def parents(g: Pdag, v: str) -> frozenset:
    """Sources of directed edges into ``v``; undirected neighbours excluded."""
    return g.parents(v)


def skeleton(g: Pdag) -> Pdag:
    return Pdag(g.nodes, undirected=[tuple(e) for e in g.skeleton_pairs()])


def topological_order(g: Pdag) -> list:
    """Kahn's algorithm, always emitting the smallest available label."""
    import heapq

    indeg = {v: len(g._pa[v]) for v in g.nodes}
    heap = [v for v in g.nodes if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in g._ch[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(g.nodes):
        raise CycleError(_find_cycle(g, {v for v in g.nodes if indeg[v] > 0}))
    return order


def _find_cycle(g: Pdag, remaining: set) -> list:
    # every node left after Kahn has a parent inside the remaining set
    v = min(remaining)
    seen = []
    while v not in seen:
        seen.append(v)
        v = min(p for p in g._pa[v] if p in remaining)
    cycle = seen[seen.index(v):]
    cycle.reverse()
    return cycle + [cycle[0]]


def ancestors(g: Pdag, nodes: Iterable[str]) -> set:
    """Nodes with a directed path into ``nodes``, including ``nodes``."""
    out = set(nodes)
    stack = list(out)
    while stack:
        v = stack.pop()
        for p in g._pa[v]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def descendants(g: Pdag, nodes: Iterable[str]) -> set:
    out = set(nodes)
    stack = list(out)
    while stack:
        v = stack.pop()
        for c in g._ch[v]:
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def _as_set(g: Pdag, name: str, nodes) -> set:
    if isinstance(nodes, str):
        nodes = {nodes}
    nodes = set(nodes)
    for v in nodes:
        g._require(v)
    return nodes


def is_d_separated(g: Dag, a, b, s=()) -> bool:
    """Test whether node sets ``a`` and ``b`` are d-separated given ``s``.

    Uses the ancestor-aware reachability traversal: a trail may pass a
    collider only if the collider is an ancestor of ``s``, and may pass a
    non-collider only if it is not in ``s``.

    Parameters
    ----------
    g : Dag
    a, b : str or iterable of str
        Nonempty node sets.
    s : iterable of str
        Conditioning set. ``a``, ``b`` and ``s`` must be pairwise disjoint.

    Returns
    -------
    bool
        True iff every path between ``a`` and ``b`` is blocked by ``s``.
    """
    if g.undirected:
        raise GraphError("d-separation needs a DAG")
    a, b, s = _as_set(g, "a", a), _as_set(g, "b", b), _as_set(g, "s", s)
    if not a or not b:
        raise GraphError("a and b must be nonempty")
    if a & b or a & s or b & s:
        raise GraphError("a, b and s must be pairwise disjoint")

    anc_s = ancestors(g, s)
    # direction: "up" = arrived from a child, "down" = arrived from a parent
    queue = deque((v, "up") for v in a)
    visited = set()
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in s and v in b:
            return False
        if direction == "up":
            if v in s:
                continue
            queue.extend((p, "up") for p in g._pa[v])
            queue.extend((c, "down") for c in g._ch[v])
        else:
            if v not in s:
                queue.extend((c, "down") for c in g._ch[v])
            if v in anc_s:
                queue.extend((p, "up") for p in g._pa[v])
    return True


def unshielded_colliders(g: Pdag) -> set:
    """All triples ``(w, x, z)`` with ``w -> x <- z`` and ``w``, ``z`` nonadjacent.

    Each collider is reported once, with ``w < z``.
    """
    out = set()
    for x in g.nodes:
        for w, z in itertools.combinations(sorted(g._pa[x]), 2):
            if not g.is_adjacent(w, z):
                out.add((w, x, z))
    return out


class _Orienter:
    """Mutable working copy used while orienting edges."""

    def __init__(self, g: Pdag):
        self.nodes = sorted(g.nodes)
        self.pa = {v: set(g._pa[v]) for v in g.nodes}
        self.ch = {v: set(g._ch[v]) for v in g.nodes}
        self.ne = {v: set(g._ne[v]) for v in g.nodes}
        self.adj = {v: set(g._adj[v]) for v in g.nodes}
        self.order = g.nodes

    def orient(self, u, v):
        self.ne[u].discard(v)
        self.ne[v].discard(u)
        self.pa[v].add(u)
        self.ch[u].add(v)

    def to_pdag(self) -> Pdag:
        directed = [(u, v) for v in self.order for u in self.pa[v]]
        undirected = [(u, v) for u in self.order for v in self.ne[u] if u < v]
        return Pdag(self.order, directed, undirected)


def _meek_step(w: _Orienter):
    """Find one edge orientable by R1-R3, scanning in label order."""
    for b in w.nodes:
        for c in sorted(w.ne[b]):
            # R1: a -> b - c, a and c nonadjacent
            for a in sorted(w.pa[b]):
                if c not in w.adj[a]:
                    return b, c, "R1"
            # R2: b -> x -> c with b - c
            for x in sorted(w.ch[b]):
                if c in w.ch[x]:
                    return b, c, "R2"
            # R3: b - x, b - y, x -> c, y -> c, x and y nonadjacent
            cands = sorted(w.ne[b] & w.pa[c])
            for x, y in itertools.combinations(cands, 2):
                if y not in w.adj[x]:
                    return b, c, "R3"
    return None


def meek_closure(g: Pdag, trace: list | None = None) -> Pdag:
    """Apply orientation rules R1-R3 until no undirected edge can be oriented.

    Only undirected edges are ever oriented; existing directed edges are
    left alone. If ``trace`` is a list, ``(tail, head, rule)`` tuples are
    appended to it in application order.
    """
    w = _Orienter(g)
    while True:
        step = _meek_step(w)
        if step is None:
            break
        u, v, rule = step
        w.orient(u, v)
        if trace is not None:
            trace.append(step)
    return w.to_pdag()


def dag_to_cpdag(g: Dag) -> Pdag:
    """CPDAG of the Markov equivalence class of ``g``.

    Keeps the skeleton, directs the unshielded colliders of ``g`` and closes
    under the orientation rules.
    """
    if g.undirected:
        raise GraphError("dag_to_cpdag needs a DAG")
    topological_order(g)
    keep = set()
    for w_, x, z in unshielded_colliders(g):
        keep.add((w_, x))
        keep.add((z, x))
    undirected = [e for e in g.directed if e not in keep]
    return meek_closure(Pdag(g.nodes, keep, undirected))


def _reaches(ch: dict, src: str, dst: str) -> bool:
    stack, seen = [src], {src}
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for c in ch[v]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def iter_class_members(c: Pdag) -> Iterator[Dag]:
    """Consistent DAG extensions of ``c`` that add no unshielded collider.

    Backtracks over undirected edges in label order; the orientation vector
    entry is 0 for ``u -> v`` and 1 for ``v -> u`` with ``u < v``, and
    members come out in lexicographic order of that vector.
    """
    und = c.sorted_undirected()
    pa = {v: set(c._pa[v]) for v in c.nodes}
    ch = {v: set(c._ch[v]) for v in c.nodes}
    adj = c._adj

    def ok(u, v):
        # u -> v: no cycle, no new unshielded collider at v
        if _reaches(ch, v, u):
            return False
        return all(w_ in adj[u] for w_ in pa[v])

    def rec(k):
        if k == len(und):
            yield Dag(c.nodes, [(u, v) for v in c.nodes for u in pa[v]])
            return
        a, b = und[k]
        for u, v in ((a, b), (b, a)):
            if ok(u, v):
                pa[v].add(u)
                ch[u].add(v)
                yield from rec(k + 1)
                pa[v].discard(u)
                ch[u].discard(v)

    # directed part alone must already be acyclic
    try:
        topological_order(Pdag(c.nodes, c.directed))
    except CycleError:
        return
    yield from rec(0)


def enumerate_dags_in_class(c: Pdag, max_dags: int | None = None) -> list:
    """All DAGs whose CPDAG is ``c``, in lexicographic orientation order.

    Raises
    ------
    GraphError
        If ``c`` has no consistent extension or is not a completed PDAG.
    BudgetExceeded
        If more than ``max_dags`` members exist.
    """
    out = []
    for d in iter_class_members(c):
        if not out and dag_to_cpdag(d) != c:
            raise GraphError("input is not a CPDAG: its extensions map to a different CPDAG")
        out.append(d)
        if max_dags is not None and len(out) > max_dags:
            raise BudgetExceeded(f"equivalence class has more than {max_dags} members")
    if not out:
        raise GraphError("input is not a CPDAG: no consistent DAG extension")
    return out


def some_extension(c: Pdag) -> Dag:
    """First member of ``c``'s class (raises GraphError if none)."""
    for d in iter_class_members(c):
        return d
    raise GraphError("no consistent DAG extension")


class BudgetExceeded(RuntimeError):
    """A desk-scale enumeration budget was exceeded."""


def graph_to_json(g: Pdag) -> dict:
    edges = [{"from": u, "to": v, "type": "directed"} for u, v in g.sorted_directed()]
    edges += [{"from": u, "to": v, "type": "undirected"} for u, v in g.sorted_undirected()]
    return {"nodes": list(g.nodes), "edges": edges}


def graph_from_json(obj: dict) -> Pdag:
    """Inverse of :func:`graph_to_json`; returns a Dag when no edge is undirected."""
    try:
        nodes = [str(v) for v in obj["nodes"]]
        directed, undirected = [], []
        for e in obj.get("edges", []):
            kind = e.get("type", "directed")
            pair = (str(e["from"]), str(e["to"]))
            if kind == "directed":
                directed.append(pair)
            elif kind == "undirected":
                undirected.append(pair)
            else:
                raise GraphError(f"unknown edge type {kind!r}")
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    if undirected:
        return Pdag(nodes, directed, undirected)
    return Dag(nodes, directed)
