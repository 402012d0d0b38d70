"""Labeled undirected graphs, canonical codes, isomorphism and subgraph matching.

Graphs are immutable. Vertex ids are dense ``0..n-1``; labels are interned
strings. A :class:`State` is a multiset of graphs, keyed up to isomorphism by
:func:`state_key`.
"""

from __future__ import annotations

import sys
from collections import deque
from typing import Iterable, Iterator, Sequence

MAX_VERTICES = 512

EMPTY_CODE = b"G0"
_FIELD = "\x1f"
_RECORD = "\x1e"
_PART = "\x1d"


class GraphError(ValueError):
    """Raised for graphs that violate the structural invariants."""


class GraphSizeError(GraphError):
    pass


def _check_symbol(sym: str, what: str) -> str:
    if not isinstance(sym, str) or not sym or any(c.isspace() for c in sym):
        raise GraphError(f"invalid {what} label {sym!r}")
    if any(c < " " for c in sym):
        raise GraphError(f"control character in {what} label {sym!r}")
    return sys.intern(sym)


class LabeledGraph:
    """Vertex- and edge-labeled simple undirected graph."""

    __slots__ = ("labels", "adj", "_code", "_fp", "_hash")

    def __init__(
        self,
        labels: Sequence[str],
        edges: Iterable[tuple[int, int, str]] = (),
        *,
        max_vertices: int = MAX_VERTICES,
    ):
        labels = tuple(_check_symbol(lab, "vertex") for lab in labels)
        n = len(labels)
        if n > max_vertices:
            raise GraphSizeError(f"graph has {n} vertices, cap is {max_vertices}")
        adj: list[dict[int, str]] = [{} for _ in range(n)]
        for u, v, lab in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) references a missing vertex")
            if u == v:
                raise GraphError(f"self-loop on vertex {u}")
            if v in adj[u]:
                raise GraphError(f"parallel edge ({u}, {v})")
            lab = _check_symbol(lab, "edge")
            adj[u][v] = lab
            adj[v][u] = lab
        self.labels = labels
        self.adj = tuple(adj)
        self._code = None
        self._fp = None
        self._hash = None

    @classmethod
    def _trusted(cls, labels: tuple[str, ...], adj: tuple[dict[int, str], ...]) -> "LabeledGraph":
        # internal constructor for already-validated data
        g = cls.__new__(cls)
        g.labels = labels
        g.adj = adj
        g._code = None
        g._fp = None
        g._hash = None
        return g

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    @property
    def edges(self) -> list[tuple[int, int, str]]:
        """Edges as sorted ``(u, v, label)`` triples with ``u < v``."""
        return [(u, v, lab) for u, nb in enumerate(self.adj) for v, lab in sorted(nb.items()) if u < v]

    def edge_label(self, u: int, v: int) -> str | None:
        return self.adj[u].get(v)

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def __eq__(self, other: object) -> bool:
        # structural identity (same ids), not isomorphism
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return self.labels == other.labels and self.adj == other.adj

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.labels, tuple(self.edges)))
        return self._hash

    def __repr__(self) -> str:
        return f"LabeledGraph({list(self.labels)!r}, {self.edges!r})"

    def relabel(self, perm: Sequence[int]) -> "LabeledGraph":
        """Return the graph with vertex ``i`` moved to id ``perm[i]``."""
        n = len(self.labels)
        labels = [""] * n
        for i, p in enumerate(perm):
            labels[p] = self.labels[i]
        edges = [(perm[u], perm[v], lab) for u, v, lab in self.edges]
        return LabeledGraph(labels, edges)

    def induced_subgraph(self, vertices: Iterable[int]) -> tuple["LabeledGraph", list[int]]:
        """Induced subgraph on ``vertices`` (kept in ascending order) and the old ids."""
        keep = sorted(set(vertices))
        index = {v: i for i, v in enumerate(keep)}
        labels = tuple(self.labels[v] for v in keep)
        adj = tuple({index[w]: lab for w, lab in self.adj[v].items() if w in index} for v in keep)
        return LabeledGraph._trusted(labels, adj), keep


def graph_from_edges(labels: Sequence[str], edges: Iterable[tuple[int, int, str]] = ()) -> LabeledGraph:
    return LabeledGraph(labels, edges)


# --------------------------------------------------------------------------
# canonical form
# --------------------------------------------------------------------------


def _rank(keys: list) -> list[int]:
    order = sorted(set(keys))
    index = {k: i for i, k in enumerate(order)}
    return [index[k] for k in keys]


def _refine(g: LabeledGraph, colors: list[int]) -> list[int]:
    """Colour refinement to the coarsest equitable partition finer than ``colors``."""
    n = len(colors)
    n_colors = len(set(colors))
    adj = g.adj
    while True:
        sigs = [
            (colors[v], tuple(sorted((lab, colors[w]) for w, lab in adj[v].items())))
            for v in range(n)
        ]
        new = _rank(sigs)
        k = len(set(new))
        if k == n_colors:
            return new
        colors, n_colors = new, k


def _leaf_code(g: LabeledGraph, colors: list[int]) -> tuple:
    # colors is a discrete partition: colors[v] is the new position of v
    n = len(colors)
    order = [0] * n
    for v, c in enumerate(colors):
        order[c] = v
    edges = sorted(
        (min(colors[u], colors[w]), max(colors[u], colors[w]), lab)
        for u in range(n)
        for w, lab in g.adj[u].items()
        if u < w
    )
    return (tuple(g.labels[v] for v in order), tuple(edges))


def _target_cell(colors: list[int]) -> list[int]:
    # first smallest non-singleton cell, by colour
    cells: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    best = None
    for c in sorted(cells):
        cell = cells[c]
        if len(cell) > 1 and (best is None or len(cell) < len(best)):
            best = cell
    return best or []


def _individualize(colors: list[int], v: int) -> list[int]:
    keys = [(c, 0 if u == v else 1) for u, c in enumerate(colors)]
    return _rank(keys)


def _orbit_reps(cell: list[int], autos: list[list[int]], fixed: list[int]) -> list[int]:
    """Representatives of ``cell`` under automorphisms that fix ``fixed`` pointwise."""
    gens = [a for a in autos if all(a[x] == x for x in fixed)]
    if not gens:
        return cell
    parent = {v: v for v in cell}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in gens:
        for v in cell:
            w = a[v]
            if w in parent:
                rv, rw = find(v), find(w)
                if rv != rw:
                    parent[max(rv, rw)] = min(rv, rw)
    return [v for v in cell if find(v) == v]


def _canonical_tuple(g: LabeledGraph) -> tuple:
    n = len(g.labels)
    colors = _refine(g, _rank(list(g.labels)))
    best: list = [None, None]  # code, colouring
    autos: list[list[int]] = []

    def search(colors: list[int], fixed: list[int]) -> None:
        cell = _target_cell(colors)
        if not cell:
            code = _leaf_code(g, colors)
            if best[0] is None or code < best[0]:
                best[0], best[1] = code, colors
            elif code == best[0]:
                # two leaves with equal codes differ by an automorphism
                prev = best[1]
                inv = [0] * n
                for v, c in enumerate(prev):
                    inv[c] = v
                autos.append([inv[colors[v]] for v in range(n)])
            return
        for v in _orbit_reps(cell, autos, fixed):
            # re-check: automorphisms found in earlier branches can merge orbits
            if v != cell[0] and v not in _orbit_reps(cell, autos, fixed):
                continue
            search(_refine(g, _individualize(colors, v)), fixed + [v])

    search(colors, [])
    return best[0]


def canonical_form(g: LabeledGraph) -> bytes:
    """Canonical byte code; equal for two graphs iff they are isomorphic."""
    if g._code is not None:
        return g._code
    if len(g.labels) > MAX_VERTICES:
        raise GraphSizeError(f"graph has {len(g.labels)} vertices, cap is {MAX_VERTICES}")
    if not g.labels:
        code = EMPTY_CODE
    else:
        labels, edges = _canonical_tuple(g)
        parts = [f"G{len(labels)}", _FIELD.join(labels)]
        parts.append(_FIELD.join(f"{u},{v},{lab}" for u, v, lab in edges))
        code = _PART.join(parts).encode("utf-8")
    g._code = code
    return code


def is_isomorphic(g1: LabeledGraph, g2: LabeledGraph) -> bool:
    if len(g1.labels) != len(g2.labels) or g1.n_edges != g2.n_edges:
        return False
    if sorted(g1.labels) != sorted(g2.labels):
        return False
    return canonical_form(g1) == canonical_form(g2)


# --------------------------------------------------------------------------
# subgraph embeddings
# --------------------------------------------------------------------------


def iter_embeddings(pattern: LabeledGraph, host: LabeledGraph, induced: bool = True) -> Iterator[tuple[int, ...]]:
    """Yield embeddings of ``pattern`` into ``host`` as tuples ``host_id[pattern_id]``.

    Pattern vertices are assigned in id order and host candidates are tried in
    ascending id order, so embeddings come out lexicographically sorted.
    """
    k = len(pattern.labels)
    if k == 0 or k > len(host.labels):
        return
    p_adj = pattern.adj
    h_adj = host.adj
    h_labels = host.labels
    by_label: dict[str, list[int]] = {}
    for v, lab in enumerate(h_labels):
        by_label.setdefault(lab, []).append(v)
    # earlier neighbour used to restrict candidates
    anchor = [min((w for w in p_adj[i] if w < i), default=-1) for i in range(k)]
    back = [[(w, lab) for w, lab in p_adj[i].items() if w < i] for i in range(k)]
    p_deg = [len(a) for a in p_adj]
    mapping = [-1] * k
    used: set[int] = set()

    def feasible(i: int, h: int) -> bool:
        if h in used or h_labels[h] != pattern.labels[i] or len(h_adj[h]) < p_deg[i]:
            return False
        ha = h_adj[h]
        for w, lab in back[i]:
            if ha.get(mapping[w]) != lab:
                return False
        if induced:
            pa = p_adj[i]
            for w in range(i):
                if w not in pa and mapping[w] in ha:
                    return False
        return True

    def extend(i: int) -> Iterator[tuple[int, ...]]:
        if i == k:
            yield tuple(mapping)
            return
        a = anchor[i]
        if a >= 0:
            cands = sorted(h for h in h_adj[mapping[a]] if h_labels[h] == pattern.labels[i])
        else:
            cands = by_label.get(pattern.labels[i], ())
        for h in cands:
            if feasible(i, h):
                mapping[i] = h
                used.add(h)
                yield from extend(i + 1)
                used.discard(h)
                mapping[i] = -1

    yield from extend(0)


def find_embeddings(
    pattern: LabeledGraph, host: LabeledGraph, limit: int = 1_000_000, induced: bool = True
) -> list[dict[int, int]]:
    """Up to ``limit`` label- and edge-preserving embeddings of ``pattern`` in ``host``."""
    if len(pattern.labels) == 0:
        raise GraphError("pattern must be non-empty")
    if limit < 1:
        raise ValueError("limit must be >= 1")
    out = []
    for emb in iter_embeddings(pattern, host, induced):
        out.append(dict(enumerate(emb)))
        if len(out) >= limit:
            break
    return out


def verify_embedding(pattern: LabeledGraph, host: LabeledGraph, mapping: dict[int, int], induced: bool = False) -> bool:
    """Check that ``mapping`` is a valid embedding of ``pattern`` into ``host``."""
    n = len(host.labels)
    if set(mapping) != set(range(len(pattern.labels))):
        return False
    images = list(mapping.values())
    if len(set(images)) != len(images) or any(not 0 <= h < n for h in images):
        return False
    for p, h in mapping.items():
        if pattern.labels[p] != host.labels[h]:
            return False
    for u, v, lab in pattern.edges:
        if host.adj[mapping[u]].get(mapping[v]) != lab:
            return False
    if induced:
        k = len(pattern.labels)
        for u in range(k):
            for v in range(u + 1, k):
                if v not in pattern.adj[u] and mapping[v] in host.adj[mapping[u]]:
                    return False
    return True


# --------------------------------------------------------------------------
# components and states
# --------------------------------------------------------------------------


def component_vertex_sets(g: LabeledGraph) -> list[list[int]]:
    seen = [False] * len(g.labels)
    comps = []
    for s in range(len(g.labels)):
        if seen[s]:
            continue
        seen[s] = True
        comp = [s]
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in g.adj[u]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def connected_components(g: LabeledGraph) -> list[LabeledGraph]:
    """Split ``g`` into connected components, ordered by smallest original id."""
    comps = component_vertex_sets(g)
    if len(comps) == 1:
        return [g]
    return [g.induced_subgraph(c)[0] for c in comps]


def is_connected(g: LabeledGraph) -> bool:
    return len(g.labels) > 0 and len(component_vertex_sets(g)) == 1


class State:
    """Multiset of graphs. Member order is significant only for addressing."""

    __slots__ = ("graphs", "_key")

    def __init__(self, graphs: Iterable[LabeledGraph] = (), max_vertices: int = MAX_VERTICES):
        self.graphs = tuple(graphs)
        total = sum(len(g.labels) for g in self.graphs)
        if total > max_vertices:
            raise GraphSizeError(f"state has {total} vertices, cap is {max_vertices}")
        self._key = None

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[LabeledGraph]:
        return iter(self.graphs)

    def __getitem__(self, i: int) -> LabeledGraph:
        return self.graphs[i]

    @property
    def n_vertices(self) -> int:
        return sum(len(g.labels) for g in self.graphs)

    def key(self) -> bytes:
        if self._key is None:
            self._key = _RECORD.encode().join(sorted(canonical_form(g) for g in self.graphs))
            self._key = b"S" + str(len(self.graphs)).encode() + b":" + self._key
        return self._key

    def __repr__(self) -> str:
        return f"State({list(self.graphs)!r})"


def state_key(s: State) -> bytes:
    """Order- and id-invariant, multiplicity-sensitive key of a state."""
    return s.key()
