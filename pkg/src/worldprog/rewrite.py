"""Graph rewriting rules ``L -> R`` with a preserved interface, and their application."""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

from .graphs import (
    MAX_VERTICES,
    GraphError,
    GraphSizeError,
    LabeledGraph,
    State,
    canonical_form,
    connected_components,
    is_connected,
    iter_embeddings,
    verify_embedding,
)


class RuleError(ValueError):
    pass


class UnsupportedRuleError(RuleError):
    pass


class PreconditionError(RuleError):
    pass


def _bfs_order(g: LabeledGraph) -> list[int]:
    # order used for pattern ids so every vertex after the first has an earlier neighbour
    n = len(g.labels)
    if n == 0:
        return []
    start = min(range(n), key=lambda v: (-len(g.adj[v]), g.labels[v], v))
    order = [start]
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in sorted(g.adj[u], key=lambda w: (-len(g.adj[w]), g.labels[w], w)):
            if w not in seen:
                seen.add(w)
                order.append(w)
                queue.append(w)
    order.extend(v for v in range(n) if v not in seen)
    return order


def _reorder(g: LabeledGraph, order: list[int]) -> tuple[LabeledGraph, dict[int, int]]:
    perm = [0] * len(order)
    for new, old in enumerate(order):
        perm[old] = new
    return g.relabel(perm), {old: new for new, old in enumerate(order)}


def compute_rule_id(lhs: LabeledGraph, rhs: LabeledGraph, interface: dict[int, int]) -> str:
    """Id invariant under re-indexing of either side: canonical code of the glued rule graph."""
    nl = len(lhs.labels)
    labels = ["L:" + lab for lab in lhs.labels] + ["R:" + lab for lab in rhs.labels]
    edges = [(u, v, "L:" + lab) for u, v, lab in lhs.edges]
    edges += [(nl + u, nl + v, "R:" + lab) for u, v, lab in rhs.edges]
    edges += [(l, nl + r, "K") for l, r in interface.items()]
    code = canonical_form(LabeledGraph(labels, edges, max_vertices=2 * MAX_VERTICES))
    return hashlib.sha1(code).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class RewriteRule:
    lhs: LabeledGraph
    rhs: LabeledGraph
    interface: dict[int, int]  # lhs id -> rhs id
    support: int = 1
    rule_id: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.lhs) == 0:
            raise UnsupportedRuleError("rule lhs must be non-empty")
        if not is_connected(self.lhs):
            raise UnsupportedRuleError("rule lhs must be connected")
        inv = {}
        for l, r in self.interface.items():
            if not (0 <= l < len(self.lhs) and 0 <= r < len(self.rhs)):
                raise RuleError(f"interface pair {l}={r} references a missing vertex")
            if r in inv:
                raise RuleError(f"interface is not injective at rhs vertex {r}")
            inv[r] = l
        if not self.rule_id:
            object.__setattr__(self, "rule_id", compute_rule_id(self.lhs, self.rhs, self.interface))

    @classmethod
    def build(cls, lhs: LabeledGraph, rhs: LabeledGraph, interface: dict[int, int], support: int = 1) -> "RewriteRule":
        """Construct with lhs ids renumbered in breadth-first order for fast matching."""
        if len(lhs) and is_connected(lhs):
            lhs, ren = _reorder(lhs, _bfs_order(lhs))
            interface = {ren[l]: r for l, r in interface.items()}
        return cls(lhs, rhs, dict(interface), support)

    def with_support(self, support: int) -> "RewriteRule":
        return RewriteRule(self.lhs, self.rhs, self.interface, support, self.rule_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RewriteRule):
            return NotImplemented
        return self.rule_id == other.rule_id

    def __hash__(self) -> int:
        return hash(self.rule_id)

    @property
    def deleted(self) -> list[int]:
        return [v for v in range(len(self.lhs)) if v not in self.interface]

    def __repr__(self) -> str:
        return f"RewriteRule({self.rule_id}, |L|={len(self.lhs)}, |R|={len(self.rhs)}, support={self.support})"


@dataclass(frozen=True)
class Application:
    rule_id: str
    target_graph_index: int
    embedding: tuple[int, ...]  # host id of each lhs vertex

    def mapping(self) -> dict[int, int]:
        return dict(enumerate(self.embedding))


def rewrite_graph(rule: RewriteRule, host: LabeledGraph, embedding: tuple[int, ...]) -> LabeledGraph:
    """Rewrite ``host`` at ``embedding``; the result may be disconnected."""
    lhs, rhs = rule.lhs, rule.rhs
    n = len(host.labels)
    kept_l = rule.interface
    removed = {embedding[v] for v in range(len(lhs)) if v not in kept_l}
    matched_edges = {frozenset((embedding[u], embedding[v])) for u, v, _ in lhs.edges}

    survivors = [v for v in range(n) if v not in removed]
    new_id = {v: i for i, v in enumerate(survivors)}
    labels = [host.labels[v] for v in survivors]
    # rhs vertex -> new host id
    r_to_host: dict[int, int] = {}
    for l, r in kept_l.items():
        hid = new_id[embedding[l]]
        r_to_host[r] = hid
        labels[hid] = rhs.labels[r]
    for r in range(len(rhs.labels)):
        if r not in r_to_host:
            r_to_host[r] = len(labels)
            labels.append(rhs.labels[r])
    if len(labels) > MAX_VERTICES:
        raise GraphSizeError(f"rewrite result has {len(labels)} vertices, cap is {MAX_VERTICES}")

    adj: list[dict[int, str]] = [{} for _ in labels]
    for u in survivors:
        nu = new_id[u]
        for w, lab in host.adj[u].items():
            if w in removed or frozenset((u, w)) in matched_edges:
                continue
            adj[nu][new_id[w]] = lab
    for u, v, lab in rhs.edges:
        a, b = r_to_host[u], r_to_host[v]
        adj[a][b] = lab
        adj[b][a] = lab
    return LabeledGraph._trusted(tuple(labels), tuple(adj))


def apply_rule(rule: RewriteRule, state: State, app: Application, max_vertices: int = MAX_VERTICES) -> State:
    """Apply ``rule`` at ``app`` and split the rewritten member into components.

    The new components take the place of the target member; all other members
    are carried over unchanged (same objects).
    """
    i = app.target_graph_index
    if not 0 <= i < len(state.graphs):
        raise PreconditionError(f"target graph index {i} out of range")
    host = state.graphs[i]
    if len(app.embedding) != len(rule.lhs) or not verify_embedding(rule.lhs, host, app.mapping()):
        raise PreconditionError("embedding does not match the target graph")
    new = rewrite_graph(rule, host, app.embedding)
    parts = connected_components(new) if len(new.labels) else []
    graphs = state.graphs[:i] + tuple(parts) + state.graphs[i + 1:]
    return State(graphs, max_vertices=max_vertices)


def enumerate_applications(
    rule: RewriteRule, state: State, cap: int = 1_000_000, induced: bool = True
) -> list[tuple[Application, State]]:
    """Applications of ``rule`` to ``state`` with pairwise distinct successors.

    At most ``cap`` embeddings are tried, over members in order; members
    isomorphic to an earlier one are skipped since they give the same successors.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    out: list[tuple[Application, State]] = []
    seen_keys: set[bytes] = set()
    seen_members: set[bytes] = set()
    tried = 0
    for gi, g in enumerate(state.graphs):
        if tried >= cap:
            break
        if len(g.labels) < len(rule.lhs.labels):
            continue
        code = canonical_form(g)
        if code in seen_members:
            continue
        seen_members.add(code)
        for emb in iter_embeddings(rule.lhs, g, induced):
            tried += 1
            app = Application(rule.rule_id, gi, emb)
            try:
                succ = apply_rule_unchecked(rule, state, app)
            except GraphSizeError:
                continue
            k = succ.key()
            if k not in seen_keys:
                seen_keys.add(k)
                out.append((app, succ))
            if tried >= cap:
                break
    return out


def apply_rule_unchecked(rule: RewriteRule, state: State, app: Application) -> State:
    # embedding already produced by the matcher
    new = rewrite_graph(rule, state.graphs[app.target_graph_index], app.embedding)
    parts = connected_components(new) if len(new.labels) else []
    i = app.target_graph_index
    return State(state.graphs[:i] + tuple(parts) + state.graphs[i + 1:])


def reverse_rule(rule: RewriteRule) -> RewriteRule:
    """Swap the sides of ``rule`` and invert its interface."""
    if len(rule.rhs) == 0 or not is_connected(rule.rhs):
        raise UnsupportedRuleError(f"reverse of rule {rule.rule_id} would have a disconnected lhs")
    inv = {r: l for l, r in rule.interface.items()}
    return RewriteRule.build(rule.rhs, rule.lhs, inv, rule.support)


__all__ = [
    "Application",
    "GraphError",
    "PreconditionError",
    "RewriteRule",
    "RuleError",
    "UnsupportedRuleError",
    "apply_rule",
    "compute_rule_id",
    "enumerate_applications",
    "reverse_rule",
    "rewrite_graph",
]
