"""Induce rewrite rules from observed ``(before, after)`` state pairs."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from .graphs import LabeledGraph, State, is_connected
from .rewrite import Application, RewriteRule, _bfs_order, apply_rule_unchecked

log = logging.getLogger(__name__)

Vertex = tuple[int, int]  # (graph index, vertex id)
Correspondence = dict[Vertex, Vertex]

MAX_INFER_VERTICES = 64
INFER_NODE_BUDGET = 500_000


class InductionError(ValueError):
    pass


class NoOpObservationError(InductionError):
    pass


class ConnectivityError(InductionError):
    """The changed core is disconnected or spans several state members at this radius."""


class CorrespondenceSizeError(InductionError):
    pass


class EmptyLibraryError(InductionError):
    pass


@dataclass
class Observation:
    before: State
    after: State
    correspondence: Correspondence | None = None

    def __post_init__(self):
        if self.correspondence is None:
            return
        targets = set()
        for (gi, v), (gj, w) in self.correspondence.items():
            if not (0 <= gi < len(self.before) and 0 <= v < len(self.before[gi])):
                raise InductionError(f"correspondence source ({gi},{v}) does not exist")
            if not (0 <= gj < len(self.after) and 0 <= w < len(self.after[gj])):
                raise InductionError(f"correspondence target ({gj},{w}) does not exist")
            if (gj, w) in targets:
                raise InductionError(f"correspondence is not injective at ({gj},{w})")
            targets.add((gj, w))


def _flatten(s: State):
    verts: list[Vertex] = [(gi, v) for gi, g in enumerate(s.graphs) for v in range(len(g))]
    index = {x: i for i, x in enumerate(verts)}
    labels = [s.graphs[gi].labels[v] for gi, v in verts]
    adj = [{index[(gi, w)]: lab for w, lab in s.graphs[gi].adj[v].items()} for gi, v in verts]
    return verts, labels, adj


def infer_correspondence(before: State, after: State, node_budget: int = INFER_NODE_BUDGET) -> Correspondence:
    """Label-preserving vertex map with the most preserved edges, then the most mapped vertices.

    Exact branch and bound. Candidates are tried by decreasing immediate edge
    gain, then ascending vertex order; the first optimum found is returned.
    """
    bv, bl, badj = _flatten(before)
    av, al, aadj = _flatten(after)
    if len(bv) + len(av) > MAX_INFER_VERTICES:
        raise CorrespondenceSizeError(
            f"{len(bv) + len(av)} vertices exceeds {MAX_INFER_VERTICES}; supply the correspondence"
        )
    nb = len(bv)
    # breadth-first order over the before vertices keeps neighbours adjacent in the search
    order: list[int] = []
    seen = set()
    for s in range(nb):
        if s in seen:
            continue
        seen.add(s)
        queue = [s]
        while queue:
            u = queue.pop(0)
            order.append(u)
            for w in sorted(badj[u]):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
    pos = {u: i for i, u in enumerate(order)}
    remaining = [0] * (nb + 1)
    for u in range(nb):
        for w in badj[u]:
            if u < w:
                remaining[max(pos[u], pos[w])] += 1
    for i in range(nb - 1, -1, -1):
        remaining[i] += remaining[i + 1]
    by_label: dict[str, list[int]] = {}
    for a, lab in enumerate(al):
        by_label.setdefault(lab, []).append(a)

    mapping: list[int | None] = [None] * nb
    used: set[int] = set()
    best = [-1, None]
    nodes = [0]

    def gain(u: int, a: int) -> int:
        g = 0
        for w, lab in badj[u].items():
            mw = mapping[w]
            if pos[w] < pos[u] and mw is not None and aadj[a].get(mw) == lab:
                g += 1
        return g

    def search(i: int, score: int) -> None:
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise CorrespondenceSizeError("correspondence search budget exhausted; supply the correspondence")
        if i == nb:
            if score > best[0]:
                best[0], best[1] = score, list(mapping)
            return
        if score + remaining[i] <= best[0]:
            return
        u = order[i]
        cands = [(gain(u, a), a) for a in by_label.get(bl[u], ()) if a not in used]
        cands.sort(key=lambda t: (-t[0], t[1]))
        for g, a in cands:
            if score + g + remaining[i + 1] <= best[0]:
                continue
            mapping[u] = a
            used.add(a)
            search(i + 1, score + g)
            used.discard(a)
            mapping[u] = None
        if score + remaining[i + 1] > best[0]:
            search(i + 1, score)

    search(0, 0)
    final = best[1]
    # extend with unmatched same-label pairs; never lowers the edge count
    taken = {a for a in final if a is not None}
    for u in range(nb):
        if final[u] is None:
            for a in by_label.get(bl[u], ()):
                if a not in taken:
                    final[u] = a
                    taken.add(a)
                    break
    return {bv[u]: av[a] for u, a in enumerate(final) if a is not None}


def diff_pair(obs: Observation) -> tuple[set[Vertex], set[Vertex]]:
    """Vertices changed by the transition, on the before and after side.

    A vertex is changed if it is unmapped, its label differs across the map,
    or its labelled neighbourhood differs; an edge to an unmapped neighbour
    always counts as a difference.
    """
    corr = obs.correspondence if obs.correspondence is not None else infer_correspondence(obs.before, obs.after)
    inv = {b: a for a, b in corr.items()}
    before, after = obs.before, obs.after

    def nbhd(s: State, x: Vertex, m: dict) -> set:
        gi, v = x
        return {(m.get((gi, w)), lab) for w, lab in s.graphs[gi].adj[v].items()}

    def nbhd_raw(s: State, x: Vertex) -> set:
        gi, v = x
        return {((gi, w), lab) for w, lab in s.graphs[gi].adj[v].items()}

    changed_b: set[Vertex] = set()
    changed_a: set[Vertex] = set()
    for gi, g in enumerate(before.graphs):
        for v in range(len(g)):
            x = (gi, v)
            y = corr.get(x)
            if y is None:
                changed_b.add(x)
                continue
            if g.labels[v] != after.graphs[y[0]].labels[y[1]]:
                changed_b.add(x)
                continue
            mapped = nbhd(before, x, corr)
            if any(k is None for k, _ in mapped) or mapped != nbhd_raw(after, y):
                changed_b.add(x)
    for gj, g in enumerate(after.graphs):
        for w in range(len(g)):
            y = (gj, w)
            x = inv.get(y)
            if x is None:
                changed_a.add(y)
                continue
            if g.labels[w] != before.graphs[x[0]].labels[x[1]]:
                changed_a.add(y)
                continue
            mapped = nbhd(after, y, inv)
            if any(k is None for k, _ in mapped) or mapped != nbhd_raw(before, x):
                changed_a.add(y)
    return changed_b, changed_a


def _hops(s: State, core: set[Vertex], radius: int) -> set[Vertex]:
    out = set(core)
    frontier = set(core)
    for _ in range(radius):
        nxt = set()
        for gi, v in frontier:
            for w in s.graphs[gi].adj[v]:
                if (gi, w) not in out:
                    nxt.add((gi, w))
        out |= nxt
        frontier = nxt
    return out


@dataclass
class Extraction:
    rule: RewriteRule
    application: Application


def extract_rule_with_application(obs: Observation, radius: int = 0) -> Extraction:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if obs.correspondence is None:
        obs = Observation(obs.before, obs.after, infer_correspondence(obs.before, obs.after))
    corr = obs.correspondence
    inv = {b: a for a, b in corr.items()}
    cb, ca = diff_pair(obs)
    if not cb and not ca:
        raise NoOpObservationError("observation does not change anything")
    if not cb:
        raise ConnectivityError("nothing on the before side changes; rule would have an empty lhs")
    lset = _hops(obs.before, cb, radius)
    rset = _hops(obs.after, ca, radius)
    while True:
        grow_r = {corr[x] for x in lset if x in corr} - rset
        rset |= grow_r
        grow_l = {inv[y] for y in rset if y in inv} - lset
        lset |= grow_l
        if not grow_r and not grow_l:
            break

    members = {gi for gi, _ in lset}
    if len(members) != 1:
        raise ConnectivityError(f"changed core spans {len(members)} state members")
    (gi,) = members
    lhs, lids = obs.before.graphs[gi].induced_subgraph(v for _, v in lset)
    if not is_connected(lhs):
        raise ConnectivityError(f"changed core is disconnected at radius {radius}; raise the radius")

    ritems = sorted(rset)
    rindex = {y: i for i, y in enumerate(ritems)}
    rlabels = [obs.after.graphs[gj].labels[w] for gj, w in ritems]
    redges = []
    for y in ritems:
        gj, w = y
        for w2, lab in obs.after.graphs[gj].adj[w].items():
            z = (gj, w2)
            if z in rindex and rindex[y] < rindex[z]:
                redges.append((rindex[y], rindex[z], lab))
    rhs = LabeledGraph(rlabels, redges)
    lpos = {v: i for i, v in enumerate(lids)}
    interface = {lpos[v]: rindex[corr[(gi, v)]] for v in lids if (gi, v) in corr and corr[(gi, v)] in rindex}

    # same renumbering RewriteRule.build applies
    order = _bfs_order(lhs)
    ren = {old: new for new, old in enumerate(order)}
    rule = RewriteRule.build(lhs, rhs, interface)
    emb = [0] * len(lids)
    for i, v in enumerate(lids):
        emb[ren[i]] = v
    app = Application(rule.rule_id, gi, tuple(emb))
    succ = apply_rule_unchecked(rule, obs.before, app)
    if succ.key() != obs.after.key():
        raise InductionError("extracted rule does not re-derive the observation")
    return Extraction(rule, app)


def extract_rule(obs: Observation, radius: int = 0) -> RewriteRule:
    """Rule covering the changed vertices plus ``radius`` hops of context."""
    return extract_rule_with_application(obs, radius).rule


@dataclass
class ActionLibrary:
    rules: list[RewriteRule]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {}
        for i, r in enumerate(self.rules):
            if r.rule_id in self.index:
                raise InductionError(f"duplicate rule id {r.rule_id}")
            if r.support < 1:
                raise InductionError(f"rule {r.rule_id} has support {r.support}")
            self.index[r.rule_id] = i

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, i: int) -> RewriteRule:
        return self.rules[i]

    def by_id(self, rule_id: str) -> RewriteRule:
        return self.rules[self.index[rule_id]]

    @property
    def hash_id(self) -> str:
        h = hashlib.sha1()
        for r in self.rules:
            h.update(r.rule_id.encode())
            h.update(b"\n")
        return h.hexdigest()[:16]

    def without(self, rule_ids) -> "ActionLibrary":
        drop = set(rule_ids)
        return ActionLibrary([r for r in self.rules if r.rule_id not in drop])


@dataclass
class LibraryBuild:
    library: ActionLibrary
    labels: list[int | None]  # rule ordinal per observation
    failures: list[tuple[int, str]]


def build_library(observations: list[Observation], radius: int = 0, min_support: int = 1) -> LibraryBuild:
    """Extract one rule per observation and merge them by rule id."""
    if not observations:
        raise InductionError("no observations")
    rules: dict[str, RewriteRule] = {}
    support: dict[str, int] = {}
    per_obs: list[str | None] = []
    failures: list[tuple[int, str]] = []
    for i, obs in enumerate(observations):
        try:
            rule = extract_rule(obs, radius)
        except InductionError as exc:
            failures.append((i, str(exc)))
            per_obs.append(None)
            continue
        rules.setdefault(rule.rule_id, rule)
        support[rule.rule_id] = support.get(rule.rule_id, 0) + 1
        per_obs.append(rule.rule_id)
    if failures:
        log.info("%d of %d observations failed extraction", len(failures), len(observations))
    kept = [rules[rid].with_support(support[rid]) for rid in rules if support[rid] >= min_support]
    if not kept:
        raise EmptyLibraryError("no rule could be induced from the observations")
    library = ActionLibrary(kept)
    labels = [library.index.get(rid) if rid is not None else None for rid in per_obs]
    return LibraryBuild(library, labels, failures)
