"""Synthetic compositional worlds with a hidden rule set and a solvability oracle.

A world has building blocks and hidden deconstruction rules. Targets are
assembled from blocks by running hidden rules backwards (joining two graphs
across a new edge); every assembly step is recorded as a deconstruction
observation with an exact vertex correspondence.
"""

from __future__ import annotations

import itertools
import random
import string
from dataclasses import asdict, dataclass, field

from .graphs import LabeledGraph, State, canonical_form, component_vertex_sets, iter_embeddings
from .induction import Observation
from .rewrite import Application, RewriteRule, apply_rule_unchecked, enumerate_applications


class GenerationError(ValueError):
    pass


class InconclusiveError(RuntimeError):
    """The oracle hit its node cap before reaching a verdict."""


@dataclass
class WorldParams:
    n_vertex_labels: int = 6
    n_edge_labels: int = 2
    n_rules: int = 12
    n_blocks: int = 8
    block_min: int = 3
    block_max: int = 6
    core_sizes: tuple[int, ...] = (2, 3)
    ring_prob: float = 0.3
    label_skew: float = 0.0  # label i drawn with weight 1/(i+1)**skew
    p_convergent: float = 0.0  # chance an assembly step joins two composites
    max_attempts: int = 2000


@dataclass
class WorldSpec:
    params: WorldParams
    vertex_alphabet: list[str]
    edge_alphabet: list[str]
    rules: list[RewriteRule]
    blocks: list[LabeledGraph]
    seed: int

    def meta(self) -> dict:
        d = asdict(self.params)
        d["core_sizes"] = list(self.params.core_sizes)
        d["seed"] = self.seed
        return d


def vertex_alphabet(n: int) -> list[str]:
    letters = string.ascii_uppercase
    return [letters[i] if i < len(letters) else f"V{i}" for i in range(n)]


def edge_alphabet(n: int) -> list[str]:
    return [str(i + 1) for i in range(n)]


class _Alphabet:
    """Vertex labels drawn with Zipf-like weights (uniform when ``skew`` is 0)."""

    def __init__(self, labels: list[str], skew: float):
        self.labels = labels
        self.cum = list(itertools.accumulate(1.0 / (i + 1) ** skew for i in range(len(labels))))

    def pick(self, rng: random.Random, exclude: str | None = None) -> str:
        while True:
            lab = rng.choices(self.labels, cum_weights=self.cum)[0]
            if lab != exclude:
                return lab


def _random_block(rng: random.Random, size: int, vl: _Alphabet, el: list[str], ring_prob: float) -> LabeledGraph:
    labels = [vl.pick(rng) for _ in range(size)]
    edges = {}
    for v in range(1, size):
        u = rng.randrange(v)
        edges[(u, v)] = rng.choice(el)
    if size >= 3 and rng.random() < ring_prob:
        missing = [(u, v) for u in range(size) for v in range(u + 1, size) if (u, v) not in edges]
        if missing:
            edges[rng.choice(missing)] = rng.choice(el)
    return LabeledGraph(labels, [(u, v, lab) for (u, v), lab in sorted(edges.items())])


def gen_world(params: WorldParams | None = None, seed: int = 0) -> WorldSpec:
    """Random blocks plus hidden bond-breaking rules anchored on block vertices."""
    p = params or WorldParams()
    if p.n_vertex_labels < 2 or p.n_edge_labels < 2:
        raise GenerationError("alphabet sizes must be >= 2")
    if p.n_rules < 1 or p.n_blocks < 1:
        raise GenerationError("need at least one rule and one block")
    if p.block_min < 1 or p.block_max < p.block_min:
        raise GenerationError("invalid block size range")
    if not p.core_sizes or any(c not in (2, 3) for c in p.core_sizes):
        raise GenerationError("core sizes must be 2 or 3")
    if p.core_sizes == (3,) and p.block_max < 2:
        raise GenerationError("three-vertex cores need blocks with an edge")
    if p.label_skew < 0 or not 0.0 <= p.p_convergent <= 1.0:
        raise GenerationError("label_skew must be >= 0 and p_convergent in [0, 1]")
    rng = random.Random(seed)
    vl = vertex_alphabet(p.n_vertex_labels)
    el = edge_alphabet(p.n_edge_labels)
    alpha = _Alphabet(vl, p.label_skew)

    blocks: list[LabeledGraph] = []
    codes: set[bytes] = set()
    attempts = 0
    while len(blocks) < p.n_blocks:
        attempts += 1
        if attempts > p.max_attempts:
            raise GenerationError(f"could only generate {len(blocks)} distinct blocks")
        b = _random_block(rng, rng.randint(p.block_min, p.block_max), alpha, el, p.ring_prob)
        if canonical_form(b) not in codes:
            codes.add(canonical_form(b))
            blocks.append(b)

    rules: list[RewriteRule] = []
    ids: set[str] = set()
    attempts = 0
    while len(rules) < p.n_rules:
        attempts += 1
        if attempts > p.max_attempts:
            raise GenerationError(f"could only generate {len(rules)} distinct rules")
        core = rng.choice(p.core_sizes)
        rule = _random_rule(rng, core, blocks, alpha, el)
        if rule is not None and rule.rule_id not in ids:
            ids.add(rule.rule_id)
            rules.append(rule)
    return WorldSpec(p, vl, el, rules, blocks, seed)


def _random_rule(rng, core, blocks, vl: _Alphabet, el) -> RewriteRule | None:
    x_block = rng.choice(blocks)
    y_block = rng.choice(blocks)
    if core == 2:
        xp = rng.choice(x_block.labels)
        yp = rng.choice(y_block.labels)
        x, y = vl.pick(rng), vl.pick(rng)
        lhs = LabeledGraph([x, y], [(0, 1, rng.choice(el))])
        rhs = LabeledGraph([xp, yp])
        return RewriteRule.build(lhs, rhs, {0: 0, 1: 1})
    edges = x_block.edges
    if not edges:
        return None
    u, v, e1 = rng.choice(edges)
    if rng.random() < 0.5:
        u, v = v, u
    xp, y = x_block.labels[u], x_block.labels[v]
    zp = rng.choice(y_block.labels)
    x = vl.pick(rng, exclude=xp)
    z = vl.pick(rng)
    lhs = LabeledGraph([x, y, z], [(0, 1, e1), (1, 2, rng.choice(el))])
    rhs = LabeledGraph([xp, y, zp], [(0, 1, e1)])
    return RewriteRule.build(lhs, rhs, {0: 0, 1: 1, 2: 2})


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


@dataclass
class Trajectories:
    observations: list[Observation]
    targets: list[State]
    depths: list[int]
    rule_of_observation: list[int] = field(default_factory=list)  # hidden rule index


def compose(rule: RewriteRule, left: LabeledGraph, right: LabeledGraph, r_emb: dict[int, int]):
    """Run ``rule`` backwards on the disjoint union ``left + right``.

    ``r_emb`` maps rhs vertices into the union (``right`` ids offset by
    ``len(left)``). Returns the joined graph and the image of each lhs vertex,
    or None if a new edge would duplicate an existing one.
    """
    if rule.deleted or len(rule.interface) != len(rule.rhs):
        raise GenerationError("composition needs rules whose vertices are all preserved")
    n = len(left)
    labels = list(left.labels) + list(right.labels)
    adj = [dict(a) for a in left.adj] + [{w + n: lab for w, lab in a.items()} for a in right.adj]
    inv = {r: l for l, r in rule.interface.items()}
    for u, v, _ in rule.rhs.edges:
        a, b = r_emb[u], r_emb[v]
        adj[a].pop(b, None)
        adj[b].pop(a, None)
    l_img = {inv[r]: h for r, h in r_emb.items()}
    for l, h in l_img.items():
        labels[h] = rule.lhs.labels[l]
    for u, v, lab in rule.lhs.edges:
        a, b = l_img[u], l_img[v]
        if b in adj[a]:
            return None
        adj[a][b] = lab
        adj[b][a] = lab
    return LabeledGraph(labels, [(u, w, lab) for u, a in enumerate(adj) for w, lab in a.items() if u < w]), l_img


def _component_patterns(rhs: LabeledGraph):
    comps = []
    for vs in component_vertex_sets(rhs):
        sub, ids = rhs.induced_subgraph(vs)
        comps.append((sub, ids))
    return comps


def _join(rng, world: WorldSpec, left: LabeledGraph, right: LabeledGraph, tries: int = 50):
    """Join ``left`` and ``right`` by running a random hidden rule backwards.

    Returns ``(rule index, joined graph)``; in the joined graph ``left`` keeps
    its ids and ``right`` is offset by ``len(left)``.
    """
    for _ in range(tries):
        ri = rng.randrange(len(world.rules))
        rule = world.rules[ri]
        comps = _component_patterns(rule.rhs)
        if len(comps) != 2:
            continue
        if rng.random() < 0.5:
            comps = comps[::-1]
        (pa, ida), (pb, idb) = comps
        emb_a = list(iter_embeddings(pa, left))
        emb_b = list(iter_embeddings(pb, right))
        if not emb_a or not emb_b:
            continue
        ea = rng.choice(emb_a)
        eb = rng.choice(emb_b)
        r_emb = {ida[i]: h for i, h in enumerate(ea)}
        r_emb.update({idb[i]: h + len(left) for i, h in enumerate(eb)})
        joined = compose(rule, left, right, r_emb)
        if joined is None:
            continue
        graph, l_img = joined
        emb = tuple(l_img[i] for i in range(len(rule.lhs)))
        # the hidden rule must undo the step exactly
        undone = apply_rule_unchecked(rule, State([graph]), Application(rule.rule_id, 0, emb))
        if undone.key() != State([left, right]).key():
            continue
        return ri, graph
    return None


def _assemble(rng, world: WorldSpec, depth: int):
    """Build an object with exactly ``depth`` joins; returns ``(graph, steps)``.

    ``steps`` lists ``(rule index, joined, left, right)`` in construction order.
    With probability ``p_convergent`` a join combines two composites.
    """
    if depth == 0:
        return rng.choice(world.blocks), []
    d_right = 0
    if depth >= 2 and rng.random() < world.params.p_convergent:
        d_right = rng.randint(1, depth - 1)
    left = _assemble(rng, world, depth - 1 - d_right)
    if left is None:
        return None
    right = _assemble(rng, world, d_right)
    if right is None:
        return None
    joined = _join(rng, world, left[0], right[0])
    if joined is None:
        return None
    ri, graph = joined
    return graph, left[1] + right[1] + [(ri, graph, left[0], right[0])]


def _observations(steps) -> list[tuple[int, Observation]]:
    """One observation per join, undone in reverse construction order.

    Each records the joined object splitting into its two parts, with the
    exact vertex correspondence.
    """
    out = []
    for ri, joined, left, right in reversed(steps):
        n = len(left)
        corr = {(0, v): (0, v) if v < n else (1, v - n) for v in range(len(joined))}
        out.append((ri, Observation(State([joined]), State([left, right]), corr)))
    return out


def _corrupt(rng, obs: Observation, alphabet: list[str]) -> Observation:
    graphs = list(obs.after.graphs)
    gi = rng.randrange(len(graphs))
    g = graphs[gi]
    v = rng.randrange(len(g))
    new = rng.choice([lab for lab in alphabet if lab != g.labels[v]])
    labels = list(g.labels)
    labels[v] = new
    graphs[gi] = LabeledGraph(labels, g.edges)
    return Observation(obs.before, State(graphs), obs.correspondence)


def gen_trajectories(
    world: WorldSpec,
    n_targets: int,
    depth: int | tuple[int, int] = (2, 5),
    noise_rate: float = 0.0,
    seed: int = 0,
) -> Trajectories:
    """Assemble ``n_targets`` objects and record every assembly step.

    Every target yields ``depth`` observations, one per join, listed in
    deconstruction order.
    """
    lo, hi = (depth, depth) if isinstance(depth, int) else depth
    if lo < 1 or hi < lo:
        raise GenerationError("depth must be >= 1")
    if not 0.0 <= noise_rate <= 1.0:
        raise GenerationError("noise rate must be in [0, 1]")
    rng = random.Random(seed)
    out = Trajectories([], [], [], [])
    for _ in range(n_targets):
        d = rng.randint(lo, hi)
        for _attempt in range(100):
            built = _assemble(rng, world, d)
            if built is not None:
                break
        else:
            raise GenerationError(f"could not assemble a depth-{d} target; rules do not fit the blocks")
        target, steps = built
        for ri, obs in _observations(steps):
            if noise_rate > 0 and rng.random() < noise_rate:
                obs = _corrupt(rng, obs, world.vertex_alphabet)
            out.observations.append(obs)
            out.rule_of_observation.append(ri)
        out.targets.append(State([target]))
        out.depths.append(d)
    return out


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------


def oracle_solvable(
    target: State,
    rules: list[RewriteRule],
    blocks: list[LabeledGraph],
    max_depth: int,
    node_cap: int = 1_000_000,
) -> tuple[bool, int | None]:
    """Exhaustive breadth-first search over all rule applications.

    Returns ``(True, depth)`` with the optimal depth, or ``(False, None)`` if no
    state within ``max_depth`` steps is solved. Raises
    :class:`InconclusiveError` when more than ``node_cap`` states are generated.
    """
    block_codes = {canonical_form(b) for b in blocks}

    def solved(s: State) -> bool:
        return all(canonical_form(g) in block_codes for g in s.graphs)

    if solved(target):
        return True, 0
    seen = {target.key()}
    frontier = [target]
    for depth in range(1, max_depth + 1):
        nxt = []
        for s in frontier:
            for rule in rules:
                for _, succ in enumerate_applications(rule, s):
                    k = succ.key()
                    if k in seen:
                        continue
                    if solved(succ):
                        return True, depth
                    seen.add(k)
                    if len(seen) > node_cap:
                        raise InconclusiveError(f"more than {node_cap} states explored")
                    nxt.append(succ)
        if not nxt:
            break
        frontier = nxt
    return False, None
