"""Deconstruction planning with an induced world program.

Five agents share one successor generator (:class:`Expander`): PUCT and UCT
tree search with random rollouts, Monte Carlo search (rollouts from the
root only), and best-first search ordered either by accumulated
``-log(prior)`` or by the number of vertices not yet matched to a block.
"""

from __future__ import annotations

import heapq
import math
import random
import time
from dataclasses import dataclass, field
from enum import Enum

from .graphs import LabeledGraph, State, canonical_form
from .induction import ActionLibrary
from .models import PolicyModel, TransitionModel, policy_topk
from .rewrite import Application, apply_rule, enumerate_applications


class Algo(str, Enum):
    PUCT = "PUCT"
    UCT = "UCT"
    MCS = "MCS"
    BFS_NEURAL = "BFS_NEURAL"
    BFS_HEURISTIC = "BFS_HEURISTIC"

    @classmethod
    def parse(cls, name: str) -> "Algo":
        key = name.strip().upper().replace("-", "_")
        aliases = {"PUCT_MCTS": "PUCT", "UCT_MCTS": "UCT", "BFS": "BFS_NEURAL"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown agent {name!r}; choose from {', '.join(a.value for a in cls)}") from None


ALL_AGENTS = [Algo.PUCT, Algo.MCS, Algo.UCT, Algo.BFS_NEURAL, Algo.BFS_HEURISTIC]


@dataclass
class Budget:
    max_iterations: int = 10_000
    wall_clock: float | None = None
    restarts: int = 1

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("budget must be positive")
        if self.wall_clock is not None and self.wall_clock <= 0:
            raise ValueError("wall clock cap must be positive")


@dataclass
class Problem:
    target: State
    blocks: list[LabeledGraph]
    budget: Budget = field(default_factory=Budget)
    d_max: int = 15

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one building block")


@dataclass
class PlanParams:
    c_puct: float = 3.0
    c_uct: float = 1.414
    mass: float = 0.99
    k_max: int = 50
    tau: float = 0.5
    per_rule_cap: int = 8


@dataclass
class WorldProgram:
    library: ActionLibrary
    policy: PolicyModel
    transition: TransitionModel | None = None


@dataclass
class PlanStep:
    rule_id: str
    application: Application
    successor: State


@dataclass
class PlanResult:
    solved: bool
    plan: list[PlanStep]
    iterations: int
    wall_time: float
    nodes_expanded: int
    algo: str = ""
    restarts_used: int = 0
    exhausted: bool = False  # every reachable state within d_max was expanded


@dataclass
class Child:
    rule: int
    application: Application
    successor: State
    prior: float


def block_codes(blocks) -> frozenset[bytes]:
    return frozenset(canonical_form(b) for b in blocks)


def is_solved(state: State, blocks) -> bool:
    """True iff every member is isomorphic to a block (vacuously for an empty state)."""
    codes = blocks if isinstance(blocks, frozenset) else block_codes(blocks)
    return all(canonical_form(g) in codes for g in state.graphs)


def uncovered_vertices(state: State, codes: frozenset[bytes]) -> int:
    return sum(len(g) for g in state.graphs if canonical_form(g) not in codes)


class Expander:
    """Cached successor generation: top-k rules, capped applications, transition filter."""

    def __init__(self, world: WorldProgram, params: PlanParams | None = None):
        self.world = world
        self.params = params or PlanParams()
        self._topk: dict[bytes, list[tuple[int, float]]] = {}
        self._rule_children: dict[tuple[bytes, int], list[tuple[Application, State]]] = {}
        self._children: dict[bytes, list[Child]] = {}
        self.expansions = 0

    def topk(self, state: State) -> list[tuple[int, float]]:
        k = state.key()
        out = self._topk.get(k)
        if out is None:
            out = self._topk[k] = policy_topk(self.world.policy, state, self.params.mass, self.params.k_max)
        return out

    def rule_children(self, state: State, r: int) -> list[tuple[Application, State]]:
        """Applications of rule ``r`` that change the state and pass the filter."""
        key = state.key()
        out = self._rule_children.get((key, r))
        if out is not None:
            return out
        apps = [
            (a, s)
            for a, s in enumerate_applications(self.world.library[r], state, self.params.per_rule_cap)
            if s.key() != key
        ]
        t = self.world.transition
        if t is not None and apps:
            scores = t.score_many(state, [s for _, s in apps])
            apps = [pair for pair, sc in zip(apps, scores) if sc >= self.params.tau]
        self._rule_children[(key, r)] = apps
        return apps

    def expand(self, state: State) -> list[Child]:
        self.expansions += 1
        key = state.key()
        out = self._children.get(key)
        if out is not None:
            return out
        out = []
        for r, p in self.topk(state):
            apps = self.rule_children(state, r)
            for a, s in apps:
                out.append(Child(r, a, s, p / len(apps)))
        self._children[key] = out
        return out


def expand(state: State, world: WorldProgram, params: PlanParams | None = None) -> list[Child]:
    return Expander(world, params).expand(state)


# --------------------------------------------------------------------------
# search tree
# --------------------------------------------------------------------------


class Node:
    __slots__ = ("key", "state", "depth", "N", "W", "edges", "expanded", "terminal", "solved", "exhausted")

    def __init__(self, state: State, depth: int, solved: bool):
        self.key = state.key()
        self.state = state
        self.depth = depth
        self.N = 0
        self.W = 0.0
        self.edges: list[tuple[Node, Child]] = []
        self.expanded = False
        self.terminal = solved
        self.solved = solved
        self.exhausted = False

    @property
    def Q(self) -> float:
        return self.W / self.N if self.N else 0.0


class _Search:
    def __init__(self, problem: Problem, world: WorldProgram, params: PlanParams, expander: Expander,
                 rng: random.Random, deadline: float | None):
        self.problem = problem
        self.world = world
        self.params = params
        self.expander = expander
        self.rng = rng
        self.deadline = deadline
        self.codes = block_codes(problem.blocks)
        self.iterations = 0
        self.exhausted = False
        self.root: Node | None = None

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.perf_counter() >= self.deadline

    def solved(self, s: State) -> bool:
        return all(canonical_form(g) in self.codes for g in s.graphs)

    def rollout(self, state: State, depth: int) -> list[tuple[int, Application, State]] | None:
        """Sample rules from the top-k prior and applications uniformly; return the steps if solved."""
        steps = []
        ex = self.expander
        while depth < self.problem.d_max:
            options = [(r, p) for r, p in ex.topk(state)]
            chosen = None
            while options:
                total = sum(p for _, p in options)
                x = self.rng.random() * total
                i = 0
                for i, (_, p) in enumerate(options):
                    x -= p
                    if x < 0:
                        break
                r = options[i][0]
                apps = ex.rule_children(state, r)
                if apps:
                    a, s = apps[self.rng.randrange(len(apps))]
                    chosen = (r, a, s)
                    break
                options.pop(i)
            if chosen is None:
                return None
            steps.append(chosen)
            state = chosen[2]
            depth += 1
            if self.solved(state):
                return steps
        return None


def _replay(problem: Problem, library: ActionLibrary, moves: list[tuple[int, Application, State, State]]) -> list[PlanStep]:
    """Turn ``(rule, app, expected successor, state the app refers to)`` moves into a replayable plan."""
    cur = problem.target
    plan = []
    for r, app, succ, ref_state in moves:
        rule = library[r]
        if cur is ref_state:
            nxt = apply_rule(rule, cur, app)
        else:
            # transposition: the application was recorded against an isomorphic copy
            target = succ.key()
            for app2, s2 in enumerate_applications(rule, cur):
                if s2.key() == target:
                    app, nxt = app2, s2
                    break
            else:
                raise RuntimeError("plan step could not be replayed")
        plan.append(PlanStep(rule.rule_id, app, nxt))
        cur = nxt
    return plan


def _run_mcts(search: _Search, puct: bool, max_iter: int):
    p = search.params
    root = search.root = Node(search.problem.target, 0, False)
    table = {root.key: root}
    for _ in range(max_iter):
        if root.exhausted or search.out_of_time():
            break
        node = root
        path = [root]
        moves = []  # (rule, app, successor, parent state)
        on_path = {root.key}
        while node.expanded and not node.terminal:
            best, best_score = None, -math.inf
            sqrt_n = math.sqrt(node.N)
            log_n = math.log(node.N) if node.N > 0 else 0.0
            for child, edge in node.edges:
                if child.exhausted or child.key in on_path:
                    continue
                if puct:
                    score = child.Q + p.c_puct * edge.prior * sqrt_n / (1 + child.N)
                elif child.N == 0:
                    score = math.inf
                else:
                    score = child.Q + p.c_uct * math.sqrt(log_n / child.N)
                if score > best_score:
                    best, best_score = (child, edge), score
            if best is None:
                break
            child, edge = best
            moves.append((edge.rule, edge.application, edge.successor, node.state))
            node = child
            path.append(node)
            on_path.add(node.key)

        value = 0.0
        solution = None
        if node.solved:
            value, solution = 1.0, moves
        elif not node.expanded and not node.terminal:
            if node.depth >= search.problem.d_max:
                node.terminal = node.exhausted = True
            else:
                children = search.expander.expand(node.state)
                node.expanded = True
                for c in children:
                    child = table.get(c.successor.key())
                    if child is None:
                        child = Node(c.successor, node.depth + 1, search.solved(c.successor))
                        table[child.key] = child
                    node.edges.append((child, c))
                if not node.edges:
                    node.terminal = node.exhausted = True
                else:
                    for child, c in node.edges:
                        if child.solved:
                            value = 1.0
                            solution = moves + [(c.rule, c.application, c.successor, node.state)]
                            path.append(child)
                            break
                    else:
                        tail = search.rollout(node.state, node.depth)
                        if tail is not None:
                            value = 1.0
                            prev = node.state
                            solution = list(moves)
                            for r, a, s in tail:
                                solution.append((r, a, s, prev))
                                prev = s
        for n in path:
            n.N += 1
            n.W += value
        for n in reversed(path):
            if n.expanded and not n.exhausted and all(c.exhausted for c, _ in n.edges):
                n.exhausted = True
        search.iterations += 1
        if solution is not None:
            return solution
    search.exhausted = root.exhausted
    return None


def _run_mcs(search: _Search, max_iter: int):
    root = search.problem.target
    for _ in range(max_iter):
        if search.out_of_time():
            break
        search.iterations += 1
        tail = search.rollout(root, 0)
        if tail is not None:
            moves = []
            prev = root
            for r, a, s in tail:
                moves.append((r, a, s, prev))
                prev = s
            return moves
    return None


def _run_bfs(search: _Search, neural: bool, max_iter: int):
    root = search.problem.target
    # node: (state, depth, cost, parent index, move)
    nodes = [(root, 0, 0.0, -1, None)]
    seen = {root.key()}
    heap = [(0.0, search.rng.random(), 0)]
    while heap and search.iterations < max_iter:
        if search.out_of_time():
            break
        _, _, idx = heapq.heappop(heap)
        state, depth, cost, _, _ = nodes[idx]
        if depth >= search.problem.d_max:
            continue
        search.iterations += 1
        for c in search.expander.expand(state):
            k = c.successor.key()
            if k in seen:
                continue
            seen.add(k)
            g = cost - math.log(max(c.prior, 1e-300))
            nodes.append((c.successor, depth + 1, g, idx, (c.rule, c.application, c.successor, state)))
            if search.solved(c.successor):
                moves = []
                j = len(nodes) - 1
                while nodes[j][3] >= 0:
                    moves.append(nodes[j][4])
                    j = nodes[j][3]
                return moves[::-1]
            prio = g if neural else float(uncovered_vertices(c.successor, search.codes))
            heapq.heappush(heap, (prio, search.rng.random(), len(nodes) - 1))
    search.exhausted = not heap
    return None


def plan(
    problem: Problem,
    algo: Algo | str,
    world: WorldProgram,
    params: PlanParams | None = None,
    seed: int = 0,
    expander: Expander | None = None,
) -> PlanResult:
    """Search for a deconstruction of ``problem.target`` into building blocks."""
    algo = Algo.parse(algo) if isinstance(algo, str) else algo
    params = params or PlanParams()
    expander = expander or Expander(world, params)
    start = time.perf_counter()
    budget = problem.budget
    codes = block_codes(problem.blocks)
    if is_solved(problem.target, codes):
        return PlanResult(True, [], 0, time.perf_counter() - start, 0, algo.value, 0)
    total_iter = 0
    exp0 = expander.expansions
    moves = None
    restarts_used = 0
    for restart in range(budget.restarts):
        restarts_used = restart + 1
        rng = random.Random(seed * 1_000_003 + restart)
        deadline = None if budget.wall_clock is None else time.perf_counter() + budget.wall_clock
        search = _Search(problem, world, params, expander, rng, deadline)
        if algo in (Algo.PUCT, Algo.UCT):
            moves = _run_mcts(search, algo is Algo.PUCT, budget.max_iterations)
        elif algo is Algo.MCS:
            moves = _run_mcs(search, budget.max_iterations)
        else:
            moves = _run_bfs(search, algo is Algo.BFS_NEURAL, budget.max_iterations)
        total_iter += search.iterations
        # an exhausted space stays exhausted under a fresh seed
        if moves is not None or search.exhausted:
            break
    steps = _replay(problem, world.library, moves) if moves is not None else []
    return PlanResult(
        moves is not None,
        steps,
        total_iter,
        time.perf_counter() - start,
        expander.expansions - exp0,
        algo.value,
        restarts_used,
        moves is None and search.exhausted,
    )


def replay_plan(target: State, steps: list[PlanStep], library: ActionLibrary) -> State:
    """Apply the plan's recorded applications to ``target`` in order."""
    cur = target
    for step in steps:
        cur = apply_rule(library.by_id(step.rule_id), cur, step.application)
    return cur
