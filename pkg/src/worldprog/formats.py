"""Line-oriented text formats for graphs, states, rules, observations and plans.

Graph record::

    v <id> <label>        (ids 0..n-1, in order)
    e <u> <v> <label>

Graphs inside one state are separated by a ``+`` line; states are separated
by ``--``. Rule records start with ``RULE <rule_id> <support>`` followed by
``L:`` and ``R:`` graph blocks and a ``K: l=r ...`` line. Observation
records hold a before state, ``--``, an after state, optional
``M: (gi,v)=(gj,w) ...`` lines and end with ``==``. Blank lines and lines
starting with ``#`` are ignored. Files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

from .graphs import GraphError, LabeledGraph, State
from .induction import ActionLibrary, Observation
from .rewrite import RewriteRule, RuleError


class FormatError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _lines(path) -> list[tuple[int, str]]:
    text = Path(path).read_text(encoding="utf-8")
    out = []
    for i, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append((i, line))
    return out


# --------------------------------------------------------------------------
# graphs and states
# --------------------------------------------------------------------------


def format_graph(g: LabeledGraph) -> str:
    lines = [f"v {i} {lab}" for i, lab in enumerate(g.labels)]
    lines += [f"e {u} {v} {lab}" for u, v, lab in g.edges]
    return "\n".join(lines)


def format_state(s: State) -> str:
    return "\n+\n".join(format_graph(g) for g in s.graphs)


def _parse_graph(path, rows: list[tuple[int, str]]) -> LabeledGraph:
    labels: list[str] = []
    edges = []
    for ln, line in rows:
        parts = line.split()
        if parts[0] == "v":
            if len(parts) != 3:
                raise FormatError(path, ln, "expected 'v <id> <label>'")
            try:
                vid = int(parts[1])
            except ValueError:
                raise FormatError(path, ln, f"bad vertex id {parts[1]!r}") from None
            if vid != len(labels):
                raise FormatError(path, ln, f"vertex ids must be dense and ordered; expected {len(labels)}")
            if edges:
                raise FormatError(path, ln, "vertex line after edge lines")
            labels.append(parts[2])
        elif parts[0] == "e":
            if len(parts) != 4:
                raise FormatError(path, ln, "expected 'e <u> <v> <label>'")
            try:
                edges.append((int(parts[1]), int(parts[2]), parts[3], ln))
            except ValueError:
                raise FormatError(path, ln, "bad edge endpoint") from None
        else:
            raise FormatError(path, ln, f"unexpected line {line!r}")
    try:
        return LabeledGraph(labels, [e[:3] for e in edges])
    except GraphError as exc:
        ln = rows[-1][0] if rows else 0
        raise FormatError(path, ln, str(exc)) from None


def _parse_state(path, rows: list[tuple[int, str]]) -> State:
    graphs = []
    chunk: list[tuple[int, str]] = []
    for ln, line in rows:
        if line == "+":
            graphs.append(_parse_graph(path, chunk))
            chunk = []
        else:
            chunk.append((ln, line))
    if chunk:
        graphs.append(_parse_graph(path, chunk))
    try:
        return State(graphs)
    except GraphError as exc:
        raise FormatError(path, rows[0][0] if rows else 0, str(exc)) from None


def _split(rows, sep: str) -> list[list[tuple[int, str]]]:
    out, cur = [], []
    for ln, line in rows:
        if line == sep:
            out.append(cur)
            cur = []
        else:
            cur.append((ln, line))
    if cur:
        out.append(cur)
    return out


def read_states(path) -> list[State]:
    return [_parse_state(path, block) for block in _split(_lines(path), "--") if block]


def write_states(path, states: Iterable[State]) -> None:
    Path(path).write_text("\n--\n".join(format_state(s) for s in states) + "\n", encoding="utf-8")


def read_graphs(path) -> list[LabeledGraph]:
    """One graph per record; a record with several members is an error."""
    out = []
    for block in _split(_lines(path), "--"):
        if not block:
            continue
        s = _parse_state(path, block)
        if len(s) != 1:
            raise FormatError(path, block[0][0], "expected a single graph per record")
        out.append(s[0])
    return out


def write_graphs(path, graphs: Iterable[LabeledGraph]) -> None:
    write_states(path, (State([g]) for g in graphs))


# --------------------------------------------------------------------------
# rules
# --------------------------------------------------------------------------


def format_rule(rule: RewriteRule) -> str:
    k = " ".join(f"{l}={r}" for l, r in sorted(rule.interface.items()))
    return "\n".join([
        f"RULE {rule.rule_id} {rule.support}",
        "L:",
        format_graph(rule.lhs),
        "R:",
        format_graph(rule.rhs),
        f"K: {k}".rstrip(),
    ])


def write_rules(path, rules: Iterable[RewriteRule]) -> None:
    Path(path).write_text("\n".join(format_rule(r) for r in rules) + "\n", encoding="utf-8")


def read_rules(path) -> list[RewriteRule]:
    rows = _lines(path)
    rules = []
    i = 0
    while i < len(rows):
        ln, line = rows[i]
        parts = line.split()
        if parts[0] != "RULE" or len(parts) != 3:
            raise FormatError(path, ln, "expected 'RULE <rule_id> <support>'")
        rule_id = parts[1]
        try:
            support = int(parts[2])
        except ValueError:
            raise FormatError(path, ln, f"bad support {parts[2]!r}") from None
        i += 1
        if i >= len(rows) or rows[i][1] != "L:":
            raise FormatError(path, rows[i][0] if i < len(rows) else ln, "expected 'L:'")
        i += 1
        lrows = []
        while i < len(rows) and rows[i][1] != "R:":
            lrows.append(rows[i])
            i += 1
        if i >= len(rows):
            raise FormatError(path, ln, "missing 'R:' block")
        i += 1
        rrows = []
        while i < len(rows) and not rows[i][1].startswith("K:"):
            rrows.append(rows[i])
            i += 1
        if i >= len(rows):
            raise FormatError(path, ln, "missing 'K:' line")
        kln, kline = rows[i]
        i += 1
        interface = {}
        for tok in kline[2:].split():
            m = re.fullmatch(r"(\d+)=(\d+)", tok)
            if not m:
                raise FormatError(path, kln, f"bad interface pair {tok!r}")
            interface[int(m.group(1))] = int(m.group(2))
        lhs, rhs = _parse_graph(path, lrows), _parse_graph(path, rrows)
        try:
            rule = RewriteRule(lhs, rhs, interface, support)
        except (RuleError, GraphError) as exc:
            raise FormatError(path, ln, str(exc)) from None
        if rule.rule_id != rule_id:
            raise FormatError(path, ln, f"rule id {rule_id} does not match its content ({rule.rule_id})")
        rules.append(rule)
    return rules


def read_library(path) -> ActionLibrary:
    try:
        return ActionLibrary(read_rules(path))
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(path, 0, str(exc)) from None


# --------------------------------------------------------------------------
# observations
# --------------------------------------------------------------------------

_PAIR = re.compile(r"\((\d+),(\d+)\)=\((\d+),(\d+)\)")


def format_observation(obs: Observation) -> str:
    parts = [format_state(obs.before), "--", format_state(obs.after)]
    if obs.correspondence is not None:
        pairs = " ".join(f"({a},{b})=({c},{d})" for (a, b), (c, d) in sorted(obs.correspondence.items()))
        parts.append(f"M: {pairs}".rstrip())
    parts.append("==")
    return "\n".join(parts)


def write_observations(path, observations: Iterable[Observation]) -> None:
    Path(path).write_text("\n".join(format_observation(o) for o in observations) + "\n", encoding="utf-8")


def read_observations(path) -> list[Observation]:
    out = []
    for rec in _split(_lines(path), "=="):
        if not rec:
            continue
        corr = None
        body = []
        for ln, line in rec:
            if line.startswith("M:"):
                corr = corr if corr is not None else {}
                for tok in line[2:].split():
                    m = _PAIR.fullmatch(tok)
                    if not m:
                        raise FormatError(path, ln, f"bad correspondence pair {tok!r}")
                    a, b, c, d = map(int, m.groups())
                    corr[(a, b)] = (c, d)
            else:
                body.append((ln, line))
        halves = _split(body, "--")
        if len(halves) != 2:
            raise FormatError(path, rec[0][0], "observation needs a before and an after state separated by '--'")
        before, after = _parse_state(path, halves[0]), _parse_state(path, halves[1])
        try:
            out.append(Observation(before, after, corr))
        except ValueError as exc:
            raise FormatError(path, rec[0][0], str(exc)) from None
    return out


# --------------------------------------------------------------------------
# plans
# --------------------------------------------------------------------------


def format_plan(result) -> str:
    lines = []
    for i, step in enumerate(result.plan):
        app = step.application
        emb = " ".join(f"{p}={h}" for p, h in enumerate(app.embedding))
        lines.append(f"step {i} rule {step.rule_id} graph {app.target_graph_index} map {emb}")
        lines.append(format_state(step.successor))
        lines.append("--")
    lines.append(
        f"summary solved={int(result.solved)} iterations={result.iterations} "
        f"wall={result.wall_time:.3f} expanded={result.nodes_expanded} algo={result.algo}"
    )
    return "\n".join(lines) + "\n"
