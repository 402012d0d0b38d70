"""Agent comparison over a target suite, reported as a solved-ratio table."""

from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .graphs import LabeledGraph, State
from .planner import Algo, Budget, PlanParams, PlanResult, Problem, WorldProgram, is_solved, plan, replay_plan

log = logging.getLogger(__name__)

COLUMNS = ("agent", "pct_solved", "stddev", "sec_per_plan", "iters_per_plan")


@dataclass
class BenchRow:
    agent: str
    pct_solved: float
    stddev: float
    sec_per_plan: float
    iters_per_plan: float

    def as_tuple(self):
        return (self.agent, self.pct_solved, self.stddev, self.sec_per_plan, self.iters_per_plan)


@dataclass
class BenchReport:
    rows: list[BenchRow]
    # results[agent][repeat][target]
    results: dict[str, list[list[PlanResult]]] = field(default_factory=dict, repr=False)
    seeds: list[int] = field(default_factory=list)

    def row(self, agent: str) -> BenchRow:
        for r in self.rows:
            if r.agent == agent:
                return r
        raise KeyError(agent)

    def table(self) -> str:
        header = ["agent", "% solved", "std dev", "s/plan", "iters/plan"]
        body = [
            [r.agent, f"{r.pct_solved:.2f}", f"{r.stddev:.2f}", f"{r.sec_per_plan:.3f}", f"{r.iters_per_plan:.1f}"]
            for r in self.rows
        ]
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([r.agent, f"{r.pct_solved:.4f}", f"{r.stddev:.4f}", f"{r.sec_per_plan:.6f}",
                            f"{r.iters_per_plan:.2f}"])


def run_benchmark(
    targets: list[State],
    agents: list[Algo | str],
    world: WorldProgram,
    blocks: list[LabeledGraph],
    budget: Budget,
    repeats: int = 3,
    params: PlanParams | None = None,
    seed: int = 0,
    d_max: int = 15,
) -> BenchReport:
    """Run every agent on every target under the same budget, ``repeats`` times.

    Repeat ``i`` uses seed ``seed + i`` for all agents; the standard deviation
    is taken over the per-repeat solved percentages.
    """
    if not targets:
        raise ValueError("need at least one target")
    if not agents:
        raise ValueError("need at least one agent")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    agents = [Algo.parse(a) if isinstance(a, str) else a for a in agents]
    params = params or PlanParams()
    seeds = [seed + i for i in range(repeats)]
    rows = []
    results: dict[str, list[list[PlanResult]]] = {}
    for algo in agents:
        per_repeat = []
        for s in seeds:
            cell = []
            for target in targets:
                res = plan(Problem(target, blocks, budget, d_max), algo, world, params, seed=s)
                cell.append(res)
            per_repeat.append(cell)
            log.info("%s seed=%d solved %d/%d", algo.value, s, sum(r.solved for r in cell), len(cell))
        results[algo.value] = per_repeat
        pcts = [100.0 * sum(r.solved for r in cell) / len(cell) for cell in per_repeat]
        flat = [r for cell in per_repeat for r in cell]
        rows.append(BenchRow(
            algo.value,
            statistics.fmean(pcts),
            statistics.pstdev(pcts) if len(pcts) > 1 else 0.0,
            statistics.fmean(r.wall_time for r in flat),
            statistics.fmean(r.iterations for r in flat),
        ))
    return BenchReport(rows, results, seeds)


def verify_plans(report: BenchReport, targets: list[State], world: WorldProgram, blocks) -> tuple[int, int]:
    """Replay every solved plan; returns ``(valid, solved)`` counts."""
    valid = solved = 0
    for per_repeat in report.results.values():
        for cell in per_repeat:
            for target, res in zip(targets, cell):
                if not res.solved:
                    continue
                solved += 1
                try:
                    final = replay_plan(target, res.plan, world.library)
                except (KeyError, ValueError):
                    continue
                if is_solved(final, blocks):
                    valid += 1
    return valid, solved
