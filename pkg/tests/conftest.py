from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from worldprog.envgen import Trajectories, WorldParams, WorldSpec, gen_trajectories, gen_world  # noqa: E402
from worldprog.induction import LibraryBuild, build_library  # noqa: E402
from worldprog.models import make_transition_dataset, train_policy, train_transition  # noqa: E402
from worldprog.planner import WorldProgram  # noqa: E402


@dataclass
class Pipeline:
    world: WorldSpec
    traj: Trajectories
    build: LibraryBuild
    program: WorldProgram


def make_pipeline(seed: int = 0, n_targets: int = 200, depth=(2, 5), params: WorldParams | None = None) -> Pipeline:
    """Default envgen world, induced library and both trained models."""
    world = gen_world(params or WorldParams(), seed)
    traj = gen_trajectories(world, n_targets, depth, 0.0, seed)
    build = build_library(traj.observations, radius=0)
    pairs = [(o, lab) for o, lab in zip(traj.observations, build.labels) if lab is not None]
    policy = train_policy(build.library, [o.before for o, _ in pairs], [lab for _, lab in pairs])
    dataset = make_transition_dataset(build.library, [o for o, _ in pairs], neg_per_pos=4, seed=seed)
    transition = train_transition(dataset, library_hash=build.library.hash_id)
    return Pipeline(world, traj, build, WorldProgram(build.library, policy, transition))


@pytest.fixture(scope="session")
def default_pipeline() -> Pipeline:
    return make_pipeline(seed=0)


@pytest.fixture(scope="session")
def small_pipeline() -> Pipeline:
    return make_pipeline(seed=3, n_targets=40, depth=(1, 3))


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (name, ok, detail)
    print(f"criterion {number} {'PASS' if ok else 'FAIL'}: {name} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number}. {'PASS' if ok else 'FAIL'}  {name}: {detail}")
