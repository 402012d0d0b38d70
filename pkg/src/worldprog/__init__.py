"""Learned world programs over labeled graphs: rewrite-rule induction, learned
priors and transition filters, and tree-search planning toward building blocks."""

from __future__ import annotations

from .graphs import (
    GraphError,
    GraphSizeError,
    LabeledGraph,
    State,
    canonical_form,
    connected_components,
    find_embeddings,
    is_isomorphic,
    state_key,
)
from .rewrite import Application, RewriteRule, apply_rule, enumerate_applications, reverse_rule
from .induction import ActionLibrary, Observation, build_library, extract_rule, infer_correspondence
from .features import fingerprint_graph, fingerprint_state
from .models import PolicyModel, TransitionModel, policy_topk, score_transition, train_policy, train_transition
from .planner import Algo, Budget, PlanParams, PlanResult, Problem, WorldProgram, expand, is_solved, plan, replay_plan
from .envgen import WorldParams, WorldSpec, gen_trajectories, gen_world, oracle_solvable
from .bench import BenchReport, run_benchmark

__all__ = [
    "ActionLibrary",
    "Algo",
    "Application",
    "apply_rule",
    "BenchReport",
    "Budget",
    "build_library",
    "canonical_form",
    "connected_components",
    "enumerate_applications",
    "expand",
    "extract_rule",
    "find_embeddings",
    "fingerprint_graph",
    "fingerprint_state",
    "gen_trajectories",
    "gen_world",
    "GraphError",
    "GraphSizeError",
    "infer_correspondence",
    "is_isomorphic",
    "is_solved",
    "LabeledGraph",
    "Observation",
    "oracle_solvable",
    "plan",
    "PlanParams",
    "PlanResult",
    "policy_topk",
    "PolicyModel",
    "Problem",
    "replay_plan",
    "reverse_rule",
    "RewriteRule",
    "run_benchmark",
    "score_transition",
    "State",
    "state_key",
    "train_policy",
    "train_transition",
    "TransitionModel",
    "WorldParams",
    "WorldProgram",
    "WorldSpec",
]

__version__ = "0.1.0"
