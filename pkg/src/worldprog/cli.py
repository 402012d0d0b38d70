"""Command line interface: ``worldprog gen-env | induce | train | plan | bench``.

Every subcommand works on a world directory (``--world``, default ``.``) whose
standard file names can be overridden one by one. ``--config FILE`` reads
``key=value`` lines as defaults; options given on the command line win.

Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats
from .bench import run_benchmark, verify_plans
from .envgen import GenerationError, WorldParams, gen_trajectories, gen_world
from .graphs import GraphError
from .induction import InductionError, build_library, extract_rule
from .models import (
    ModelError,
    TrainConfig,
    load_policy,
    load_transition,
    make_transition_dataset,
    save_policy,
    save_transition,
    train_policy,
    train_transition,
)
from .planner import ALL_AGENTS, Algo, Budget, PlanParams, Problem, WorldProgram, plan
from .rewrite import RuleError

log = logging.getLogger("worldprog")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

FILES = {
    "world_rules": "world.rules",
    "blocks": "blocks.graphs",
    "observations": "observations.obs",
    "targets": "targets.graphs",
    "library": "library.rules",
    "policy": "policy.model",
    "transition": "transition.model",
    "report": "bench.csv",
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--world", default=".", help="world directory (default: .)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=int, default=0, help="rule context radius in hops")
    p.add_argument("--mass", type=float, default=0.99, help="top-k cumulative prior mass")
    p.add_argument("--tau", type=float, default=0.5, help="transition filter threshold")
    p.add_argument("--iters", type=int, default=10_000, help="iterations (or expansions) per restart")
    p.add_argument("--time-cap", type=float, default=None, help="seconds per restart")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="worldprog", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-env", help="generate a synthetic world bundle")
    _common(p)
    p.add_argument("--n-targets", type=int, default=200)
    p.add_argument("--depth-min", type=int, default=2)
    p.add_argument("--depth-max", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--vertex-labels", type=int, default=6)
    p.add_argument("--edge-labels", type=int, default=2)
    p.add_argument("--rules", type=int, default=12)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--block-min", type=int, default=3)
    p.add_argument("--block-max", type=int, default=6)
    p.add_argument("--label-skew", type=float, default=0.0)
    p.add_argument("--p-convergent", type=float, default=0.0)

    p = sub.add_parser("induce", help="induce an action library from observations")
    _common(p)
    p.add_argument("--observations")
    p.add_argument("--out", help="library file")
    p.add_argument("--min-support", type=int, default=1)

    p = sub.add_parser("train", help="train the policy and transition models")
    _common(p)
    p.add_argument("--observations")
    p.add_argument("--library")
    p.add_argument("--out-dir")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--neg-per-pos", type=int, default=4)
    p.add_argument("--bits", type=int, default=2048)
    p.add_argument("--fp-radius", type=int, default=2)

    for name, help_ in (("plan", "plan one target"), ("bench", "compare agents on the target suite")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--library")
        p.add_argument("--policy")
        p.add_argument("--transition")
        p.add_argument("--blocks")
        p.add_argument("--targets")
        p.add_argument("--d-max", type=int, default=15)
        p.add_argument("--c-puct", type=float, default=3.0)
        p.add_argument("--c-uct", type=float, default=1.414)
        p.add_argument("--no-filter", action="store_true", help="ignore the transition model")
        p.add_argument("--out")
        if name == "plan":
            p.add_argument("--index", type=int, default=0, help="target record to plan")
            p.add_argument("--algo", default="PUCT")
        else:
            p.add_argument("--agents", default=",".join(a.value for a in ALL_AGENTS))
            p.add_argument("--repeats", type=int, default=3)
            p.add_argument("--limit", type=int, default=None, help="use only the first N targets")
    return parser


def read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}:{i}: expected key=value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("worldprog: a subcommand is required (gen-env, induce, train, plan, bench)")
    if args.config:
        conf = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(conf) - known)
        if unknown:
            raise UsageError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
        subparser.set_defaults(**conf)
        args = parser.parse_args(argv)
    return args


def _path(args, attr: str) -> Path:
    given = getattr(args, attr, None)
    return Path(given) if given else Path(args.world) / FILES[attr]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_gen_env(args) -> int:
    params = WorldParams(
        n_vertex_labels=args.vertex_labels,
        n_edge_labels=args.edge_labels,
        n_rules=args.rules,
        n_blocks=args.blocks,
        block_min=args.block_min,
        block_max=args.block_max,
        label_skew=args.label_skew,
        p_convergent=args.p_convergent,
    )
    world = gen_world(params, args.seed)
    traj = gen_trajectories(world, args.n_targets, (args.depth_min, args.depth_max), args.noise, args.seed)
    out = Path(args.world)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_rules(out / FILES["world_rules"], world.rules)
    formats.write_graphs(out / FILES["blocks"], world.blocks)
    formats.write_observations(out / FILES["observations"], traj.observations)
    formats.write_states(out / FILES["targets"], traj.targets)
    meta = world.meta()
    meta.update(n_targets=args.n_targets, depth_min=args.depth_min, depth_max=args.depth_max, noise=args.noise)
    (out / "meta").write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")
    print(f"world: {len(world.rules)} hidden rules, {len(world.blocks)} blocks, "
          f"{len(traj.observations)} observations, {len(traj.targets)} targets -> {out}")
    return EXIT_OK


def cmd_induce(args) -> int:
    observations = formats.read_observations(_path(args, "observations"))
    result = build_library(observations, args.radius, args.min_support)
    out = Path(args.out) if args.out else Path(args.world) / FILES["library"]
    formats.write_rules(out, result.library.rules)
    for i, reason in result.failures:
        log.warning("observation %d: %s", i, reason)
    print(f"library: {len(result.library)} rules from {len(observations)} observations "
          f"({len(result.failures)} failed) -> {out}")
    return EXIT_OK


def _loss(history: list[float]) -> str:
    return f"loss {history[0]:.4f} -> {history[-1]:.4f}" if history else "not trained (0 epochs)"


def cmd_train(args) -> int:
    observations = formats.read_observations(_path(args, "observations"))
    library = formats.read_library(_path(args, "library"))
    states, labels, used = [], [], []
    for obs in observations:
        try:
            rid = extract_rule(obs, args.radius).rule_id
        except InductionError:
            continue
        if rid in library.index:
            states.append(obs.before)
            labels.append(library.index[rid])
            used.append(obs)
    if not used:
        raise DataError("no observation matches a library rule; was the library induced with the same --radius?")
    cfg = TrainConfig(args.epochs, args.step, args.l2, args.batch, args.seed)
    policy = train_policy(library, states, labels, cfg, args.fp_radius, args.bits)
    dataset = make_transition_dataset(library, used, args.neg_per_pos, args.seed)
    transition = train_transition(dataset, cfg, args.fp_radius, args.bits, args.tau, library.hash_id)
    out = Path(args.out_dir) if args.out_dir else Path(args.world)
    out.mkdir(parents=True, exist_ok=True)
    save_policy(policy, out / FILES["policy"])
    save_transition(transition, out / FILES["transition"])
    print(f"policy: {len(library)} rules, {len(states)} examples, {_loss(policy.loss_history)}")
    print(f"transition: {dataset.n_positive} positive / {dataset.n_negative} negative, "
          f"{_loss(transition.loss_history)}")
    return EXIT_OK


def _load_world(args) -> tuple[WorldProgram, list, PlanParams, Budget]:
    for name in ("mass", "tau"):
        if not 0.0 < getattr(args, name) < 1.0:
            raise UsageError(f"--{name} must lie in (0, 1)")
    if args.iters < 1 or args.restarts < 1 or (args.time_cap is not None and args.time_cap <= 0):
        raise UsageError("--iters, --restarts and --time-cap must be positive")
    library = formats.read_library(_path(args, "library"))
    policy = load_policy(_path(args, "policy"))
    if policy.n_rules != len(library):
        raise DataError(f"policy has {policy.n_rules} classes but the library has {len(library)} rules")
    if policy.library_hash and policy.library_hash != library.hash_id:
        raise DataError("policy was trained on a different library")
    transition = None if args.no_filter else load_transition(_path(args, "transition"))
    blocks = formats.read_graphs(_path(args, "blocks"))
    params = PlanParams(c_puct=args.c_puct, c_uct=args.c_uct, mass=args.mass, tau=args.tau)
    if transition is not None:
        transition.tau = args.tau
    budget = Budget(args.iters, args.time_cap, args.restarts)
    return WorldProgram(library, policy, transition), blocks, params, budget


def cmd_plan(args) -> int:
    try:
        algo = Algo.parse(args.algo)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    world, blocks, params, budget = _load_world(args)
    targets = formats.read_states(_path(args, "targets"))
    if not 0 <= args.index < len(targets):
        raise DataError(f"target index {args.index} out of range (0..{len(targets) - 1})")
    result = plan(Problem(targets[args.index], blocks, budget, args.d_max), algo, world, params, args.seed)
    text = formats.format_plan(result)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        agents = [Algo.parse(a) for a in args.agents.split(",") if a.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not agents:
        raise UsageError("no agents given")
    world, blocks, params, budget = _load_world(args)
    targets = formats.read_states(_path(args, "targets"))
    if args.limit is not None:
        targets = targets[: args.limit]
    if not targets:
        raise DataError("no targets")
    report = run_benchmark(targets, agents, world, blocks, budget, args.repeats, params, args.seed, args.d_max)
    valid, solved = verify_plans(report, targets, world, blocks)
    print(report.table())
    print(f"plans replayed: {valid}/{solved} valid")
    out = _path(args, "out") if args.out else Path(args.world) / FILES["report"]
    report.write_csv(out)
    out.with_suffix(".json").write_text(
        json.dumps([dict(zip(("agent", "pct_solved", "stddev", "sec_per_plan", "iters_per_plan"), r.as_tuple()))
                    for r in report.rows], indent=1) + "\n",
        encoding="utf-8",
    )
    return EXIT_OK


COMMANDS = {
    "gen-env": cmd_gen_env,
    "induce": cmd_induce,
    "train": cmd_train,
    "plan": cmd_plan,
    "bench": cmd_bench,
}

DATA_ERRORS = (DataError, OSError, ValueError, GraphError, RuleError, InductionError, ModelError, GenerationError)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
