"""Command-line pipeline.

Every stage reads and writes plain files under one output directory, one
file per episode, written atomically; parallel runs produce byte-identical
trees because every per-episode seed derives from the root seed and the
episode id, never from scheduling order.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import PipelineConfig, apply_overrides, config_from_json, load_config
from .engine import (
    NoisyExpertConfig,
    collect_dagger_trajectory,
    collect_gt_trajectory,
    detect_nodes,
    extract_node_context,
    frame_for_step,
    nodes_from_jsonl,
    nodes_to_jsonl,
)
from .errors import CollectionError, DeskvlnError, SchemaError
from .kinematics import Trajectory, trajectory_from_jsonl, trajectory_to_jsonl
from .metrics import evaluate, render_report_text
from .orchestrator import run_rollout
from .policies import (
    RandomWalkBackend,
    ReplayBackend,
    ScriptedExpertBackend,
    load_decisions,
)
from .remote import RemoteClient, RemotePolicyBackend, RemoteReasonerBackend
from .render import render_trace_svg, render_trace_text
from .serde import atomic_write_text, dumps_compact, stable_seed
from .supervision import (
    MockReasonerBackend,
    build_global_turn,
    build_node_turn,
    emit_training_samples,
    generate_reasoning,
    samples_to_jsonl,
)
from .world import generate_synthetic_world, load_episodes, load_world, save_episodes, save_world

log = logging.getLogger(__name__)

WORLD_FILE = "world.json"
EPISODES_FILE = "episodes.json"
GENMETA_FILE = "genmeta.json"
TRAJ_DIRS = {"gt": "traj_gt", "dagger": "traj_dagger", "rollout": "rollouts"}
NODES_DIR = "nodes"
SAMPLES_DIR = "samples"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
TRACE_TEXT = "trace.txt"
TRACE_SVG = "trace.svg"


def _traj_path(out_dir: str, source: str, episode_id: str) -> str:
    return os.path.join(out_dir, TRAJ_DIRS[source], f"{episode_id}.jsonl")


def _reasoning_path(out_dir: str, episode_id: str) -> str:
    return os.path.join(out_dir, TRAJ_DIRS["rollout"], f"{episode_id}.reasoning.jsonl")


def _nodes_path(out_dir: str, episode_id: str) -> str:
    return os.path.join(out_dir, NODES_DIR, f"{episode_id}.jsonl")


def _samples_path(out_dir: str, episode_id: str) -> str:
    return os.path.join(out_dir, SAMPLES_DIR, f"{episode_id}.jsonl")


def _load_env(out_dir: str):
    world = load_world(os.path.join(out_dir, WORLD_FILE))
    episodes = load_episodes(os.path.join(out_dir, EPISODES_FILE), world)
    return world, episodes


def _load_traj(out_dir: str, source: str, episode_id: str) -> Trajectory:
    path = _traj_path(out_dir, source, episode_id)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return trajectory_from_jsonl(fh.read())
    except OSError as exc:
        raise SchemaError(f"cannot read trajectory {path}: {exc}") from exc


def _select_episodes(episodes, spec: str | None):
    if spec is None:
        return list(episodes)
    wanted = [s for s in (part.strip() for part in spec.split(",")) if s]
    by_id = {e.episode_id: e for e in episodes}
    missing = [w for w in wanted if w not in by_id]
    if missing:
        raise SchemaError(f"unknown episode ids: {missing}")
    return [by_id[w] for w in wanted]


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    # Dedicated flags outrank both the file and --set.
    updates: dict = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        updates["jobs"] = args.jobs
    if getattr(args, "endpoint", None) is not None:
        updates["endpoint"] = args.endpoint
    if getattr(args, "step_budget", None) is not None:
        updates["step_budget"] = args.step_budget
    if getattr(args, "threshold", None) is not None:
        updates["deviation_threshold_m"] = args.threshold
    if updates:
        cfg = apply_overrides(cfg, [f"{k}={v}" for k, v in updates.items()])
    return cfg


def _chunk(items: list, n: int) -> list[list]:
    size = (len(items) + n - 1) // n
    return [items[i : i + size] for i in range(0, len(items), size)] if items else []


def _run_chunks(worker, chunks: list[list], jobs: int) -> list:
    results = []
    if jobs <= 1 or len(chunks) <= 1:
        for chunk in chunks:
            results.extend(worker(chunk))
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(worker, chunks):
            results.extend(part)
    return results


class _CollectWorker:
    def __init__(self, out_dir: str, mode: str, cfg_json: dict) -> None:
        self.out_dir = out_dir
        self.mode = mode
        self.cfg_json = cfg_json

    def __call__(self, episode_ids: list[str]) -> list[tuple[str, str]]:
        cfg = config_from_json(self.cfg_json)
        world, episodes = _load_env(self.out_dir)
        by_id = {e.episode_id: e for e in episodes}
        out = []
        for ep_id in episode_ids:
            ep = by_id[ep_id]
            try:
                if self.mode == "gt":
                    traj = collect_gt_trajectory(world, ep, step_cap=cfg.step_cap)
                else:
                    noise = NoisyExpertConfig(
                        error_probability=cfg.error_probability,
                        deviation_threshold_m=cfg.deviation_threshold_m,
                        seed=cfg.seed,
                    )
                    traj = collect_dagger_trajectory(world, ep, noise, step_cap=cfg.step_cap)
            except CollectionError as exc:
                out.append((ep_id, f"FAILED: {exc}"))
                continue
            atomic_write_text(
                _traj_path(self.out_dir, self.mode, ep_id), trajectory_to_jsonl(traj)
            )
            out.append((ep_id, f"{len(traj.steps)} steps"))
        return out


class _RolloutWorker:
    def __init__(self, out_dir: str, backend: str, cfg_json: dict, replay_dir: str | None) -> None:
        self.out_dir = out_dir
        self.backend = backend
        self.cfg_json = cfg_json
        self.replay_dir = replay_dir

    def _make_backend(self, cfg: PipelineConfig, world, ep):
        if self.backend == "scripted":
            return ScriptedExpertBackend(world, ep)
        if self.backend == "random":
            return RandomWalkBackend(stable_seed(cfg.seed, "rollout", ep.episode_id))
        if self.backend == "replay":
            path = os.path.join(self.replay_dir, f"{ep.episode_id}.jsonl")
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    return ReplayBackend(load_decisions(fh.read()))
            except OSError as exc:
                raise SchemaError(f"cannot read decisions {path}: {exc}") from exc
        return RemotePolicyBackend(RemoteClient(cfg.remote()), session_id=ep.episode_id)

    def __call__(self, episode_ids: list[str]) -> list[tuple[str, str]]:
        cfg = config_from_json(self.cfg_json)
        world, episodes = _load_env(self.out_dir)
        by_id = {e.episode_id: e for e in episodes}
        out = []
        for ep_id in episode_ids:
            ep = by_id[ep_id]
            backend = self._make_backend(cfg, world, ep)
            traj, rlog = run_rollout(world, ep, backend, cfg.rollout())
            atomic_write_text(
                _traj_path(self.out_dir, "rollout", ep_id), trajectory_to_jsonl(traj)
            )
            atomic_write_text(_reasoning_path(self.out_dir, ep_id), rlog.to_jsonl())
            out.append((ep_id, f"{len(traj.steps)} steps, {traj.terminated_by}"))
        return out


class _DetectWorker:
    def __init__(self, out_dir: str, source: str, cfg_json: dict) -> None:
        self.out_dir = out_dir
        self.source = source
        self.cfg_json = cfg_json

    def __call__(self, episode_ids: list[str]) -> list[tuple[str, str]]:
        cfg = config_from_json(self.cfg_json)
        world, episodes = _load_env(self.out_dir)
        by_id = {e.episode_id: e for e in episodes}
        out = []
        for ep_id in episode_ids:
            traj = _load_traj(self.out_dir, self.source, ep_id)
            nodes = detect_nodes(
                traj,
                by_id[ep_id],
                world,
                k_debounce=cfg.k_debounce,
                deviation_threshold_m=cfg.deviation_threshold_m,
                success_radius_m=cfg.success_radius_m,
            )
            nodes = [
                extract_node_context(
                    traj, n, window=cfg.window, stride=cfg.stride, world=world, fov=cfg.fov()
                )
                for n in nodes
            ]
            atomic_write_text(_nodes_path(self.out_dir, ep_id), nodes_to_jsonl(ep_id, nodes))
            out.append((ep_id, f"{len(nodes)} nodes"))
        return out


class _SuperviseWorker:
    def __init__(self, out_dir: str, source: str, backend: str, cfg_json: dict) -> None:
        self.out_dir = out_dir
        self.source = source
        self.backend = backend
        self.cfg_json = cfg_json

    def __call__(self, episode_ids: list[str]) -> list[tuple[str, str]]:
        cfg = config_from_json(self.cfg_json)
        world, episodes = _load_env(self.out_dir)
        by_id = {e.episode_id: e for e in episodes}
        if self.backend == "mock":
            reasoner = MockReasonerBackend()
        else:
            reasoner = RemoteReasonerBackend(RemoteClient(cfg.remote()), session_id="supervise")
        out = []
        for ep_id in episode_ids:
            ep = by_id[ep_id]
            traj = _load_traj(self.out_dir, self.source, ep_id)
            path = _nodes_path(self.out_dir, ep_id)
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    _, nodes = nodes_from_jsonl(fh.read(), traj, world, cfg.fov())
            except OSError as exc:
                raise SchemaError(f"cannot read nodes {path}: {exc}") from exc
            frames = [frame_for_step(traj, s, world, cfg.fov()) for s in range(len(traj.steps))]
            global_turn = build_global_turn(ep, frames, cfg.global_frame_budget)
            triplets = [
                generate_reasoning(
                    reasoner, [global_turn, build_node_turn(n)], cfg.triplet_retries
                )
                for n in nodes
            ]
            samples = emit_training_samples(traj, nodes, triplets, ep, cfg.frames_k)
            atomic_write_text(_samples_path(self.out_dir, ep_id), samples_to_jsonl(ep_id, samples))
            out.append((ep_id, f"{len(samples)} samples"))
        return out


def cmd_gen_world(args) -> int:
    cfg = _resolve_config(args)
    world, episodes, meta = generate_synthetic_world(cfg.seed, cfg.world_params())
    os.makedirs(args.out_dir, exist_ok=True)
    save_world(world, os.path.join(args.out_dir, WORLD_FILE))
    save_episodes(episodes, os.path.join(args.out_dir, EPISODES_FILE))
    meta = dict(meta)
    meta["config"] = cfg.to_json()
    atomic_write_text(os.path.join(args.out_dir, GENMETA_FILE), dumps_compact(meta) + "\n")
    print(
        f"world {world.width:.2f} x {world.height:.2f} m, {len(world.rooms)} rooms, "
        f"{len(episodes)} episodes -> {args.out_dir}"
    )
    return 0


def _report_lines(rows: list[tuple[str, str]]) -> int:
    failed = 0
    for ep_id, note in rows:
        print(f"{ep_id}: {note}")
        if note.startswith("FAILED"):
            failed += 1
    if failed:
        print(f"{failed} episode(s) failed", file=sys.stderr)
    return 1 if failed else 0


def cmd_collect(args) -> int:
    cfg = _resolve_config(args)
    _, episodes = _load_env(args.out_dir)
    chosen = _select_episodes(episodes, args.episodes)
    os.makedirs(os.path.join(args.out_dir, TRAJ_DIRS[args.mode]), exist_ok=True)
    worker = _CollectWorker(args.out_dir, args.mode, cfg.to_json())
    rows = _run_chunks(worker, _chunk([e.episode_id for e in chosen], cfg.jobs), cfg.jobs)
    return _report_lines(rows)


def cmd_detect_nodes(args) -> int:
    cfg = _resolve_config(args)
    _, episodes = _load_env(args.out_dir)
    chosen = _select_episodes(episodes, args.episodes)
    os.makedirs(os.path.join(args.out_dir, NODES_DIR), exist_ok=True)
    worker = _DetectWorker(args.out_dir, args.mode, cfg.to_json())
    rows = _run_chunks(worker, _chunk([e.episode_id for e in chosen], cfg.jobs), cfg.jobs)
    return _report_lines(rows)


def cmd_supervise(args) -> int:
    cfg = _resolve_config(args)
    _, episodes = _load_env(args.out_dir)
    chosen = _select_episodes(episodes, args.episodes)
    os.makedirs(os.path.join(args.out_dir, SAMPLES_DIR), exist_ok=True)
    worker = _SuperviseWorker(args.out_dir, args.mode, args.backend, cfg.to_json())
    rows = _run_chunks(worker, _chunk([e.episode_id for e in chosen], cfg.jobs), cfg.jobs)
    return _report_lines(rows)


def cmd_rollout(args) -> int:
    cfg = _resolve_config(args)
    _, episodes = _load_env(args.out_dir)
    chosen = _select_episodes(episodes, args.episodes)
    if args.backend == "replay" and not args.replay_dir:
        raise SchemaError("rollout --backend replay needs --replay-dir")
    if args.backend == "remote" and not cfg.endpoint:
        raise SchemaError("rollout --backend remote needs an endpoint")
    os.makedirs(os.path.join(args.out_dir, TRAJ_DIRS["rollout"]), exist_ok=True)
    worker = _RolloutWorker(args.out_dir, args.backend, cfg.to_json(), args.replay_dir)
    rows = _run_chunks(worker, _chunk([e.episode_id for e in chosen], cfg.jobs), cfg.jobs)
    return _report_lines(rows)


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    world, episodes = _load_env(args.out_dir)
    chosen = _select_episodes(episodes, args.episodes)
    trajs = []
    for ep in chosen:
        path = _traj_path(args.out_dir, args.source, ep.episode_id)
        if not os.path.exists(path):
            continue
        trajs.append(_load_traj(args.out_dir, args.source, ep.episode_id))
    if not trajs:
        raise SchemaError(f"no trajectories under {TRAJ_DIRS[args.source]}/")
    report = evaluate(world, trajs, episodes, cfg.success_radius_m)
    text = render_report_text(report)
    atomic_write_text(os.path.join(args.out_dir, REPORT_JSON), report.to_json_text())
    atomic_write_text(os.path.join(args.out_dir, REPORT_TEXT), text)
    print(text, end="")
    return 0


def cmd_inspect(args) -> int:
    cfg = _resolve_config(args)
    world, episodes = _load_env(args.out_dir)
    by_id = {e.episode_id: e for e in episodes}
    if args.episode not in by_id:
        raise SchemaError(f"unknown episode {args.episode!r}")
    ep = by_id[args.episode]
    traj = _load_traj(args.out_dir, args.source, args.episode)
    nodes = []
    nodes_path = _nodes_path(args.out_dir, args.episode)
    if os.path.exists(nodes_path):
        with open(nodes_path, "r", encoding="utf-8") as fh:
            _, nodes = nodes_from_jsonl(fh.read(), traj, world, cfg.fov())
    print(f"{args.episode}: {len(traj.steps)} steps, ended by {traj.terminated_by}")
    print(f"instruction: {ep.instruction}")
    for n in nodes:
        extra = ""
        if n.room_transition is not None:
            frm = n.room_transition[0] or "(unlabeled)"
            extra = f" {frm} -> {n.room_transition[1]}"
        elif n.node_type == "StoppingError":
            extra = " ne=unreachable" if n.ne_unreachable else f" ne={n.ne:.2f}"
        elif n.correction_steps:
            extra = f" correction={n.correction_steps[0]}..{n.correction_steps[-1]}"
        cause = f"/{n.cause}" if n.cause else ""
        print(f"step {n.step:4d} {n.node_type}{cause} progress={n.progress * 100.0:.1f}%{extra}")
    text_path = os.path.join(args.out_dir, TRACE_TEXT)
    svg_path = os.path.join(args.out_dir, TRACE_SVG)
    atomic_write_text(text_path, render_trace_text(world, traj, nodes, ep))
    atomic_write_text(svg_path, render_trace_svg(world, traj, nodes, ep))
    print(f"trace written to {text_path} and {svg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", required=True, help="pipeline directory")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="root seed override")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="config override, repeatable; outranks the config file",
    )
    common.add_argument("--episodes", default=None, help="comma-separated episode ids")

    parser = argparse.ArgumentParser(
        prog="deskvln",
        description="Desk-scale navigation pipeline: generate worlds, collect "
        "demonstrations, mine key nodes, emit supervision, roll out policies, "
        "and score the results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", parents=[common], help="generate a synthetic world")
    p.set_defaults(fn=cmd_gen_world)

    p = sub.add_parser("collect", parents=[common], help="collect demonstrations")
    p.add_argument("--mode", choices=("gt", "dagger"), required=True)
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("detect-nodes", parents=[common], help="mine key nodes")
    p.add_argument("--mode", choices=("gt", "dagger"), default="dagger")
    p.add_argument("--threshold", type=float, default=None, help="deviation threshold in meters")
    p.set_defaults(fn=cmd_detect_nodes)

    p = sub.add_parser("supervise", parents=[common], help="emit training samples")
    p.add_argument("--mode", choices=("gt", "dagger"), default="dagger")
    p.add_argument("--backend", choices=("mock", "remote"), default="mock")
    p.add_argument("--endpoint", default=None, help="reasoning service URL")
    p.set_defaults(fn=cmd_supervise)

    p = sub.add_parser("rollout", parents=[common], help="run a policy")
    p.add_argument(
        "--backend", choices=("scripted", "random", "replay", "remote"), required=True
    )
    p.add_argument("--endpoint", default=None, help="decision service URL")
    p.add_argument("--step-budget", type=int, default=None, dest="step_budget")
    p.add_argument("--replay-dir", default=None, help="directory of recorded decisions")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("eval", parents=[common], help="score trajectories")
    p.add_argument("--source", choices=("gt", "dagger", "rollout"), default="rollout")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("inspect", parents=[common], help="trace one episode")
    p.add_argument("--episode", required=True)
    p.add_argument("--source", choices=("gt", "dagger", "rollout"), default="dagger")
    p.set_defaults(fn=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DeskvlnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
