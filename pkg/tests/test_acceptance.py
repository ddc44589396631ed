"""Whole-stack acceptance gates.

One test per contract, ordered roughly bottom-up: metric oracles, geodesic
exactness, loop invariants, the command grammar, event mining, correction
hand-back, demonstration quality, the full CLI pipeline, and determinism
across worker counts.  Each runs at its stated tolerance and time budget;
the per-module suites cover the fine grain.  Reference implementations
live in oracles.py and share no code with the package.
"""

import json
import math
import os
import random
import time

import numpy as np

from oracles import (
    dijkstra_pairs_oracle,
    dtw_oracle,
    excursion_scan_oracle,
    pair_to_meters,
)

from deskvln.cli import main
from deskvln.engine import (
    CAUSE_ROOM_CHANGE,
    NoisyExpertConfig,
    collect_dagger_trajectory,
    collect_gt_trajectory,
    detect_deviation_nodes,
    detect_subtask_nodes,
    distance_to_polyline,
)
from deskvln.kinematics import (
    MODE_ACT,
    TAG_CORRECTING,
    TERMINATED_BUDGET,
    TERMINATED_STOP,
    ActionPrimitive,
    Pose,
    StepMarker,
    StepRecord,
    Trajectory,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)
from deskvln.metrics import evaluate_episode, is_success, ndtw, spl
from deskvln.orchestrator import (
    RolloutConfig,
    parse_action_text,
    render_command,
    run_rollout,
)
from deskvln.policies import RandomWalkBackend
from deskvln.supervision import parse_triplet, samples_from_jsonl
from deskvln.world import (
    Episode,
    SceneWorld,
    WorldGenParams,
    generate_synthetic_world,
    geodesic_distance,
    goal_field,
)


def _run(argv):
    code = main(argv)
    assert code == 0, f"command {argv} exited {code}"


def _line_world() -> SceneWorld:
    # five 1 m cells in a row: distances between cell centers are exact
    # integers, no diagonal term, no endpoint stubs
    return SceneWorld(5.0, 1.0, 1.0, np.zeros((1, 5), dtype=bool), (), ())


def _stay_put(world: SceneWorld, pose: Pose, goal, episode_id="analytic") -> tuple[Episode, Trajectory]:
    ep = Episode(
        episode_id=episode_id,
        instruction="hold still",
        start=pose,
        goal=goal,
        gt_waypoints=((pose.x, pose.y), goal),
        gt_geodesic_length=geodesic_distance(world, (pose.x, pose.y), goal),
    )
    rec = StepRecord(0, pose, pose, ActionPrimitive.STOP, False, None, MODE_ACT)
    return ep, Trajectory(episode_id, (rec,), TERMINATED_STOP)


def test_metrics_match_reference_oracles():
    t0 = time.monotonic()
    rng = random.Random(101)
    for _ in range(100):
        a = [(rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)) for _ in range(rng.randint(1, 20))]
        b = [(rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)) for _ in range(rng.randint(1, 20))]
        want = math.exp(-dtw_oracle(a, b) / (len(b) * 3.0))
        assert abs(ndtw(a, b) - want) <= 1e-9

    # closed forms: a walk exactly as long as the reference scores 1,
    # a failure scores 0, and the success radius is inclusive
    assert spl(True, 7.5, 7.5) == 1.0
    assert spl(True, 4.0, 3.0) == 1.0
    assert spl(False, 4.0, 400.0) == 0.0
    assert is_success(3.0)
    assert not is_success(3.0 + 1e-9)
    assert not is_success(None)

    world = _line_world()
    ep, traj = _stay_put(world, Pose(0.5, 0.5, 0.0), (3.5, 0.5))
    rep = evaluate_episode(world, traj, ep)
    assert rep.ne == 3.0
    assert rep.success and rep.oracle_success

    ep2, traj2 = _stay_put(world, Pose(0.5, 0.5, 0.0), (4.5, 0.5), "analytic-miss")
    rep2 = evaluate_episode(world, traj2, ep2)
    assert rep2.ne == 4.0
    assert not rep2.success
    assert rep2.spl == 0.0
    assert time.monotonic() - t0 < 5.0


def test_geodesic_matches_dijkstra_at_cell_centers():
    t0 = time.monotonic()
    res = 0.2
    for trial in range(100):
        rs = np.random.RandomState(trial)
        occ = rs.rand(50, 50) < 0.28
        free = np.argwhere(~occ)
        assert len(free) > 0
        sy, sx = (int(v) for v in free[rs.randint(len(free))])
        world = SceneWorld(50 * res, 50 * res, res, occ, (), ())
        gf = goal_field(world, world.cell_center(sy, sx))
        want = dijkstra_pairs_oracle(occ.tolist(), sy, sx)
        for y in range(50):
            for x in range(50):
                if occ[y, x]:
                    continue
                got = gf.distance_from(*world.cell_center(y, x))
                pair = want.get((y, x))
                if pair is None:
                    assert got is None, f"trial {trial}: ({y},{x}) reachable only one way"
                else:
                    # exact float equality, not approximate
                    assert got == pair_to_meters(pair, res), f"trial {trial}: ({y},{x})"
    assert time.monotonic() - t0 < 30.0


def test_loop_invariants_hold_over_seeded_rollouts(gen_bundle):
    world, episodes, _ = gen_bundle
    cfg = RolloutConfig(step_budget=120, frames_k=8)
    t0 = time.monotonic()
    terminations = set()
    for seed in range(1000):
        ep = episodes[seed % len(episodes)]
        expected = {"t": 0, "t_prev": 0}

        def observer(state, decision, mode):
            assert state.t == expected["t"]
            assert state.t_prev == expected["t_prev"]
            assert len(state.frames) == state.t + 1
            if decision.d_reason == decision.d_act:
                assert mode == MODE_ACT
            if mode != MODE_ACT:
                expected["t_prev"] = state.t
            expected["t"] += 1

        traj, _ = run_rollout(world, ep, RandomWalkBackend(seed), cfg, observer)
        assert traj.terminated_by in (TERMINATED_STOP, TERMINATED_BUDGET)
        terminations.add(traj.terminated_by)
        for rec in traj.steps:
            if rec.action is StepMarker.REASON:
                assert rec.pose_before == rec.pose_after
    assert terminations == {TERMINATED_STOP, TERMINATED_BUDGET}
    assert time.monotonic() - t0 < 60.0


def test_command_grammar_round_trips():
    rng = random.Random(17)
    for _ in range(1000):
        kind = rng.randrange(4)
        if kind == 0:
            text = "stop"
        elif kind == 1:
            text = f"move forward {25 * rng.randint(1, 12)} cm"
        else:
            side = "left" if kind == 2 else "right"
            text = f"turn {side} {15 * rng.randint(1, 12)} degrees"
        prims = parse_action_text(text)
        assert render_command(prims) == text
        assert parse_action_text(render_command(prims)) == prims
    assert parse_action_text("move forward 75 cm") == [ActionPrimitive.FORWARD] * 3


def test_planted_events_are_recovered_exactly():
    for seed in range(50):
        params = WorldGenParams(room_count=2 + seed % 4, episode_count=2)
        world, episodes, meta = generate_synthetic_world(3000 + seed, params)
        for ep in episodes:
            gt = collect_gt_trajectory(world, ep)
            nodes = detect_subtask_nodes(gt, ep)
            got = [n.room_transition for n in nodes if n.cause == CAUSE_ROOM_CHANGE]
            want = [
                tuple(pair)
                for pair in meta["episodes"][ep.episode_id]["planted_transitions"]
            ]
            # ordered equality is precision = recall = 1
            assert got == want, f"seed {seed} {ep.episode_id}: {got} != {want}"

            noisy = collect_dagger_trajectory(
                world,
                ep,
                NoisyExpertConfig(error_probability=0.25, seed=seed),
                step_cap=8000,
            )
            series = [
                distance_to_polyline((r.pose_after.x, r.pose_after.y), ep.gt_waypoints)
                for r in noisy.steps
            ]
            want_steps = excursion_scan_oracle(series, 1.0)
            got_steps = [n.step for n in detect_deviation_nodes(noisy, ep, 1.0)]
            assert got_steps == want_steps, f"seed {seed} {ep.episode_id}"


def test_corrections_hand_back_within_tolerance():
    runs = 0
    for wseed in range(5):
        params = WorldGenParams(room_count=3, episode_count=4)
        world, episodes, _ = generate_synthetic_world(100 + wseed, params)
        for ep in episodes:
            for nseed in range(10):
                runs += 1
                noise = NoisyExpertConfig(error_probability=0.25, seed=nseed)
                traj = collect_dagger_trajectory(world, ep, noise, step_cap=8000)
                steps = traj.steps
                for i, rec in enumerate(steps):
                    last_of_run = rec.segment_tag == TAG_CORRECTING and (
                        i + 1 == len(steps) or steps[i + 1].segment_tag != TAG_CORRECTING
                    )
                    if last_of_run:
                        p = rec.pose_after
                        d = min(
                            math.hypot(wx - p.x, wy - p.y) for wx, wy in ep.gt_waypoints
                        )
                        assert d <= 0.25, f"{ep.episode_id} seed {nseed}: hand-back {d}"
    assert runs == 200

    # zero error probability must be byte-identical to the clean collector
    world, episodes, _ = generate_synthetic_world(100, WorldGenParams(room_count=3, episode_count=4))
    for ep in episodes:
        clean = trajectory_to_jsonl(collect_gt_trajectory(world, ep))
        flat = trajectory_to_jsonl(
            collect_dagger_trajectory(world, ep, NoisyExpertConfig(error_probability=0.0, seed=9))
        )
        assert clean == flat


def test_reference_demonstrations_meet_quality_floor():
    episodes_seen = 0
    for seed in range(40):
        params = WorldGenParams(room_count=2 + seed % 4, episode_count=3)
        world, episodes, _ = generate_synthetic_world(2000 + seed, params)
        for ep in episodes:
            episodes_seen += 1
            traj = collect_gt_trajectory(world, ep)
            rep = evaluate_episode(world, traj, ep)
            assert rep.success, f"seed {seed} {ep.episode_id}: ne={rep.ne}"
            assert rep.spl >= 0.85, f"seed {seed} {ep.episode_id}: spl={rep.spl}"
    assert episodes_seen == 120


def test_pipeline_end_to_end(tmp_path):
    out = str(tmp_path / "accept")
    base = ["--out-dir", out, "--seed", "29", "--set", "room_count=4", "--set", "episode_count=50"]
    t0 = time.monotonic()
    _run(["gen-world"] + base)
    _run(["collect", "--mode", "dagger"] + base)
    _run(["detect-nodes"] + base)
    _run(["supervise", "--backend", "mock"] + base)
    _run(["eval", "--source", "dagger"] + base)
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"pipeline took {elapsed:.1f} s"

    with open(os.path.join(out, "episodes.json")) as fh:
        episode_ids = [e["id"] for e in json.load(fh)["episodes"]]
    assert len(episode_ids) == 50

    for ep_id in episode_ids:
        with open(os.path.join(out, "traj_dagger", f"{ep_id}.jsonl")) as fh:
            traj = trajectory_from_jsonl(fh.read())
        with open(os.path.join(out, "nodes", f"{ep_id}.jsonl")) as fh:
            node_lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        n_nodes = len(node_lines) - 1  # header line
        with open(os.path.join(out, "samples", f"{ep_id}.jsonl")) as fh:
            got_id, samples = samples_from_jsonl(fh.read())
        assert got_id == ep_id
        for s in samples:
            s.validate()
        reason = [s for s in samples if s.mode != MODE_ACT]
        assert len(reason) == n_nodes
        for s in reason:
            trip = parse_triplet(s.target)
            assert trip.scene_description.strip()
            assert trip.progress_assessment.strip()
            assert trip.next_plan.strip()
        for s in samples:
            if s.mode == MODE_ACT:
                prims = parse_action_text(s.target)
                assert prims
                assert all(isinstance(p, ActionPrimitive) for p in prims)
        assert traj.steps

    with open(os.path.join(out, "report.json")) as fh:
        report = json.load(fh)
    assert set(report["aggregate"]) == {"NE", "OS", "SR", "SPL", "nDTW"}
    assert len(report["episodes"]) == 50


def _tree_bytes(root: str) -> dict:
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_pipeline_is_deterministic_across_jobs(tmp_path):
    trees = []
    for jobs in (1, 3):
        out = str(tmp_path / f"jobs{jobs}")
        base = ["--out-dir", out, "--seed", "31", "--set", "room_count=3", "--set", "episode_count=8"]
        par = base + ["--jobs", str(jobs)]
        _run(["gen-world"] + base)
        _run(["collect", "--mode", "gt"] + par)
        _run(["collect", "--mode", "dagger"] + par)
        _run(["detect-nodes"] + par)
        _run(["supervise", "--backend", "mock"] + par)
        _run(["rollout", "--backend", "scripted"] + par)
        _run(["eval", "--source", "dagger"] + par)
        trees.append(_tree_bytes(out))
    assert set(trees[0]) == set(trees[1])
    for rel in sorted(trees[0]):
        assert trees[0][rel] == trees[1][rel], f"{rel} differs between worker counts"
