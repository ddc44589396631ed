import json
import os

import pytest

from deskvln.cli import main
from deskvln.engine import nodes_from_jsonl
from deskvln.kinematics import trajectory_from_jsonl
from deskvln.orchestrator import FOVConfig, parse_action_text
from deskvln.policies import dump_decisions
from deskvln.supervision import samples_from_jsonl
from deskvln.world import load_episodes, load_world


BASE = ["--set", "room_count=3", "--set", "episode_count=3", "--seed", "5"]


def run(argv):
    code = main(argv)
    assert code == 0, f"command {argv} exited {code}"


@pytest.fixture
def pipeline_dir(tmp_path):
    out = str(tmp_path / "run")
    run(["gen-world", "--out-dir", out] + BASE)
    return out


def test_gen_world_writes_the_layout(pipeline_dir):
    for name in ("world.json", "episodes.json", "genmeta.json"):
        assert os.path.exists(os.path.join(pipeline_dir, name))
    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)
    assert len(episodes) == 3
    with open(os.path.join(pipeline_dir, "genmeta.json")) as fh:
        meta = json.load(fh)
    assert meta["config"]["room_count"] == 3
    assert meta["config"]["seed"] == 5
    assert set(meta["episodes"]) == {e.episode_id for e in episodes}


def test_gen_world_respects_overrides(tmp_path):
    out = str(tmp_path / "tiny")
    run(["gen-world", "--out-dir", out, "--set", "room_count=2", "--set", "episode_count=1", "--seed", "3"])
    world = load_world(os.path.join(out, "world.json"))
    assert len(world.rooms) == 2
    episodes = load_episodes(os.path.join(out, "episodes.json"), world)
    assert len(episodes) == 1


def test_collect_gt_and_dagger(pipeline_dir):
    run(["collect", "--mode", "gt", "--out-dir", pipeline_dir] + BASE)
    run(["collect", "--mode", "dagger", "--out-dir", pipeline_dir] + BASE)
    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)
    for ep in episodes:
        for sub in ("traj_gt", "traj_dagger"):
            path = os.path.join(pipeline_dir, sub, f"{ep.episode_id}.jsonl")
            assert os.path.exists(path)
            traj = trajectory_from_jsonl(open(path).read())
            assert traj.episode_id == ep.episode_id
            assert traj.terminated_by == "stop"


def test_full_pipeline_products(pipeline_dir):
    run(["collect", "--mode", "dagger", "--out-dir", pipeline_dir] + BASE)
    run(["detect-nodes", "--out-dir", pipeline_dir] + BASE)
    run(["supervise", "--out-dir", pipeline_dir] + BASE)
    run(["rollout", "--backend", "scripted", "--out-dir", pipeline_dir] + BASE)
    run(["eval", "--out-dir", pipeline_dir] + BASE)

    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)
    fov = FOVConfig()
    for ep in episodes:
        traj = trajectory_from_jsonl(
            open(os.path.join(pipeline_dir, "traj_dagger", f"{ep.episode_id}.jsonl")).read()
        )
        ep_id, nodes = nodes_from_jsonl(
            open(os.path.join(pipeline_dir, "nodes", f"{ep.episode_id}.jsonl")).read(),
            traj,
            world,
            fov,
        )
        assert ep_id == ep.episode_id
        sid, samples = samples_from_jsonl(
            open(os.path.join(pipeline_dir, "samples", f"{ep.episode_id}.jsonl")).read()
        )
        assert sid == ep.episode_id
        assert samples
        for s in samples:
            if s.mode == "[ACT]":
                parse_action_text(s.target)

    with open(os.path.join(pipeline_dir, "report.json")) as fh:
        report = json.load(fh)
    assert set(report["aggregate"]) == {"NE", "OS", "SR", "SPL", "nDTW"}
    assert report["aggregate"]["SR"] == 100.0
    assert len(report["episodes"]) == len(episodes)
    assert os.path.exists(os.path.join(pipeline_dir, "report.txt"))


def test_eval_source_selects_the_trajectory_set(pipeline_dir, capsys):
    run(["collect", "--mode", "gt", "--out-dir", pipeline_dir] + BASE)
    run(["eval", "--source", "gt", "--out-dir", pipeline_dir] + BASE)
    out = capsys.readouterr().out
    assert "mean" in out
    with open(os.path.join(pipeline_dir, "report.json")) as fh:
        assert json.load(fh)["aggregate"]["SR"] == 100.0


def test_episode_filter_limits_the_work(pipeline_dir):
    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)
    only = episodes[0].episode_id
    run(["collect", "--mode", "gt", "--episodes", only, "--out-dir", pipeline_dir] + BASE)
    produced = os.listdir(os.path.join(pipeline_dir, "traj_gt"))
    assert produced == [f"{only}.jsonl"]


def test_inspect_prints_nodes_and_writes_traces(pipeline_dir, capsys):
    run(["collect", "--mode", "dagger", "--out-dir", pipeline_dir] + BASE)
    run(["detect-nodes", "--out-dir", pipeline_dir] + BASE)
    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)
    ep = episodes[0]
    run(["inspect", "--episode", ep.episode_id, "--out-dir", pipeline_dir] + BASE)
    out = capsys.readouterr().out
    assert f"{ep.episode_id}:" in out
    assert "instruction:" in out

    svg_path = os.path.join(pipeline_dir, "trace.svg")
    text_path = os.path.join(pipeline_dir, "trace.txt")
    assert os.path.exists(text_path)
    svg = open(svg_path).read()
    traj = trajectory_from_jsonl(
        open(os.path.join(pipeline_dir, "traj_dagger", f"{ep.episode_id}.jsonl")).read()
    )
    _eid, nodes = nodes_from_jsonl(
        open(os.path.join(pipeline_dir, "nodes", f"{ep.episode_id}.jsonl")).read(),
        traj,
        world,
        FOVConfig(),
    )
    for node in nodes:
        assert f'data-step="{node.step}"' in svg
        assert f"step {node.step:4d} {node.node_type}" in out


class _Recorder:
    shareable = False

    def __init__(self, inner):
        self.inner = inner
        self.decisions = []

    def decide(self, instruction, fused_context, frames):
        d = self.inner.decide(instruction, fused_context, frames)
        self.decisions.append(d)
        return d


def test_rollout_replay_round_trip(pipeline_dir, tmp_path):
    # record scripted decisions in-process, then replay them through the CLI
    # and expect byte-identical trajectories
    from deskvln.config import PipelineConfig
    from deskvln.orchestrator import run_rollout
    from deskvln.policies import ScriptedExpertBackend

    run(["rollout", "--backend", "scripted", "--out-dir", pipeline_dir] + BASE)
    world = load_world(os.path.join(pipeline_dir, "world.json"))
    episodes = load_episodes(os.path.join(pipeline_dir, "episodes.json"), world)

    first = {
        ep.episode_id: open(
            os.path.join(pipeline_dir, "rollouts", f"{ep.episode_id}.jsonl")
        ).read()
        for ep in episodes
    }

    replay_dir = str(tmp_path / "decisions")
    os.makedirs(replay_dir)
    rollout_cfg = PipelineConfig().rollout()
    for ep in episodes:
        recorder = _Recorder(ScriptedExpertBackend(world, ep))
        run_rollout(world, ep, recorder, rollout_cfg)
        with open(os.path.join(replay_dir, f"{ep.episode_id}.jsonl"), "w") as fh:
            fh.write(dump_decisions(recorder.decisions))

    run(
        ["rollout", "--backend", "replay", "--replay-dir", replay_dir, "--out-dir", pipeline_dir]
        + BASE
    )
    for ep in episodes:
        path = os.path.join(pipeline_dir, "rollouts", f"{ep.episode_id}.jsonl")
        assert open(path).read() == first[ep.episode_id]


def test_remote_backend_requires_an_endpoint(pipeline_dir, capsys):
    code = main(["rollout", "--backend", "remote", "--out-dir", pipeline_dir] + BASE)
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_missing_world_is_a_clean_error(tmp_path, capsys):
    code = main(["collect", "--mode", "gt", "--out-dir", str(tmp_path / "nowhere")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_jobs_flag_produces_identical_bytes(tmp_path):
    a = str(tmp_path / "serial")
    b = str(tmp_path / "parallel")
    for out, jobs in ((a, "1"), (b, "2")):
        run(["gen-world", "--out-dir", out, "--jobs", jobs] + BASE)
        run(["collect", "--mode", "dagger", "--out-dir", out, "--jobs", jobs] + BASE)
        run(["detect-nodes", "--out-dir", out, "--jobs", jobs] + BASE)
    for sub in ("traj_dagger", "nodes"):
        for name in sorted(os.listdir(os.path.join(a, sub))):
            fa = open(os.path.join(a, sub, name)).read()
            fb = open(os.path.join(b, sub, name)).read()
            assert fa == fb, f"{sub}/{name} differs between --jobs 1 and --jobs 2"
