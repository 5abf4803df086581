# Copyright 2026 The nbvsim Authors
# SPDX-License-Identifier: Apache-2.0

import csv
import json
import os
import subprocess

import numpy as np
import pytest

import nbvsim

CONFIG = {"intrinsics": {"width": 48, "height": 48}, "surface_samples": 20000}


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("scenes")
    ids = nbvsim.generate_scene_set(2, 7, str(d))
    assert ids == ["house_000", "house_001"]
    return d / "scenes.json"


@pytest.fixture(scope="module")
def scenes(manifest):
    return nbvsim.load_scenes(manifest, CONFIG)


def test_scene_properties(scenes):
    assert [s.id for s in scenes] == ["house_000", "house_001"]
    for s in scenes:
        assert s.watertight
        assert s.gt_voxel_count > 0
        assert np.asarray(s.gt_points).shape == (20000, 3)


def test_config_expansion_and_errors():
    cfg = nbvsim.expand_config(CONFIG)
    assert cfg["intrinsics"]["width"] == 48
    assert cfg["max_steps"] == 100
    with pytest.raises(nbvsim.ParseError, match="bogus"):
        nbvsim.expand_config({"bogus": 1})


def test_env_reward_identity(scenes):
    env = nbvsim.Env(scenes[0], CONFIG)
    obs = env.reset()
    assert obs["step"] == 0
    assert len(obs["grid_states"]) == 20 ** 3
    cr = obs["coverage"]
    for action in ([-8, -8, 6, -0.3, 0.7], [8, -8, 6, -0.3, 2.3], [8, 8, 6, -0.3, -2.3]):
        obs, reward, done, info = env.step(action)
        assert reward == (info["cr"] - cr) / 100.0
        cr = info["cr"]
        assert not done
    assert env.coverage[-1] == cr
    assert len(env.poses) == 4
    with pytest.raises(nbvsim.EpisodeError):
        env.reset(start=[0, 0, 1, 0, 0])


def test_metrics():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(200, 3)), rng.normal(size=(150, 3))
    d = np.linalg.norm(a[:, None] - b[None], axis=2)
    brute = 50.0 * (d.min(axis=1).mean() + d.min(axis=0).mean())
    assert abs(nbvsim.chamfer_cm(a, b) - brute) < 1e-9
    assert nbvsim.mean_auc([0.0, 100.0]) == 50.0
    with pytest.raises(nbvsim.InvariantError):
        nbvsim.mean_auc([])


def test_remote_env_matches_in_process(manifest, scenes):
    server = nbvsim.Server(str(manifest), json.dumps(CONFIG))
    server.start("127.0.0.1:0")
    try:
        actions = [[-8, -8, 6, -0.3, 0.7], [8, -8, 6, -0.3, 2.3], [8, 8, 6, -0.3, -2.3]]
        local = nbvsim.Env(scenes[1], CONFIG)
        local.reset()
        with nbvsim.RemoteEnv("127.0.0.1", server.port, frames=True) as remote:
            assert remote.info["version"] == nbvsim.PROTOCOL_VERSION
            obs = remote.reset(seed=0, scene="house_001")
            assert len(obs["frames"]) == 1
            for act in actions:
                _, r_remote, _, info = remote.step(act)
                _, r_local, _, _ = local.step(act)
                assert r_remote == r_local
            assert info["cr"] == local.coverage[-1]
            with pytest.raises(nbvsim.ProtocolError) as err:
                remote.step([1, 2, 3])
            assert err.value.code == "bad_action"
    finally:
        server.stop()


def test_run_benchmark(manifest, tmp_path):
    rows = nbvsim.run_benchmark(manifest, "uniform-hemisphere", 3, seeds=[0], out=tmp_path, config=CONFIG)
    assert len(rows) == 1 and rows[0]["episodes"] == 2
    with open(tmp_path / "summary.csv", newline="") as f:
        summary = list(csv.DictReader(f))
    assert summary[0]["policy"] == "uniform-hemisphere"
    assert float(summary[0]["final_cr"]) == rows[0]["mean_final_cr"]


@pytest.mark.skipif(not os.environ.get("NBV_CLI"), reason="nbv executable not provided")
def test_cli_run(manifest, tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    out = subprocess.run(
        [os.environ["NBV_CLI"], "run", "--scenes", str(manifest), "--policy", "random", "--views", "3",
         "--seeds", "0-1", "--out", str(tmp_path / "out"), "--config", str(cfg)],
        capture_output=True, text=True, check=True)
    assert out.stdout.splitlines()[0] == "scene,policy,views,auc,final_cr,chamfer_cm,reason"
    assert (tmp_path / "out" / "reports.csv").read_text().count("\n") == 5
