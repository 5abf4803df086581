# Copyright 2026 The nbvsim Authors
# SPDX-License-Identifier: Apache-2.0
"""Active 3D reconstruction simulator and next-best-view benchmark."""

import json

try:
    from . import _nbvsim as _core
except ImportError:  # build tree: the extension sits next to, not inside, the package
    import _nbvsim as _core

from .client import ProtocolError, RemoteEnv

EpisodeError = _core.EpisodeError
InvariantError = _core.InvariantError
ParseError = _core.ParseError
PROTOCOL_VERSION = _core.PROTOCOL_VERSION
Scene = _core.Scene
Server = _core.Server
chamfer_cm = _core.chamfer_cm
generate_scene_set = _core.generate_scene_set
mean_auc = _core.mean_auc


def _config_text(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else json.dumps(config)


def expand_config(config=None):
    """Config dict with every default filled in."""
    return json.loads(_core.config_json(_config_text(config)))


def load_scenes(manifest, config=None):
    return _core.load_scenes(str(manifest), _config_text(config))


def run_benchmark(scenes, policy, views, seeds=(0,), out="", config=None):
    return _core.run_benchmark(str(scenes), policy, views, list(seeds), str(out),
                               _config_text(config))


class Env:
    """In-process environment with the same observation dicts as the wire."""

    def __init__(self, scene, config=None):
        self._env = _core.Env(_config_text(config), scene)

    def reset(self, start=None):
        return json.loads(self._env.reset(None if start is None else list(start)))

    def step(self, action):
        obs, reward, done, info = self._env.step(list(action))
        return json.loads(obs), reward, done, info

    @property
    def coverage(self):
        return self._env.coverage

    @property
    def poses(self):
        return self._env.poses


__all__ = [
    "Env", "EpisodeError", "InvariantError", "PROTOCOL_VERSION", "ParseError", "ProtocolError",
    "RemoteEnv", "Scene", "Server", "chamfer_cm", "expand_config", "generate_scene_set",
    "load_scenes", "mean_auc", "run_benchmark",
]
