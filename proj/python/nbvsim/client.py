# Copyright 2026 The nbvsim Authors
# SPDX-License-Identifier: Apache-2.0
"""Blocking JSON-lines client for a running `nbv serve`."""

import json
import os
import socket


class ProtocolError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def _bind_from_env(default="127.0.0.1:5555"):
    host, _, port = os.environ.get("NBV_BIND", default).rpartition(":")
    return host or "127.0.0.1", int(port)


class RemoteEnv:
    """reset/step over the wire; observations are the decoded JSON objects."""

    def __init__(self, host=None, port=None, frames=False, grid_dims=None, timeout=60.0):
        if host is None or port is None:
            env_host, env_port = _bind_from_env()
            host = host or env_host
            port = port or env_port
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")
        hello = {"type": "hello", "want_frames": frames}
        if grid_dims is not None:
            hello["grid_dims"] = list(grid_dims)
        self.info = self.call(hello)

    def call(self, msg):
        self._file.write(json.dumps(msg).encode() + b"\n")
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        reply = json.loads(line)
        if reply.get("type") == "error":
            raise ProtocolError(reply.get("code", "unknown"), reply.get("message", ""))
        return reply

    def reset(self, seed=0, scene=None, start=None):
        msg = {"type": "reset", "seed": seed}
        if scene is not None:
            msg["scene"] = scene
        if start is not None:
            msg["start"] = list(start)
        return self.call(msg)["obs"]

    def step(self, action):
        reply = self.call({"type": "step", "action": list(action)})
        return reply["obs"], reply["reward"], reply["terminated"], reply["info"]

    def close(self):
        try:
            self.call({"type": "close"})
        except (OSError, ConnectionError):
            pass
        finally:
            self._file.close()
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
