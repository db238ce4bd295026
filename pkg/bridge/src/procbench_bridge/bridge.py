"""Gymnasium-style adapter over the engine's wire protocol.

The engine runs as a separate process in serve mode and owns all scenario
semantics; this adapter only translates reset/step calls into wire
messages, so there is exactly one implementation of the environment. When
the gymnasium package is available the environment subclasses
gymnasium.Env and uses gymnasium.spaces.Box; otherwise structurally
identical stand-ins keep the same observation_space/action_space/reset/
step surface.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

try:
    import gymnasium as _gym
    from gymnasium.spaces import Box as _Box

    _ENV_BASE = _gym.Env
    HAVE_GYMNASIUM = True
except ImportError:  # pragma: no cover - exercised only without gymnasium
    HAVE_GYMNASIUM = False

    class _Box:
        """Minimal stand-in for gymnasium.spaces.Box."""

        def __init__(self, low, high, dtype=np.float64):
            self.low = np.asarray(low, dtype=dtype)
            self.high = np.asarray(high, dtype=dtype)
            self.dtype = dtype
            self.shape = self.low.shape

        def contains(self, x) -> bool:
            x = np.asarray(x, dtype=self.dtype)
            return (x.shape == self.shape and np.all(x >= self.low)
                    and np.all(x <= self.high))

        def sample(self, rng: np.random.Generator | None = None) -> np.ndarray:
            rng = rng or np.random.default_rng()
            return rng.uniform(self.low, self.high)

    class _EnvBase:
        metadata: dict = {"render_modes": []}

        def close(self) -> None:
            pass

    _ENV_BASE = _EnvBase


class BridgeError(RuntimeError):
    """Engine process or protocol failure surfaced to the trainer."""


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _fmt(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + _fmt(v)
                              for k, v in value.items()) + "}"
    raise BridgeError(f"cannot serialize {value!r}")


@dataclass
class BridgeConfig:
    """How to reach the engine: executable, scenario, transport, timeout."""

    scenario: str
    engine: Sequence[str] | str | None = None  # defaults to this interpreter
    mode: str = "streams"  # streams | socket
    port: int = 0  # socket mode; 0 picks a free port
    timeout: float = 10.0

    def engine_command(self) -> list[str]:
        if self.engine is None:
            return [sys.executable, "-m", "procbench"]
        if isinstance(self.engine, str):
            return shlex.split(self.engine)
        return list(self.engine)


class EngineClientEnv(_ENV_BASE):
    """An environment living in an engine subprocess, driven over the wire."""

    metadata = {"render_modes": []}

    def __init__(self, config: BridgeConfig):
        self.config = config
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None
        self._pending_return: float | None = None
        self._connect()
        hello = self._recv()
        if hello.get("kind") != "hello":
            raise BridgeError(f"expected hello, got {hello!r}")
        self.spec_info = hello
        self.T = int(hello["T"])
        self.observation_space = _Box(np.asarray(hello["obs_low"], dtype=np.float64),
                                      np.asarray(hello["obs_high"], dtype=np.float64),
                                      dtype=np.float64)
        self.action_space = _Box(np.asarray(hello["action_low"], dtype=np.float64),
                                 np.asarray(hello["action_high"], dtype=np.float64),
                                 dtype=np.float64)
        if len(hello["obs_low"]) != int(hello["obs_dim"]) \
                or len(hello["action_low"]) != int(hello["action_dim"]):
            raise BridgeError("handshake dimensions disagree with space bounds")
        self._send({"kind": "ready", "obs_dim": hello["obs_dim"],
                    "action_dim": hello["action_dim"]})

    # -- transport -----------------------------------------------------------

    def _connect(self) -> None:
        cmd = self.config.engine_command() + ["serve", "--scenario",
                                              self.config.scenario]
        if self.config.mode == "socket":
            port = self.config.port or _free_port()
            self._proc = subprocess.Popen(cmd + ["--port", str(port)])
            deadline = time.monotonic() + self.config.timeout
            last_error = None
            while time.monotonic() < deadline:
                try:
                    self._sock = socket.create_connection(("127.0.0.1", port),
                                                          timeout=1.0)
                    break
                except OSError as exc:
                    last_error = exc
                    time.sleep(0.05)
            else:
                raise BridgeError(f"engine did not open port {port}: {last_error}")
            self._rfile = self._sock.makefile("r")
            self._wfile = self._sock.makefile("w")
        elif self.config.mode == "streams":
            self._proc = subprocess.Popen(cmd, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE, text=True,
                                          bufsize=1)
            self._rfile = self._proc.stdout
            self._wfile = self._proc.stdin
        else:
            raise BridgeError(f"unknown connection mode {self.config.mode!r}")
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self._rfile:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        finally:
            self._lines.put(None)

    def _send(self, msg: dict) -> None:
        try:
            self._wfile.write(_fmt(msg) + "\n")
            self._wfile.flush()
        except OSError as exc:
            raise BridgeError(f"engine went away: {exc}") from exc

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.config.timeout)
        except queue.Empty:
            raise BridgeError(f"no reply from engine within {self.config.timeout} s")
        if line is None:
            raise BridgeError("engine closed the connection")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"malformed engine message {line!r}: {exc}") from exc
        return msg

    # -- environment API ------------------------------------------------------

    def reset(self, *, seed: int | None = None, options: dict | None = None):
        if HAVE_GYMNASIUM:
            super().reset(seed=seed)
        self._pending_return = None
        self._send({"kind": "reset", "seed": seed})
        msg = self._recv()
        if msg.get("kind") != "obs" or msg.get("t") != 0:
            raise BridgeError(f"unexpected reset reply {msg!r}")
        return np.asarray(msg["observation"], dtype=np.float64), {}

    def step(self, action):
        self._send({"kind": "act",
                    "action": np.asarray(action, dtype=np.float64).reshape(-1)})
        msg = self._recv()
        if msg.get("kind") != "obs":
            raise BridgeError(f"unexpected step reply {msg!r}")
        truncated = bool(msg.get("truncated"))
        info = dict(msg.get("info") or {})
        if truncated:
            end = self._recv()
            if end.get("kind") != "end":
                raise BridgeError(f"expected end after final step, got {end!r}")
            info["episode_return"] = float(end["return"])
        obs = np.asarray(msg["observation"], dtype=np.float64)
        return obs, float(msg["reward"]), False, truncated, info

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._wfile.close()
        except OSError:
            pass
        if self._sock is not None:
            try:
                self._rfile.close()
                self._sock.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=3.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
        self._proc = None


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def bridge_make(config: BridgeConfig | str) -> EngineClientEnv:
    """Construct the adapter; a bare string is treated as the scenario."""
    if isinstance(config, str):
        config = BridgeConfig(scenario=config)
    return EngineClientEnv(config)
