"""Policy abstraction and concrete policies: constant, random, external.

A policy maps a per-step view (observation, raw state, step index, last
reward) to an action. External policies see the noisy observation, exactly
what a learning agent would see; the oracle (see the oracle module) reads
the raw state instead.
"""

from __future__ import annotations

import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import PolicyError, PolicyTimeoutError, ProtocolError
from .wire import dumps_message, parse_message


@dataclass(frozen=True)
class StepView:
    """Everything a policy may look at when choosing an action."""

    t: int
    observation: np.ndarray
    raw_state: np.ndarray | None = None
    last_reward: float | None = None


class Policy:
    """Behavioral contract: deterministic act() given internal state and seed."""

    label = "policy"

    def reset(self, seed=None) -> None:
        """Start a new episode."""

    def act(self, view: StepView) -> np.ndarray:
        raise NotImplementedError

    def episode_end(self, episode_return: float) -> None:
        """Called once after the final step of an episode."""

    def close(self) -> None:
        """Release external resources, if any."""


class ConstantPolicy(Policy):
    def __init__(self, u_fixed, a_low, a_high):
        u = np.asarray(u_fixed, dtype=float).reshape(-1)
        a_low = np.asarray(a_low, dtype=float)
        a_high = np.asarray(a_high, dtype=float)
        if u.shape != a_low.shape:
            raise ValueError(f"constant action needs {a_low.size} entries, got {u.size}")
        if np.any(u < a_low) or np.any(u > a_high):
            raise ValueError(f"constant action {u!r} outside bounds [{a_low}, {a_high}]")
        self.u = u
        self.label = "constant:" + ",".join(repr(float(v)) for v in u)

    def act(self, view: StepView) -> np.ndarray:
        return self.u.copy()


def constant_policy(u_fixed, a_low, a_high) -> ConstantPolicy:
    return ConstantPolicy(u_fixed, a_low, a_high)


class RandomPolicy(Policy):
    label = "random"

    def __init__(self, a_low, a_high, seed=None):
        self.a_low = np.asarray(a_low, dtype=float)
        self.a_high = np.asarray(a_high, dtype=float)
        self._seed = seed
        self._rng = np.random.default_rng(seed)

    def reset(self, seed=None) -> None:
        if seed is not None:
            self._seed = seed
        self._rng = np.random.default_rng(self._seed)

    def act(self, view: StepView) -> np.ndarray:
        return self._rng.uniform(self.a_low, self.a_high)


def random_policy(a_low, a_high, seed=None) -> RandomPolicy:
    return RandomPolicy(a_low, a_high, seed=seed)


# ---------------------------------------------------------------------------
# External policies over the wire protocol
# ---------------------------------------------------------------------------

class _SubprocessTransport:
    """Line transport over a child process's standard streams."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._queue.put(line)
        finally:
            self._queue.put(None)

    def send(self, line: str) -> None:
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"agent process closed its input: {exc}") from exc

    def recv(self, timeout: float) -> str:
        try:
            line = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise PolicyTimeoutError(f"no reply from agent within {timeout} s")
        if line is None:
            raise ProtocolError("agent closed the stream")
        return line

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.terminate()
            self.proc.wait(timeout=2.0)
        except (OSError, subprocess.TimeoutExpired):
            self.proc.kill()


class _SocketTransport:
    """Line transport over a TCP connection to host:port."""

    def __init__(self, address: str, timeout: float):
        host, _, port = address.rpartition(":")
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                             timeout=timeout)
        self._rfile = self.sock.makefile("r")
        self._wfile = self.sock.makefile("w")

    def send(self, line: str) -> None:
        try:
            self._wfile.write(line)
            self._wfile.flush()
        except OSError as exc:
            raise ProtocolError(f"socket send failed: {exc}") from exc

    def recv(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except (TimeoutError, socket.timeout):
            raise PolicyTimeoutError(f"no reply from agent within {timeout} s")
        if not line:
            raise ProtocolError("agent closed the connection")
        return line

    def close(self) -> None:
        for handle in (self._wfile, self._rfile, self.sock):
            try:
                handle.close()
            except OSError:
                pass


class ExternalPolicy(Policy):
    """A policy served by an external process speaking the wire protocol.

    Holds one connection; not shareable across concurrent rollouts.
    """

    def __init__(self, command: str | None = None, address: str | None = None, *,
                 env_name: str, obs_dim: int, action_dim: int, T: int,
                 timeout: float = 10.0):
        if (command is None) == (address is None):
            raise ValueError("give exactly one of command or address")
        self.command = command
        self.address = address
        self.timeout = timeout
        self.env_name = env_name
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.T = T
        self.label = f"external:{command or address}"
        self._transport = None
        self._pending_seed = None
        self._pending_reset = False

    def _connect(self) -> None:
        if self._transport is not None:
            return
        if self.command is not None:
            self._transport = _SubprocessTransport(self.command)
        else:
            self._transport = _SocketTransport(self.address, self.timeout)
        self._transport.send(dumps_message({
            "kind": "hello", "env": self.env_name, "obs_dim": self.obs_dim,
            "action_dim": self.action_dim, "T": self.T,
        }))
        msg = parse_message(self._transport.recv(self.timeout))
        if msg["kind"] != "ready":
            raise ProtocolError(f"expected ready during handshake, got {msg['kind']!r}")
        for field, expected in (("obs_dim", self.obs_dim),
                                ("action_dim", self.action_dim)):
            declared = msg.get(field)
            if declared is not None and int(declared) != expected:
                raise ProtocolError(
                    f"handshake {field} mismatch: agent declared {declared}, "
                    f"environment has {expected}")

    def reset(self, seed=None) -> None:
        self._connect()
        self._pending_seed = seed
        self._pending_reset = True

    def act(self, view: StepView) -> np.ndarray:
        self._connect()
        if self._pending_reset:
            seed = self._pending_seed
            if seed is not None and not isinstance(seed, int):
                seed = list(int(s) for s in seed)
            self._transport.send(dumps_message({
                "kind": "reset", "seed": seed, "observation": view.observation,
            }))
            self._pending_reset = False
        else:
            self._transport.send(dumps_message({
                "kind": "obs", "t": view.t, "observation": view.observation,
                "reward": view.last_reward,
            }))
        msg = parse_message(self._transport.recv(self.timeout))
        if msg["kind"] != "act":
            raise ProtocolError(f"expected act, got {msg['kind']!r}")
        action = np.asarray(msg["action"], dtype=float).reshape(-1)
        if action.size != self.action_dim:
            raise ProtocolError(
                f"action has {action.size} entries, expected {self.action_dim}")
        return action

    def episode_end(self, episode_return: float) -> None:
        if self._transport is None:
            return
        try:
            self._transport.send(dumps_message({"kind": "end",
                                                "return": episode_return}))
        except (ProtocolError, OSError):
            pass  # agent may have exited after its final action

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None


def external_policy(command_or_address: str, *, env_name: str, obs_dim: int,
                    action_dim: int, T: int, timeout: float = 10.0,
                    tcp: bool = False) -> ExternalPolicy:
    kwargs = dict(env_name=env_name, obs_dim=obs_dim, action_dim=action_dim,
                  T=T, timeout=timeout)
    if tcp:
        return ExternalPolicy(address=command_or_address, **kwargs)
    return ExternalPolicy(command=command_or_address, **kwargs)
