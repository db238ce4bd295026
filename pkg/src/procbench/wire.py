"""Line-delimited message protocol between the engine and external processes.

One JSON object per line. Floats are rendered with 17 significant digits so
values survive the round trip bit-exactly. Message kinds:

  hello  engine -> peer   env name, dimensions, episode length, space bounds
  ready  peer -> engine   optional obs_dim/action_dim echo for validation
  reset  new episode; carries the seed and, when the engine drives an
         external policy, the initial observation
  obs    step index, observation, last reward, truncated flag, info
  act    action array
  end    episode return

The same messages serve two arrangements: the engine driving an external
policy (policy module) and the engine serving transitions to an external
trainer (serve mode, used by the bridge).
"""

from __future__ import annotations

import json
from typing import IO

import numpy as np

from .env import Environment
from .errors import ProtocolError

KINDS = ("hello", "ready", "reset", "obs", "act", "end")


def _render(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ProtocolError(f"non-finite number {v!r} cannot be sent")
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _render(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_render(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + _render(v)
                              for k, v in value.items()) + "}"
    raise ProtocolError(f"cannot serialize {type(value).__name__} value {value!r}")


def dumps_message(msg: dict) -> str:
    if "kind" not in msg:
        raise ProtocolError(f"message without kind: {msg!r}")
    return _render(msg) + "\n"


def parse_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc}", payload=line.strip())
    if not isinstance(msg, dict) or "kind" not in msg:
        raise ProtocolError("message is not an object with a kind", payload=line.strip())
    if msg["kind"] not in KINDS:
        raise ProtocolError(f"unknown message kind {msg['kind']!r}",
                            payload=line.strip())
    return msg


def hello_message(env: Environment) -> dict:
    return {
        "kind": "hello",
        "env": env.model.name,
        "obs_dim": env.n_obs,
        "action_dim": env.model.n_u,
        "T": env.config.T,
        "obs_low": env.obs_low,
        "obs_high": env.obs_high,
        "action_low": env.a_low,
        "action_high": env.a_high,
    }


def serve_environment(env: Environment, rfile: IO[str], wfile: IO[str]) -> int:
    """Serve episodes over a line stream until the peer disconnects.

    The peer drives: it sends reset/act, the engine answers with obs and,
    after the final step of an episode, an end message carrying the
    undiscounted episode return. Returns the number of served episodes.
    """

    def send(msg: dict) -> None:
        wfile.write(dumps_message(msg))
        wfile.flush()

    send(hello_message(env))
    line = rfile.readline()
    if not line:
        return 0
    msg = parse_message(line)
    if msg["kind"] != "ready":
        raise ProtocolError(f"expected ready, got {msg['kind']!r}", payload=line.strip())

    episodes = 0
    episode_return = 0.0
    while True:
        line = rfile.readline()
        if not line:
            return episodes
        if not line.strip():
            continue
        msg = parse_message(line)
        if msg["kind"] == "reset":
            seed = msg.get("seed")
            obs, _ = env.reset(seed=seed)
            episode_return = 0.0
            send({"kind": "obs", "t": 0, "observation": obs, "reward": None,
                  "truncated": False})
        elif msg["kind"] == "act":
            result = env.step(np.asarray(msg["action"], dtype=float))
            episode_return += result.reward
            info = result.info
            send({
                "kind": "obs",
                "t": env.t,
                "observation": result.observation,
                "reward": result.reward,
                "truncated": result.truncated,
                "info": {
                    "raw_state": info["raw_state"],
                    "constraint_g": info["constraint_g"],
                    "any_violation": info["any_violation"],
                    "disturbance_applied": info["disturbance_applied"],
                },
            })
            if result.truncated:
                episodes += 1
                send({"kind": "end", "return": episode_return})
        else:
            raise ProtocolError(f"unexpected {msg['kind']!r} while serving",
                                payload=line.strip())
