"""Discrete-time episodic environment: construct, reset, step, observe.

Observation layout is fixed: raw-unit noisy states, then one entry per
controlled setpoint in schedule order, then one entry per bounded
disturbance in declaration order. Measurement noise is applied to the
state part of the observation only; dynamics always advance the true
state, and constraint information is computed on that true state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EpisodeComplete
from .models import ModelDescriptor, model_registry
from .rewards import RewardContext, RewardSelector, evaluate as evaluate_reward
from .scenario import (Constraint, ConstraintSet, DisturbanceSchedule, Scenario,
                       SetpointSchedule)
from .sim import IntegratorConfig, integrate

Seed = int | Sequence[int] | None


def normalize(z, low, high) -> np.ndarray:
    """Affine map onto [0, 1] per component: (z - low) / (high - low)."""
    z = np.asarray(z, dtype=float)
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if np.any(high <= low):
        raise ConfigurationError("bounds", "normalization needs high > low componentwise")
    return (z - low) / (high - low)


def denormalize(z_bar, low, high) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    z_bar = np.asarray(z_bar, dtype=float)
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if np.any(high <= low):
        raise ConfigurationError("bounds", "normalization needs high > low componentwise")
    return low + z_bar * (high - low)


def apply_noise(state, rng: np.random.Generator, noise_percentage: float,
                o_low, o_high) -> np.ndarray:
    """Additive Gaussian measurement noise, clipped to the state bounds.

    Per component the standard deviation is noise_percentage times the
    observation range of that component.
    """
    if noise_percentage < 0.0:
        raise ConfigurationError("noise_percentage", "must be >= 0")
    state = np.asarray(state, dtype=float)
    if noise_percentage == 0.0:
        return state.copy()
    o_low = np.asarray(o_low, dtype=float)
    o_high = np.asarray(o_high, dtype=float)
    std = noise_percentage * (o_high - o_low)
    noisy = state + rng.normal(0.0, 1.0, size=state.shape) * std
    return np.clip(noisy, o_low, o_high)


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool  # always False: episodes end by truncation only
    truncated: bool
    info: dict


@dataclass
class EnvConfig:
    """Full scenario description for one environment instance.

    model may be a registry name or a ModelDescriptor for custom systems.
    """

    model: str | ModelDescriptor
    T: int
    tsim: float
    setpoints: Mapping[str, Sequence[float]]
    a_space: tuple[Sequence[float], Sequence[float]]
    o_space: tuple[Sequence[float], Sequence[float]]
    x0: Sequence[float]
    noise_percentage: float = 0.0
    disturbances: Mapping[str, Sequence[float]] | None = None
    disturbance_bounds: Mapping[str, Sequence[float]] | None = None
    constraints: Sequence[Constraint | Mapping] | None = None
    reward: RewardSelector = field(default_factory=RewardSelector)
    integrator: IntegratorConfig | None = None

    @classmethod
    def from_scenario(cls, sc: Scenario) -> "EnvConfig":
        reward_doc = dict(sc.reward)
        kind = reward_doc.pop("kind", "tracking_quadratic")
        selector = RewardSelector(
            kind=kind,
            Q=np.asarray(reward_doc["Q"], dtype=float) if "Q" in reward_doc else None,
            R=np.asarray(reward_doc["R"], dtype=float) if "R" in reward_doc else None,
            penalty=float(reward_doc.get("penalty", 1.0)),
            epsilon=float(reward_doc.get("epsilon", 0.003)),
        )
        integ = None
        if sc.integrator:
            integ = IntegratorConfig(substeps=int(sc.integrator.get("substeps", 10)),
                                     method=str(sc.integrator.get("method", "rk4")))
        return cls(
            model=sc.model, T=sc.T, tsim=sc.tsim, setpoints=sc.setpoints,
            a_space=sc.a_space, o_space=sc.o_space, x0=sc.x0,
            noise_percentage=sc.noise_percentage, disturbances=sc.disturbances,
            disturbance_bounds=sc.disturbance_bounds, constraints=sc.constraints,
            reward=selector, integrator=integ,
        )


class Environment:
    """One episodic environment instance. Mutable episode state, single-threaded."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.model: ModelDescriptor = (
            config.model if isinstance(config.model, ModelDescriptor)
            else model_registry(config.model))
        m = self.model

        if config.T < 1:
            raise ConfigurationError("T", "step count must be >= 1")
        if config.tsim <= 0.0:
            raise ConfigurationError("tsim", "total simulated time must be positive")
        self.dt = config.tsim / config.T
        if config.noise_percentage < 0.0:
            raise ConfigurationError("noise_percentage", "must be >= 0")

        self.setpoints = SetpointSchedule.create(config.setpoints, config.T, m)
        self.disturbances = DisturbanceSchedule.create(
            config.disturbances, config.disturbance_bounds, config.T, m)
        self.constraints = ConstraintSet.create(list(config.constraints or []), m)

        a_low = np.asarray(config.a_space[0], dtype=float)
        a_high = np.asarray(config.a_space[1], dtype=float)
        if a_low.shape != (m.n_u,) or a_high.shape != (m.n_u,):
            raise ConfigurationError(
                "a_space", f"bounds must have {m.n_u} entries for model {m.name!r}")
        if np.any(a_high <= a_low):
            raise ConfigurationError("a_space", "needs low < high componentwise")
        self.a_low, self.a_high = a_low, a_high

        n_sp = len(self.setpoints.names)
        o_low = np.asarray(config.o_space[0], dtype=float)
        o_high = np.asarray(config.o_space[1], dtype=float)
        if o_low.shape != (m.n_x + n_sp,) or o_high.shape != (m.n_x + n_sp,):
            raise ConfigurationError(
                "o_space",
                f"bounds must cover {m.n_x} states plus {n_sp} setpoint entries "
                f"(got {o_low.size}); disturbance entries are appended from "
                f"disturbance_bounds")
        if np.any(o_high <= o_low):
            raise ConfigurationError("o_space", "needs low < high componentwise")
        # declared disturbance bounds complete the observation space
        d_bounds = [self.disturbances.bounds[n] for n in self.disturbances.bounded_names]
        self.obs_low = np.concatenate([o_low, [b[0] for b in d_bounds]])
        self.obs_high = np.concatenate([o_high, [b[1] for b in d_bounds]])
        self.state_low = o_low[:m.n_x]
        self.state_high = o_high[:m.n_x]

        x0 = np.asarray(config.x0, dtype=float)
        if x0.shape != o_low.shape:
            raise ConfigurationError(
                "x0", f"must have {o_low.size} entries (states plus setpoint slots)")
        if np.any(x0 < o_low) or np.any(x0 > o_high):
            raise ConfigurationError("x0", "must lie within o_space bounds")
        self.x0_state = x0[:m.n_x]

        self.reward_selector = config.reward
        self._Q, self._R = config.reward.weights(m.n_x, m.n_u)
        self._sp_indices = [m.state_names.index(n) for n in self.setpoints.names]
        self.integrator = config.integrator or IntegratorConfig(
            substeps=m.default_substeps)

        self._base_seed: Seed = 0
        self._episode = -1
        self._rng = np.random.default_rng(0)
        self._state = self.x0_state.copy()
        self._t = 0
        self._prev_action: np.ndarray | None = None
        self._done = True  # reset() must be called before step()

    # -- helpers ------------------------------------------------------------

    @property
    def t(self) -> int:
        return self._t

    @property
    def state(self) -> np.ndarray:
        """True (noise-free) state; the oracle's perfect state estimate."""
        return self._state.copy()

    @property
    def n_obs(self) -> int:
        return self.obs_low.size

    def _target_vector(self, t: int) -> np.ndarray:
        """Normalized full-dimension target: controlled entries take the
        schedule value, uncontrolled entries copy the current state so their
        deviation vanishes."""
        x_bar = normalize(self._state, self.state_low, self.state_high)
        sp = self.setpoints.setpoint_at(t)
        target = x_bar.copy()
        for name, idx in zip(self.setpoints.names, self._sp_indices):
            lo, hi = self.state_low[idx], self.state_high[idx]
            target[idx] = (sp[name] - lo) / (hi - lo)
        return target

    def _observe(self, t: int) -> np.ndarray:
        idx = min(t, self.config.T - 1)
        noisy = apply_noise(self._state, self._rng, self.config.noise_percentage,
                            self.state_low, self.state_high)
        sp = self.setpoints.setpoint_at(idx)
        entries = [noisy]
        entries.append(np.array([sp[n] for n in self.setpoints.names]))
        if self.disturbances.bounded_names:
            d = self.disturbances.disturbance_at(self.model, idx)
            by_name = dict(zip(self.model.disturbance_names, d))
            entries.append(np.array([by_name[n] for n in self.disturbances.bounded_names]))
        return np.concatenate(entries)

    # -- episode API ---------------------------------------------------------

    def reset(self, seed: Seed = None) -> tuple[np.ndarray, dict]:
        """Start a new episode. An explicit seed restarts the seed sequence;
        without one, each reset advances to the next derived stream."""
        if seed is not None:
            self._base_seed = seed
            self._episode = 0
        else:
            self._episode += 1
        entropy = self._base_seed if isinstance(self._base_seed, int) \
            else list(self._base_seed)
        self._rng = np.random.default_rng(
            np.random.SeedSequence(entropy=entropy, spawn_key=(max(self._episode, 0),)))
        self._state = self.x0_state.copy()
        self._t = 0
        self._prev_action = None
        self._done = False
        info = {
            "raw_state": self._state.copy(),
            "disturbance_applied": self.disturbances.disturbance_at(self.model, 0),
        }
        return self._observe(0), info

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeComplete(
                f"episode finished after {self.config.T} steps; call reset()")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape != (self.model.n_u,):
            raise ValueError(f"action must have {self.model.n_u} entries")
        if not np.all(np.isfinite(action)):
            raise ValueError(f"non-finite action rejected: {action!r}")
        u = np.clip(action, self.a_low, self.a_high)

        t = self._t
        d = self.disturbances.disturbance_at(self.model, t)
        x_next = integrate(self.model, self._state, u, d, self.dt, self.integrator)
        self._state = x_next
        self._t = t + 1
        truncated = self._t >= self.config.T
        self._done = truncated

        u_prev = self._prev_action if self._prev_action is not None else u
        self._prev_action = u

        g = self.constraints.values(x_next)
        target_idx = min(self._t, self.config.T - 1)
        ctx = RewardContext(
            raw_state=x_next.copy(),
            normalized_state=normalize(x_next, self.state_low, self.state_high),
            setpoint=self._target_vector(target_idx),
            action=normalize(u, self.a_low, self.a_high),
            prev_action=normalize(u_prev, self.a_low, self.a_high),
            g=g,
            t=t,
        )
        reward = evaluate_reward(self.reward_selector, ctx, self._Q, self._R)

        info = {
            "raw_state": x_next.copy(),
            "constraint_g": g,
            "any_violation": bool(np.any(g > 0.0)),
            "disturbance_applied": d,
            "action_applied": u.copy(),
        }
        return StepResult(observation=self._observe(self._t), reward=float(reward),
                          terminated=False, truncated=truncated, info=info)


def make_env(config: EnvConfig | Scenario) -> Environment:
    """Environment constructor; validates every configuration invariant."""
    if isinstance(config, Scenario):
        config = EnvConfig.from_scenario(config)
    return Environment(config)
