"""Reward function family and the custom-reward extension point.

All built-in rewards act on normalized quantities: states and setpoints are
normalized with the observation-space state bounds, controls with the
action-space bounds. Constraint penalties use raw state units; rescaling
via the penalty coefficient is the caller's responsibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, RewardHookError

KINDS = ("tracking_quadratic", "constraint_shaped", "abs_error", "squared_error",
         "sparse", "custom")


@dataclass(frozen=True)
class RewardContext:
    """Step context handed to custom reward hooks."""

    raw_state: np.ndarray
    normalized_state: np.ndarray
    setpoint: np.ndarray  # normalized, full state dimension
    action: np.ndarray  # normalized
    prev_action: np.ndarray  # normalized
    g: np.ndarray  # raw-unit constraint values, positive = violated
    t: int


@dataclass(frozen=True)
class RewardSelector:
    """Chooses and parameterizes the per-step reward."""

    kind: str = "tracking_quadratic"
    Q: np.ndarray | None = None  # state weights, normalized space
    R: np.ndarray | None = None  # control-move weights, normalized space
    penalty: float = 1.0  # constraint penalty coefficient
    epsilon: float = 0.003  # sparse reward threshold
    hook: Callable[[RewardContext], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError("reward.kind", f"must be one of {KINDS}")
        if self.kind == "custom" and self.hook is None:
            raise ConfigurationError("reward.hook", "custom reward needs a hook")
        if self.penalty < 0.0:
            raise ConfigurationError("reward.penalty", "must be >= 0")
        if self.epsilon <= 0.0:
            raise ConfigurationError("reward.epsilon", "must be > 0")
        for label, M in (("Q", self.Q), ("R", self.R)):
            if M is None:
                continue
            M = np.asarray(M, dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ConfigurationError(f"reward.{label}", "must be a square matrix")
            if not np.allclose(M, M.T, atol=1e-12):
                raise ConfigurationError(f"reward.{label}", "must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-10:
                raise ConfigurationError(f"reward.{label}", "must be positive semidefinite")

    def weights(self, n_x: int, n_u: int) -> tuple[np.ndarray, np.ndarray]:
        """Q and R with benchmark defaults: identity Q, zero R."""
        Q = np.eye(n_x) if self.Q is None else np.asarray(self.Q, dtype=float)
        R = np.zeros((n_u, n_u)) if self.R is None else np.asarray(self.R, dtype=float)
        if Q.shape != (n_x, n_x):
            raise ConfigurationError("reward.Q", f"shape {Q.shape} != ({n_x}, {n_x})")
        if R.shape != (n_u, n_u):
            raise ConfigurationError("reward.R", f"shape {R.shape} != ({n_u}, {n_u})")
        return Q, R


def tracking_reward(x_next, target, u, u_prev, Q, R) -> float:
    """Negative quadratic tracking error plus control-move cost, always <= 0."""
    dx = np.asarray(x_next, dtype=float) - np.asarray(target, dtype=float)
    du = np.asarray(u, dtype=float) - np.asarray(u_prev, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if Q.shape != (dx.size, dx.size) or R.shape != (du.size, du.size):
        raise ValueError(f"weight shapes {Q.shape}/{R.shape} do not match "
                         f"deviations {dx.size}/{du.size}")
    return float(-(dx @ Q @ dx + du @ R @ du))


def shaped_reward(r_base: float, g, penalty: float) -> float:
    """Base reward minus penalty * sum of positive constraint values."""
    g = np.asarray(g, dtype=float)
    return float(r_base - penalty * np.sum(np.maximum(0.0, g)))


def abs_error_reward(x_next, target) -> float:
    dev = np.asarray(target, dtype=float) - np.asarray(x_next, dtype=float)
    return float(-np.sum(np.abs(dev)))


def squared_error_reward(x_next, target) -> float:
    dev = np.asarray(target, dtype=float) - np.asarray(x_next, dtype=float)
    return float(-np.sqrt(np.sum(dev * dev)))


def sparse_reward(x_next, target, epsilon: float) -> float:
    """1 when the setpoint error norm is strictly below epsilon, else 0."""
    dev = np.asarray(target, dtype=float) - np.asarray(x_next, dtype=float)
    return 1.0 if np.sqrt(np.sum(dev * dev)) < epsilon else 0.0


def evaluate(selector: RewardSelector, ctx: RewardContext,
             Q: np.ndarray, R: np.ndarray) -> float:
    """Dispatch on the selector kind; Q and R are pre-shaped weights."""
    kind = selector.kind
    if kind == "custom":
        try:
            r = float(selector.hook(ctx))
        except RewardHookError:
            raise
        except Exception as exc:
            raise RewardHookError(f"custom reward hook raised: {exc!r}") from exc
        if not np.isfinite(r):
            raise RewardHookError(f"custom reward hook returned non-finite value {r!r}")
        return r
    if kind in ("tracking_quadratic", "constraint_shaped"):
        base = tracking_reward(ctx.normalized_state, ctx.setpoint,
                               ctx.action, ctx.prev_action, Q, R)
        if kind == "constraint_shaped":
            return shaped_reward(base, ctx.g, selector.penalty)
        return base
    if kind == "abs_error":
        return abs_error_reward(ctx.normalized_state, ctx.setpoint)
    if kind == "squared_error":
        return squared_error_reward(ctx.normalized_state, ctx.setpoint)
    if kind == "sparse":
        return sparse_reward(ctx.normalized_state, ctx.setpoint, selector.epsilon)
    raise ConfigurationError("reward.kind", f"unhandled kind {kind!r}")
