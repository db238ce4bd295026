"""Rollout harness and evaluation metrics.

Episode i always draws from RNG streams derived from (master_seed, i), so
parallel and serial execution produce identical per-episode results.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .env import Environment, EnvConfig, make_env
from .errors import PolicyError, ProtocolError
from .policy import Policy, StepView

NORMALIZATIONS = ("none", "per_step", "minmax")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def median(returns) -> float:
    """Sample median; even counts average the two central order statistics."""
    returns = np.asarray(returns, dtype=float)
    if returns.size == 0:
        raise ValueError("median needs at least one sample")
    return float(np.median(returns))


def mad(returns) -> float:
    """Median absolute deviation from the median."""
    returns = np.asarray(returns, dtype=float)
    if returns.size == 0:
        raise ValueError("mad needs at least one sample")
    return float(np.median(np.abs(returns - np.median(returns))))


def std_dev(returns) -> float | None:
    """Sample standard deviation (N-1 denominator); None below two samples."""
    returns = np.asarray(returns, dtype=float)
    if returns.size < 2:
        return None
    return float(np.std(returns, ddof=1))


def median_and_std(returns) -> tuple[float, float | None]:
    return median(returns), std_dev(returns)


def optimality_gap(reference_returns, policy_returns,
                   normalization: str = "per_step",
                   steps: int | None = None) -> float:
    """Difference of median returns after the selected normalization.

    per_step divides each return by the episode step count; minmax rescales
    with the min and max of the pooled samples.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    ref = np.asarray(reference_returns, dtype=float)
    pol = np.asarray(policy_returns, dtype=float)
    if ref.size == 0 or pol.size == 0:
        raise ValueError("optimality gap needs nonempty samples on both sides")
    if normalization == "per_step":
        if steps is None:
            raise ValueError("per_step normalization needs the episode step count")
        ref = ref / steps
        pol = pol / steps
    elif normalization == "minmax":
        pool = np.concatenate([ref, pol])
        lo, hi = pool.min(), pool.max()
        if hi > lo:
            ref = (ref - lo) / (hi - lo)
            pol = (pol - lo) / (hi - lo)
        else:
            return 0.0
    return float(np.median(ref) - np.median(pol))


def violation_probability(per_episode_flags) -> float:
    """Fraction of episodes whose trajectory violates any constraint anywhere."""
    flags = np.asarray(per_episode_flags, dtype=bool)
    if flags.size == 0:
        raise ValueError("violation probability needs at least one episode")
    return float(np.mean(flags))


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """One episode as a flat table, matching the trajectory CSV layout."""

    header: list[str]
    rows: list[list[float]]
    episode: int
    episode_return: float
    violated: bool


@dataclass
class RolloutResult:
    returns: np.ndarray  # successful episodes, in episode order
    episode_indices: list[int]
    violation_flags: np.ndarray
    trajectories: list[Trajectory] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    solver_diagnostics: list[dict] = field(default_factory=list)


def trajectory_header(env: Environment) -> list[str]:
    cols = ["t"]
    cols += list(env.model.state_names)
    cols += [f"obs_{i}" for i in range(env.n_obs)]
    cols += list(env.model.input_names)
    cols.append("reward")
    cols += [f"g_{i}" for i in range(len(env.constraints))]
    cols.append("violation")
    return cols


def run_episode(env: Environment, policy: Policy, episode: int,
                master_seed, gamma: float = 1.0,
                keep_trajectory: bool = True) -> Trajectory:
    policy.reset(seed=(master_seed, episode, 1))
    obs, _ = env.reset(seed=(master_seed, episode, 0))
    episode_return = 0.0
    discount = 1.0
    violated = False
    last_reward: float | None = None
    rows: list[list[float]] = []
    for t in range(env.config.T):
        view = StepView(t=t, observation=obs, raw_state=env.state,
                        last_reward=last_reward)
        action = policy.act(view)
        result = env.step(action)
        episode_return += discount * result.reward
        discount *= gamma
        violated = violated or result.info["any_violation"]
        if keep_trajectory:
            rows.append([
                float(t),
                *result.info["raw_state"].tolist(),
                *result.observation.tolist(),
                *result.info["action_applied"].tolist(),
                result.reward,
                *result.info["constraint_g"].tolist(),
                float(result.info["any_violation"]),
            ])
        obs = result.observation
        last_reward = result.reward
    policy.episode_end(episode_return)
    return Trajectory(header=trajectory_header(env), rows=rows, episode=episode,
                      episode_return=episode_return, violated=violated)


def rollout(config: EnvConfig, policy: Policy | Callable[[], Policy],
            n_episodes: int, master_seed: int = 0, parallelism: int = 1,
            gamma: float = 1.0, keep_trajectories: bool = True) -> RolloutResult:
    """Roll a policy over n_episodes independent episodes.

    policy may be an instance (serial execution) or a zero-argument factory;
    a factory is required for parallelism > 1 because policies hold mutable
    episode state and possibly external connections.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    factory: Callable[[], Policy]
    if callable(policy) and not isinstance(policy, Policy):
        factory = policy
    else:
        if parallelism > 1:
            raise ValueError("parallel rollouts need a policy factory, not an instance")
        instance = policy
        factory = lambda: instance  # noqa: E731

    local = threading.local()
    created: list[Policy] = []
    lock = threading.Lock()

    def worker_policy() -> Policy:
        p = getattr(local, "policy", None)
        if p is None:
            p = factory()
            local.policy = p
            with lock:
                created.append(p)
        return p

    def run_one(episode: int):
        env = make_env(config)
        p = worker_policy()
        try:
            traj = run_episode(env, p, episode, master_seed, gamma,
                               keep_trajectories)
        except (PolicyError, ProtocolError) as exc:
            return episode, None, exc
        diag = list(getattr(p, "diagnostics", []) or [])
        return episode, traj, diag

    results = []
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_one, range(n_episodes)))
    else:
        results = [run_one(i) for i in range(n_episodes)]

    for p in created:
        p.close()

    out = RolloutResult(returns=np.array([]), episode_indices=[],
                        violation_flags=np.array([], dtype=bool))
    returns: list[float] = []
    flags: list[bool] = []
    for episode, traj, extra in sorted(results, key=lambda r: r[0]):
        if traj is None:
            exc = extra
            out.failures.append({
                "episode": episode,
                "error": str(exc),
                "category": "protocol" if isinstance(exc, ProtocolError) else "policy",
            })
            continue
        returns.append(traj.episode_return)
        flags.append(traj.violated)
        out.episode_indices.append(episode)
        out.trajectories.append(traj)
        if extra:
            out.solver_diagnostics.append({"episode": episode, "solves": extra})
    out.returns = np.asarray(returns, dtype=float)
    out.violation_flags = np.asarray(flags, dtype=bool)
    return out


@dataclass
class EvaluationReport:
    """Per-policy return samples and the derived benchmark metrics."""

    policy_label: str
    n_episodes: int
    returns: np.ndarray
    per_step_returns: np.ndarray
    median_return: float
    mad: float
    std: float | None
    violation_probability: float
    violation_flags: np.ndarray
    gamma: float = 1.0
    optimality_gap: float | None = None
    gap_reference: str | None = None
    gap_normalization: str | None = None
    failures: list[dict] = field(default_factory=list)
    solver_diagnostics: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_label,
            "episodes": self.n_episodes,
            "episodes_failed": len(self.failures),
            "gamma": self.gamma,
            "returns": self.returns.tolist(),
            "per_step_returns": self.per_step_returns.tolist(),
            "median_return": self.median_return,
            "mad": self.mad,
            "std": self.std,
            "violation_probability": self.violation_probability,
            "violation_flags": [bool(v) for v in self.violation_flags],
            "optimality_gap": self.optimality_gap,
            "gap_reference": self.gap_reference,
            "gap_normalization": self.gap_normalization,
            "failures": self.failures,
            "solver_diagnostics": self.solver_diagnostics,
        }


def build_report(label: str, result: RolloutResult, steps: int,
                 gamma: float = 1.0) -> EvaluationReport:
    if result.returns.size == 0:
        raise PolicyError(
            f"policy {label!r} produced no successful episodes: "
            + "; ".join(f["error"] for f in result.failures))
    return EvaluationReport(
        policy_label=label,
        n_episodes=result.returns.size + len(result.failures),
        returns=result.returns,
        per_step_returns=result.returns / steps,
        median_return=median(result.returns),
        mad=mad(result.returns),
        std=std_dev(result.returns),
        violation_probability=violation_probability(result.violation_flags),
        violation_flags=result.violation_flags,
        gamma=gamma,
        failures=result.failures,
        solver_diagnostics=result.solver_diagnostics,
    )


def attach_gap(report: EvaluationReport, reference: EvaluationReport,
               normalization: str = "per_step", steps: int | None = None) -> None:
    report.optimality_gap = optimality_gap(
        reference.returns, report.returns, normalization=normalization, steps=steps)
    report.gap_reference = reference.policy_label
    report.gap_normalization = normalization
