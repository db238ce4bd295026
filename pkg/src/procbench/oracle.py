"""Receding-horizon NMPC with a perfect model and perfect forecasts.

The finite-horizon optimal control problem is transcribed by multiple
shooting: the decision variables are the N normalized control vectors,
states are obtained by forward RK4 simulation of the true model, and the
stage costs are quadratic in normalized deviations. State constraints are
handled with an exact l1 penalty whose weight is escalated (x10, up to a
configurable number of escalations) until the returned solution is
feasible. The box on the controls is enforced by the projected
quasi-Newton solver itself (L-BFGS-B); gradients come from forward finite
differences evaluated as one batched rollout per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._fastpath import batch_rollout
from .env import Environment, normalize
from .errors import ConfigurationError
from .models import ModelDescriptor
from .policy import Policy, StepView
from .scenario import ConstraintSet
from .sim import IntegratorConfig

_BLOWUP_OBJECTIVE = 1e12


@dataclass
class OcpSpec:
    """Oracle problem: horizon, weights, bounds, forecasts and solver knobs."""

    model: ModelDescriptor
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    a_low: np.ndarray
    a_high: np.ndarray
    state_low: np.ndarray
    state_high: np.ndarray
    dt: float
    T: int  # schedule length; forecasts are clamped to the last entry
    target_schedule: np.ndarray  # (T, n_x) normalized targets, 0 where uncontrolled
    target_mask: np.ndarray  # (n_x,) 1.0 for controlled states
    disturbance_schedule: np.ndarray  # (T, n_d) raw disturbance forecast
    constraints: ConstraintSet
    integrator: IntegratorConfig
    max_iterations: int = 200
    tolerance: float = 1e-7  # projected-gradient tolerance
    fd_step: float = 1e-6  # forward-difference step, normalized units
    penalty_weight: float = 1e2  # initial exact-penalty weight
    penalty_escalations: int = 3
    constraint_margin_frac: float = 1e-3  # tightening, fraction of state range
    multistart: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("oracle.horizon", "must be >= 1")
        if self.tolerance <= 0.0:
            raise ConfigurationError("oracle.tolerance", "must be > 0")

    @classmethod
    def from_environment(cls, env: Environment, horizon: int, **overrides) -> "OcpSpec":
        m = env.model
        Q, R = env.reward_selector.weights(m.n_x, m.n_u)
        T = env.config.T
        mask = np.zeros(m.n_x)
        targets = np.zeros((T, m.n_x))
        for name in env.setpoints.names:
            idx = m.state_names.index(name)
            mask[idx] = 1.0
            lo, hi = env.state_low[idx], env.state_high[idx]
            targets[:, idx] = (env.setpoints.targets[name] - lo) / (hi - lo)
        dist = np.stack([env.disturbances.disturbance_at(m, t) for t in range(T)]) \
            if m.n_d else np.zeros((T, 0))
        return cls(
            model=m, horizon=horizon, Q=Q, R=R,
            a_low=env.a_low.copy(), a_high=env.a_high.copy(),
            state_low=env.state_low.copy(), state_high=env.state_high.copy(),
            dt=env.dt, T=T, target_schedule=targets, target_mask=mask,
            disturbance_schedule=dist, constraints=env.constraints,
            integrator=env.integrator, **overrides,
        )


@dataclass
class OcpSolution:
    controls: np.ndarray  # (N, n_u) raw units
    controls_normalized: np.ndarray  # (N, n_u) in [0, 1]
    predicted_states: np.ndarray  # (N+1, n_x) raw units
    objective: float  # tracking + move cost (no penalty term)
    penalty_value: float  # penalty term at the final weight
    converged: bool
    feasible: bool
    penalty_weight_used: float
    iterations: int
    grad_norm: float
    violation_history: list[float] = field(default_factory=list)
    message: str = ""


class _OcpProblem:
    """Batched objective evaluation for one solve at a fixed start step."""

    def __init__(self, spec: OcpSpec, x_t: np.ndarray, u_prev: np.ndarray | None,
                 t: int):
        self.spec = spec
        self.x_t = np.asarray(x_t, dtype=float)
        self.t = t
        m = spec.model
        N = spec.horizon
        self.n_z = N * m.n_u
        self.u_prev_bar = None if u_prev is None else normalize(
            u_prev, spec.a_low, spec.a_high)
        self.has_R = bool(np.any(spec.R))
        self.has_cons = len(spec.constraints) > 0
        # one fixed target per solve (the setpoint governing the first stage);
        # the receding horizon picks up schedule changes step by step
        self.targets = spec.target_schedule[min(t + 1, spec.T - 1)]  # (n_x,)
        didx = [min(t + k, spec.T - 1) for k in range(N)]
        self.disturbances = spec.disturbance_schedule[didx]  # (N, n_d)
        self._fast = batch_rollout(m)
        margin = spec.constraint_margin_frac * (spec.state_high - spec.state_low)
        names = m.state_names
        self.cons_margin = np.array(
            [margin[names.index(c.state)] for c in spec.constraints.constraints])
        self.a_span = spec.a_high - spec.a_low
        self.s_lo = spec.state_low
        self.s_span = spec.state_high - spec.state_low

    def rollout(self, Z: np.ndarray) -> np.ndarray:
        """Predicted states for a batch of flattened control sequences."""
        spec = self.spec
        m = spec.model
        B = Z.shape[0]
        N = spec.horizon
        U = spec.a_low + Z.reshape(B, N, m.n_u) * self.a_span
        if self._fast is not None:
            return self._fast(self.x_t, np.ascontiguousarray(U),
                              self.disturbances, spec.dt, spec.integrator.substeps)
        states = np.empty((B, N + 1, m.n_x))
        states[:, 0] = self.x_t
        x = np.broadcast_to(self.x_t, (B, m.n_x)).copy()
        kernel, params = m.kernel, m.params
        h = spec.dt / spec.integrator.substeps
        for k in range(N):
            u = U[:, k]
            d = np.broadcast_to(self.disturbances[k], (B, self.disturbances.shape[1]))
            for _ in range(spec.integrator.substeps):
                k1 = kernel(x, u, d, params)
                k2 = kernel(x + 0.5 * h * k1, u, d, params)
                k3 = kernel(x + 0.5 * h * k2, u, d, params)
                k4 = kernel(x + h * k3, u, d, params)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[:, k + 1] = x
        return states

    def costs(self, Z: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(tracking+move, penalty, max raw violation) per batch row.

        Rows whose predicted trajectory leaves the finite range get a large
        objective that decreases the later the blow-up happens, so the
        optimizer is steered away from the cliff instead of stalling on a
        flat plateau.
        """
        spec = self.spec
        m = spec.model
        B = Z.shape[0]
        N = spec.horizon
        with np.errstate(all="ignore"):
            states = self.rollout(Z)
            finite = np.isfinite(states).all(axis=2)  # (B, N+1)
            good = finite.all(axis=1)
            x_bar = (states[:, 1:] - self.s_lo) / self.s_span  # (B, N, n_x)
            dev = (x_bar - self.targets) * spec.target_mask
            J = np.einsum("bki,ij,bkj->b", dev, spec.Q, dev)
            if self.has_R:
                U_bar = Z.reshape(B, N, m.n_u)
                if self.u_prev_bar is None:
                    dU = np.diff(U_bar, axis=1)  # first move is free
                else:
                    prev = np.concatenate(
                        [np.broadcast_to(self.u_prev_bar, (B, 1, m.n_u)),
                         U_bar[:, :-1]], axis=1)
                    dU = U_bar - prev
                J += np.einsum("bki,ij,bkj->b", dU, spec.R, dU)
            penalty = np.zeros(B)
            viol = np.full(B, -np.inf)
            if self.has_cons:
                g = spec.constraints.values(states[:, 1:])  # (B, N, n_g)
                # tightened constraints keep the penalty optimum strictly feasible
                penalty = mu * np.sum(np.maximum(0.0, g + self.cons_margin),
                                      axis=(1, 2))
                viol = np.max(g, axis=(1, 2))
        if not np.all(good):
            first_bad = np.argmin(finite, axis=1)  # stage of first non-finite state
            doom = _BLOWUP_OBJECTIVE * (N + 2 - first_bad)
            J = np.where(good, J, doom)
            penalty = np.where(good, penalty, 0.0)
            viol = np.where(good, viol, np.inf)
        return J, penalty, viol

    def fun_and_grad(self, z: np.ndarray, mu: float):
        h = self.spec.fd_step
        Z = np.repeat(z[None, :], self.n_z + 1, axis=0)
        Z[1:] += np.eye(self.n_z) * h
        J, penalty, _ = self.costs(Z, mu)
        total = J + penalty
        total = np.where(np.isfinite(total), total, _BLOWUP_OBJECTIVE * (self.spec.horizon + 2))
        return total[0], (total[1:] - total[0]) / h


def solve_ocp(spec: OcpSpec, x_t, u_prev=None, t: int = 0,
              initial_guess: np.ndarray | None = None) -> OcpSolution:
    """Solve the N-step OCP from raw state x_t at absolute step t.

    Returns the best iterate with convergence and feasibility flags; never
    raises on non-convergence.
    """
    x_t = np.asarray(x_t, dtype=float)
    if not np.all(np.isfinite(x_t)):
        raise ValueError(f"solve_ocp: non-finite state {x_t!r}")
    prob = _OcpProblem(spec, x_t, u_prev, t)
    m = spec.model

    guesses = []
    if initial_guess is not None:
        guesses.append(np.clip(np.asarray(initial_guess, dtype=float).reshape(-1), 0.0, 1.0))
    elif prob.u_prev_bar is not None:
        guesses.append(np.tile(np.clip(prob.u_prev_bar, 0.0, 1.0), spec.horizon))
    else:
        guesses.append(np.full(prob.n_z, 0.5))
    if spec.multistart > 1:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[170258, t]))
        for _ in range(spec.multistart - 1):
            guesses.append(rng.uniform(0.0, 1.0, prob.n_z))
    # spare starts, tried only when every primary start predicts a blow-up
    fallbacks = [np.full(prob.n_z, 0.5)]
    if prob.u_prev_bar is not None:
        fallbacks.insert(0, np.tile(np.clip(prob.u_prev_bar, 0.0, 1.0), spec.horizon))

    bounds = [(0.0, 1.0)] * prob.n_z

    def attempt(z0, mu):
        return minimize(
            prob.fun_and_grad, z0, args=(mu,), method="L-BFGS-B", jac=True,
            bounds=bounds,
            options={"maxiter": spec.max_iterations, "ftol": 1e-14,
                     "gtol": spec.tolerance, "maxcor": 20},
        )

    mu = spec.penalty_weight
    violation_history: list[float] = []
    z_best = guesses[0]
    res_best = None
    for _ in range(spec.penalty_escalations + 1):
        best = None
        for z0 in guesses:
            res = attempt(z0, mu)
            if best is None or res.fun < best.fun:
                best = res
        if best.fun >= _BLOWUP_OBJECTIVE:
            for z0 in fallbacks:
                res = attempt(z0, mu)
                if res.fun < best.fun:
                    best = res
                if best.fun < _BLOWUP_OBJECTIVE:
                    break
        z_best = best.x
        res_best = best
        _, _, viol = prob.costs(z_best[None, :], mu)
        max_viol = float(viol[0])
        if not prob.has_cons:
            break
        violation_history.append(max_viol)
        if max_viol <= 0.0:
            break
        mu *= 10.0
        guesses = [z_best]  # escalations continue from the current iterate

    J, penalty, viol = prob.costs(z_best[None, :], mu)
    states = prob.rollout(z_best[None, :])[0]
    controls_bar = z_best.reshape(spec.horizon, m.n_u)
    controls = spec.a_low + controls_bar * (spec.a_high - spec.a_low)
    feasible = (not prob.has_cons) or float(viol[0]) <= 0.0
    # projected gradient: bound-blocked components do not count
    grad = np.asarray(res_best.jac, dtype=float)
    pg = grad.copy()
    pg[(z_best <= 0.0) & (grad > 0.0)] = 0.0
    pg[(z_best >= 1.0) & (grad < 0.0)] = 0.0
    pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
    # a line-search stall at a negligible projected gradient is convergence
    # at the resolution the forward differences support
    converged = bool(res_best.success) or pg_norm <= max(spec.tolerance, 1e-5)
    return OcpSolution(
        controls=controls,
        controls_normalized=controls_bar,
        predicted_states=states,
        objective=float(J[0]),
        penalty_value=float(penalty[0]),
        converged=converged,
        feasible=feasible,
        penalty_weight_used=mu,
        iterations=int(res_best.nit),
        grad_norm=pg_norm,
        violation_history=violation_history,
        message=str(res_best.message),
    )


class OraclePolicy(Policy):
    """Receding-horizon policy: solve, apply the first control, shift, repeat.

    Reads the environment's raw (noise-free) state. Subsequent solves are
    warm-started from the previous solution shifted by one step.
    """

    label = "oracle"

    def __init__(self, spec: OcpSpec):
        self.spec = spec
        self._warm: np.ndarray | None = None
        self._last_u: np.ndarray | None = None
        self.diagnostics: list[dict] = []

    def reset(self, seed=None) -> None:
        self._warm = None
        self._last_u = None
        self.diagnostics = []

    def act(self, view: StepView) -> np.ndarray:
        if view.raw_state is None:
            raise ValueError("oracle policy needs the raw state")
        sol = solve_ocp(self.spec, view.raw_state, self._last_u, t=view.t,
                        initial_guess=self._warm)
        warm = np.concatenate([sol.controls_normalized[1:],
                               sol.controls_normalized[-1:]])
        self._warm = warm.reshape(-1)
        self._last_u = sol.controls[0]
        self.diagnostics.append({
            "t": view.t,
            "iterations": sol.iterations,
            "objective": sol.objective,
            "penalty_value": sol.penalty_value,
            "penalty_weight": sol.penalty_weight_used,
            "grad_norm": sol.grad_norm,
            "converged": sol.converged,
            "feasible": sol.feasible,
        })
        return sol.controls[0]


def mpc_policy(spec: OcpSpec) -> OraclePolicy:
    return OraclePolicy(spec)
