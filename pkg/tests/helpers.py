"""Shared test fixtures: a linear benchmark system and its exact solution.

The Riccati recursion here is the independent reference for the OCP solver:
it solves the same finite-horizon problem (quadratic tracking in normalized
coordinates, move cost on normalized control increments) in closed form on
the augmented system z = [x_bar; u_bar_prev], v = control move.
"""

import numpy as np

from procbench.env import EnvConfig
from procbench.models import ModelDescriptor
from procbench.oracle import OcpSpec
from procbench.scenario import ConstraintSet
from procbench.sim import IntegratorConfig

DINT_DT = 0.1
DINT_XLO = np.array([-4.0, -4.0])
DINT_XHI = np.array([4.0, 4.0])
DINT_ULO = np.array([-50.0])
DINT_UHI = np.array([50.0])


def double_integrator_model() -> ModelDescriptor:
    def kernel(x, u, d, p):
        return np.stack([x[..., 1], u[..., 0] + 0.0 * x[..., 0]], axis=-1)

    return ModelDescriptor(
        name="double_integrator", state_names=("p", "v"), input_names=("a",),
        disturbance_names=(), params={}, default_disturbances={}, kernel=kernel)


def double_integrator_spec(N: int, R: np.ndarray, T: int = 40,
                           **overrides) -> OcpSpec:
    model = double_integrator_model()
    target = np.tile((0.0 - DINT_XLO) / (DINT_XHI - DINT_XLO), (T, 1))
    return OcpSpec(
        model=model, horizon=N, Q=np.eye(2), R=R,
        a_low=DINT_ULO, a_high=DINT_UHI,
        state_low=DINT_XLO, state_high=DINT_XHI, dt=DINT_DT, T=T,
        target_schedule=target, target_mask=np.ones(2),
        disturbance_schedule=np.zeros((T, 0)),
        constraints=ConstraintSet.create([], model),
        integrator=IntegratorConfig(substeps=10),
        tolerance=overrides.pop("tolerance", 1e-10),
        max_iterations=overrides.pop("max_iterations", 500),
        **overrides)


def riccati_first_control(x0, u_prev, N: int, R: np.ndarray) -> np.ndarray:
    """Exact first control of the finite-horizon problem solved by the OCP.

    Backward recursion for an affine system with quadratic stage costs: the
    value function is quadratic with a linear term, both propagated exactly.
    RK4 reproduces the zero-order-hold discretization of the double
    integrator exactly (the system matrix is nilpotent), so A_d and B_d are
    written in closed form.
    """
    A_d = np.array([[1.0, DINT_DT], [0.0, 1.0]])
    B_d = np.array([[0.5 * DINT_DT ** 2], [DINT_DT]])
    D = np.diag(DINT_XHI - DINT_XLO)
    E = np.diag(DINT_UHI - DINT_ULO)
    Dinv = np.linalg.inv(D)
    A_bar = Dinv @ A_d @ D
    B_bar = Dinv @ B_d @ E
    c_bar = Dinv @ ((A_d - np.eye(2)) @ DINT_XLO + B_d @ DINT_ULO)

    nz = 3  # [p_bar, v_bar, prev control]
    At = np.zeros((nz, nz))
    At[:2, :2] = A_bar
    At[:2, 2:] = B_bar
    At[2, 2] = 1.0
    Bt = np.vstack([B_bar, np.eye(1)])
    ct = np.concatenate([c_bar, [0.0]])
    Qt = np.zeros((nz, nz))
    Qt[:2, :2] = np.eye(2)
    z_star = np.concatenate([(0.0 - DINT_XLO) / (DINT_XHI - DINT_XLO), [0.0]])

    P = np.zeros((nz, nz))
    q = np.zeros(nz)
    K0 = kff0 = None
    for _ in range(N):
        M = Qt + P
        m = q - Qt @ z_star
        S = R + Bt.T @ M @ Bt
        K = np.linalg.solve(S, Bt.T @ M @ At)
        kff = np.linalg.solve(S, Bt.T @ (M @ ct + m))
        P = At.T @ M @ At - K.T @ S @ K
        P = 0.5 * (P + P.T)
        q = At.T @ (M @ ct + m) - K.T @ S @ kff
        K0, kff0 = K, kff

    p0 = (np.asarray(u_prev, dtype=float) - DINT_ULO) / (DINT_UHI - DINT_ULO)
    z0 = np.concatenate([(np.asarray(x0, dtype=float) - DINT_XLO)
                         / (DINT_XHI - DINT_XLO), p0])
    v0 = -K0 @ z0 - kff0
    return DINT_ULO + (DINT_UHI - DINT_ULO) * (p0 + v0)


def mini_cstr_config(T: int = 8, noise: float = 0.0, **overrides) -> EnvConfig:
    base = dict(
        model="cstr", T=T, tsim=T * 25.0 / 60.0,
        setpoints={"Ca": [0.85] * T},
        a_space=([295.0], [302.0]),
        o_space=([0.7, 300.0, 0.8], [1.0, 350.0, 0.9]),
        x0=[0.8, 330.0, 0.85],
        noise_percentage=noise,
    )
    base.update(overrides)
    return EnvConfig(**base)
