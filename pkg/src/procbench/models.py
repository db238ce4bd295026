"""Process models: parameterized ODE right-hand sides and derived outputs.

Each model is described by a :class:`ModelDescriptor` whose parameters are
read from a versioned YAML document under ``data/models/``. Right-hand
sides are vectorized over leading batch dimensions: states of shape
``(..., n_x)``, inputs ``(..., n_u)`` and disturbances ``(..., n_d)``
produce derivatives of shape ``(..., n_x)``.

The public ``*_rhs`` functions validate their inputs. The unchecked
kernels stored on the descriptors are used by the integrator, which runs
its own blow-up detection per substep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Mapping

import numpy as np
import yaml

from .errors import UndefinedOutputError, UnknownModelError

Params = Mapping[str, float]
RhsKernel = Callable[[np.ndarray, np.ndarray, np.ndarray, Params], np.ndarray]


@dataclass(frozen=True)
class ModelDescriptor:
    """A named ODE system with labelled states, inputs and disturbances."""

    name: str
    state_names: tuple[str, ...]
    input_names: tuple[str, ...]
    disturbance_names: tuple[str, ...]
    params: dict[str, float]
    default_disturbances: dict[str, float]
    kernel: RhsKernel = field(repr=False)
    default_substeps: int = 10
    outputs: Callable[[np.ndarray], "CrystallizationOutputs"] | None = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1:
            raise ValueError(f"{self.name}: models need at least one state and one input")
        missing = [d for d in self.disturbance_names if d not in self.default_disturbances]
        if missing:
            raise ValueError(f"{self.name}: disturbances without default values: {missing}")

    @property
    def n_x(self) -> int:
        return len(self.state_names)

    @property
    def n_u(self) -> int:
        return len(self.input_names)

    @property
    def n_d(self) -> int:
        return len(self.disturbance_names)

    def rhs(self, x, u, d=None) -> np.ndarray:
        """Validated derivative evaluation (the checked public entry point)."""
        x, u, d = _check_rhs_inputs(self, x, u, d)
        return self.kernel(x, u, d, self.params)


@dataclass(frozen=True)
class CrystallizationOutputs:
    """Controlled variables derived from the crystal size distribution."""

    mean_length: float  # number-mean crystal size [um]
    cv: float  # coefficient of variation [-]


def _check_rhs_inputs(model: ModelDescriptor, x, u, d):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if d is None:
        d = np.array([model.default_disturbances[n] for n in model.disturbance_names])
        d = np.broadcast_to(d, x.shape[:-1] + (model.n_d,))
    d = np.asarray(d, dtype=float)
    for label, arr, n in (("state", x, model.n_x), ("input", u, model.n_u),
                          ("disturbance", d, model.n_d)):
        if arr.shape[-1:] != (n,):
            raise ValueError(f"{model.name}: {label} vector must have {n} entries, "
                             f"got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{model.name}: non-finite {label} rejected: {arr!r}")
    return x, u, d


# ---------------------------------------------------------------------------
# CSTR: irreversible A -> B with Arrhenius kinetics and jacket cooling.
# ---------------------------------------------------------------------------

def _cstr_kernel(x, u, d, p):
    Ca = x[..., 0]
    T = x[..., 1]
    Tc = u[..., 0]
    Ti = d[..., 0]
    Caf = d[..., 1]
    rA = p["k0"] * np.exp(-p["EA_over_R"] / T) * Ca
    dCa = p["q"] / p["V"] * (Caf - Ca) - rA
    dT = (p["q"] / p["V"] * (Ti - T)
          + (-p["dH_r"]) * rA / p["rho_Cp"]
          + p["UA"] / (p["rho_Cp"] * p["V"]) * (Tc - T))
    return np.stack([dCa, dT], axis=-1)


def cstr_rhs(x, u, d=None, params: Params | None = None) -> np.ndarray:
    """CSTR derivative: x = [Ca, T], u = [Tc], d = [Ti, Caf]."""
    model = model_registry("cstr")
    x, u, d = _check_rhs_inputs(model, x, u, d)
    if np.any(x[..., 1] <= 0.0):
        raise ValueError(f"cstr: absolute temperature must be positive, got {x[..., 1]!r}")
    return _cstr_kernel(x, u, d, params or model.params)


# ---------------------------------------------------------------------------
# Multistage extraction: five counter-current liquid/gas stages.
# ---------------------------------------------------------------------------

_NEG_CONC_TOL = -1e-9


def _extraction_kernel(x, u, d, p):
    X = x[..., 0:5]  # liquid, stage 1..5
    Y = x[..., 5:10]  # gas, stage 1..5
    L = u[..., 0:1]
    G = u[..., 1:2]
    X0 = d[..., 0:1]
    Y6 = d[..., 1:2]
    # stage equilibrium and transfer rate out of the liquid phase
    X_eq = Y ** p["eq_exponent"] / p["m"]
    F = p["Kla"] * (X - X_eq) * p["Vl"]
    X_in = np.concatenate([X0, X[..., :-1]], axis=-1)   # liquid flows 1 -> 5
    Y_in = np.concatenate([Y[..., 1:], Y6], axis=-1)    # gas flows 5 -> 1
    dX = (L * (X_in - X) - F) / p["Vl"]
    dY = (G * (Y_in - Y) + F) / p["Vg"]
    return np.concatenate([dX, dY], axis=-1)


def extraction_rhs(x, u, d=None, params: Params | None = None) -> np.ndarray:
    """Extraction derivative: x = [X1..X5, Y1..Y5], u = [L, G], d = [X0, Y6]."""
    model = model_registry("multistage_extraction")
    x, u, d = _check_rhs_inputs(model, x, u, d)
    if np.any(u < 0.0):
        raise ValueError(f"multistage_extraction: flowrates must be nonnegative, got {u!r}")
    if np.any(x < _NEG_CONC_TOL):
        raise ValueError("multistage_extraction: negative concentration beyond "
                         f"tolerance {_NEG_CONC_TOL}: {x!r}")
    return _extraction_kernel(x, u, d, params or model.params)


# ---------------------------------------------------------------------------
# Crystallization: moment model of a potassium sulfate batch crystallizer.
# ---------------------------------------------------------------------------

def crystallization_kinetics(x, T, params: Params | None = None):
    """Supersaturation S, nucleation rate B0 and growth rate Ginf.

    Exposed separately so trajectories can be audited: both rates are
    exactly zero whenever S <= 0 (no kinetics in undersaturated solution).
    """
    p = params or model_registry("crystallization").params
    x = np.asarray(x, dtype=float)
    T = np.asarray(T, dtype=float)
    TK = T + 273.15
    C_eq = -686.2686 + 3.579165 * TK - 0.00292874 * TK ** 2
    S = x[..., 4] * 1e3 - C_eq
    if not np.all(np.isfinite(S)):
        raise ValueError(f"crystallization: non-finite supersaturation from state {x!r}")
    # (S^2)^(kc/2) is evaluated on max(S, 0) so rates stay real and vanish
    # for undersaturated solutions; likewise (mu3^2)^(kd/2) on max(mu3, 0).
    S_pos = np.maximum(S, 0.0)
    mu3_pos = np.maximum(x[..., 3], 0.0)
    B0 = p["ka"] * np.exp(p["kb"] / TK) * S_pos ** p["kc"] * mu3_pos ** p["kd"]
    Ginf = p["kg"] * np.exp(p["k1"] / TK) * S_pos ** p["k2"]
    return S, B0, Ginf


def _crystallization_kernel(x, u, d, p):
    mu0, mu1, mu2, mu3 = (x[..., i] for i in range(4))
    _, B0, Ginf = crystallization_kinetics(x, u[..., 0], p)
    a, b = p["a"], p["b"]
    size_term2 = a * mu1 * 1e-4 + b * mu2 * 1e-8
    size_term3 = a * mu2 * 1e-8 + b * mu3 * 1e-12
    dmu0 = B0
    dmu1 = Ginf * (a * mu0 + b * mu1 * 1e-4) * 1e4
    dmu2 = 2.0 * Ginf * size_term2 * 1e8
    dmu3 = 3.0 * Ginf * size_term3 * 1e12
    dconc = -0.5 * p["rho"] * p["alpha"] * Ginf * size_term3
    return np.stack([dmu0, dmu1, dmu2, dmu3, dconc], axis=-1)


def crystallization_rhs(x, u, d=None, params: Params | None = None) -> np.ndarray:
    """Crystallizer derivative: x = [mu0, mu1, mu2, mu3, conc], u = [T degC]."""
    model = model_registry("crystallization")
    x, u, d = _check_rhs_inputs(model, x, u, d)
    return _crystallization_kernel(x, u, d, params or model.params)


def crystallization_outputs(x) -> CrystallizationOutputs:
    """Mean crystal length and coefficient of variation from the moments."""
    x = np.asarray(x, dtype=float)
    mu0, mu1, mu2 = float(x[..., 0]), float(x[..., 1]), float(x[..., 2])
    if mu0 <= 0.0 or mu1 <= 0.0:
        raise UndefinedOutputError(
            f"crystal size statistics undefined for mu0={mu0}, mu1={mu1}")
    mean_length = mu1 / mu0
    cv = float(np.sqrt(max(mu0 * mu2 / mu1 ** 2 - 1.0, 0.0)))
    return CrystallizationOutputs(mean_length=mean_length, cv=cv)


# ---------------------------------------------------------------------------
# Four-tank system: two pumps feeding four coupled water tanks.
# ---------------------------------------------------------------------------

def _four_tank_kernel(x, u, d, p):
    # outflows are computed on max(h, 0) so the square roots never see
    # negative levels produced by integration round-off
    h = np.maximum(x, 0.0)
    v1 = u[..., 0]
    v2 = u[..., 1]
    out = [np.sqrt(2.0 * p["g"] * h[..., i]) for i in range(4)]
    dh1 = (-p["a1"] * out[0] + p["a3"] * out[2] + p["gamma1"] * p["k1"] * v1) / p["A1"]
    dh2 = (-p["a2"] * out[1] + p["a4"] * out[3] + p["gamma2"] * p["k2"] * v2) / p["A2"]
    dh3 = (-p["a3"] * out[2] + (1.0 - p["gamma2"]) * p["k2"] * v2) / p["A3"]
    dh4 = (-p["a4"] * out[3] + (1.0 - p["gamma1"]) * p["k1"] * v1) / p["A4"]
    return np.stack([dh1, dh2, dh3, dh4], axis=-1)


def four_tank_rhs(x, u, d=None, params: Params | None = None) -> np.ndarray:
    """Four-tank derivative: x = [h1..h4], u = [v1, v2]."""
    model = model_registry("four_tank")
    x, u, d = _check_rhs_inputs(model, x, u, d)
    if np.any(u < 0.0):
        raise ValueError(f"four_tank: pump voltages must be nonnegative, got {u!r}")
    return _four_tank_kernel(x, u, d, params or model.params)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_KERNELS: dict[str, RhsKernel] = {
    "cstr": _cstr_kernel,
    "multistage_extraction": _extraction_kernel,
    "crystallization": _crystallization_kernel,
    "four_tank": _four_tank_kernel,
}

_OUTPUTS = {"crystallization": crystallization_outputs}

_registry_cache: dict[str, ModelDescriptor] = {}


def _load_descriptor(name: str) -> ModelDescriptor:
    ref = resources.files("procbench.data.models").joinpath(f"{name}.yaml")
    doc = yaml.safe_load(ref.read_text())
    return ModelDescriptor(
        name=doc["name"],
        state_names=tuple(doc["states"]),
        input_names=tuple(doc["inputs"]),
        disturbance_names=tuple(doc["disturbances"]),
        params={k: float(v) for k, v in doc["params"].items()},
        default_disturbances={k: float(v) for k, v in (doc["defaults"] or {}).items()},
        kernel=_KERNELS[name],
        default_substeps=int(doc.get("default_substeps", 10)),
        outputs=_OUTPUTS.get(name),
    )


def available_models() -> tuple[str, ...]:
    return tuple(sorted(_KERNELS))


def model_registry(name: str) -> ModelDescriptor:
    """Look up a fully parameterized model descriptor by name."""
    if name not in _KERNELS:
        raise UnknownModelError(name, available_models())
    if name not in _registry_cache:
        _registry_cache[name] = _load_descriptor(name)
    return _registry_cache[name]
