"""Fixed-step integration of a model over one control interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .models import ModelDescriptor


@dataclass(frozen=True)
class IntegratorConfig:
    substeps: int = 10
    method: str = "rk4"

    def __post_init__(self):
        if self.substeps < 1:
            raise ConfigurationError("integrator.substeps", "must be >= 1")
        if self.method != "rk4":
            raise ConfigurationError("integrator.method", f"unknown method {self.method!r}")


def rk4(f, x0, dt: float, substeps: int) -> np.ndarray:
    """Classic fourth-order Runge-Kutta for autonomous f(x) over [0, dt].

    Raises :class:`IntegrationError` with the failing substep index when a
    non-finite state appears.
    """
    h = dt / substeps
    x = np.asarray(x0, dtype=float)
    for i in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(i, f"integration blew up, state {x!r}")
    return x


def integrate(model: ModelDescriptor, x, u, d=None, dt: float = 1.0,
              cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Advance the model state over one control interval of length dt.

    The input u and disturbance d are held constant over the interval
    (zero-order hold). Supports batched states/inputs with a trailing
    component axis.
    """
    if dt <= 0.0:
        raise ConfigurationError("dt", "control interval must be positive")
    if cfg is None:
        cfg = IntegratorConfig(substeps=model.default_substeps)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if d is None:
        d = np.array([model.default_disturbances[n] for n in model.disturbance_names])
    d = np.asarray(d, dtype=float)
    for label, arr in (("state", x), ("input", u), ("disturbance", d)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"integrate: non-finite {label}: {arr!r}")
    params = model.params
    kernel = model.kernel
    return rk4(lambda s: kernel(s, u, d, params), x, dt, cfg.substeps)
