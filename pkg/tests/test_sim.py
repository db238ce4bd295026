"""Fixed-step RK4 integrator behavior."""

import math

import numpy as np
import pytest

from procbench.errors import ConfigurationError, IntegrationError
from procbench.models import ModelDescriptor, model_registry
from procbench.sim import IntegratorConfig, integrate, rk4


def test_identity_dynamics():
    x = rk4(lambda s: np.zeros_like(s), np.array([1.0, -2.0]), 7.3, 10)
    np.testing.assert_array_equal(x, [1.0, -2.0])


def test_exponential_decay_accuracy():
    x = rk4(lambda s: -s, np.array([1.0]), 1.0, 10)
    assert abs(x[0] - math.exp(-1.0)) < 1e-6


def test_fourth_order_convergence():
    e10 = abs(rk4(lambda s: -s, np.array([1.0]), 1.0, 10)[0] - math.exp(-1.0))
    e20 = abs(rk4(lambda s: -s, np.array([1.0]), 1.0, 20)[0] - math.exp(-1.0))
    assert 12.0 < e10 / e20 < 20.0


def test_blowup_reports_substep():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(IntegrationError) as err:
            rk4(lambda s: s * s, np.array([1.0]), 50.0, 8)
    assert 0 <= err.value.substep < 8


def test_bitwise_determinism():
    f = lambda s: np.sin(s) - 0.3 * s  # noqa: E731
    a = rk4(f, np.array([0.7, 0.1]), 2.0, 16)
    b = rk4(f, np.array([0.7, 0.1]), 2.0, 16)
    assert np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ConfigurationError, match="substeps"):
        IntegratorConfig(substeps=0)
    with pytest.raises(ConfigurationError, match="method"):
        IntegratorConfig(method="euler")


def test_integrate_model_interface():
    m = model_registry("cstr")
    x1 = integrate(m, [0.8, 330.0], [300.0], None, 0.5, IntegratorConfig(substeps=10))
    assert x1.shape == (2,)
    with pytest.raises(ConfigurationError, match="dt"):
        integrate(m, [0.8, 330.0], [300.0], None, 0.0)
    with pytest.raises(ValueError, match="non-finite"):
        integrate(m, [np.inf, 330.0], [300.0], None, 0.5)


def test_integrate_zero_order_hold():
    # the control seen by the rhs must stay constant across the interval
    seen = []

    def kernel(x, u, d, p):
        seen.append(float(np.atleast_1d(u)[..., 0] if np.ndim(u) else u))
        return np.zeros_like(x)

    m = ModelDescriptor(name="probe", state_names=("x",), input_names=("u",),
                        disturbance_names=(), params={}, default_disturbances={},
                        kernel=lambda x, u, d, p: kernel(x, u, d, p))
    integrate(m, [0.0], [3.5], None, 1.0, IntegratorConfig(substeps=4))
    assert seen == [3.5] * 16  # 4 rhs evaluations per substep


def test_integrate_uses_model_default_substeps():
    m = model_registry("crystallization")
    assert m.default_substeps == 30
    x0 = [1e3, 1e5, 1.01e7, 1.03e9, 0.167]
    a = integrate(m, x0, [30.0], None, 1.0)
    b = integrate(m, x0, [30.0], None, 1.0, IntegratorConfig(substeps=30))
    assert np.array_equal(a, b)
